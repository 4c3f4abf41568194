//! Experiment orchestration behind the CLI subcommands: trace ingestion and
//! synthesis, training with logs and checkpoints, deterministic evaluation,
//! multi-run comparison and report regeneration.
//!
//! Every run directory receives the fully resolved configuration
//! (`config.resolved`) and the exact trace used (`trace.json`); re-running
//! from those reproduces outputs bit-exactly on the same build.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::agents::checkpoint::Checkpoint;
use crate::agents::{Agent, AgentKind, DdqnAgent, PpoAgent};
use crate::config::RunConfig;
use crate::envloop::SimEnv;
use crate::error::{Error, Result};
use crate::telemetry::{
    comparison_csv, comparison_markdown, parse_series_csv, summarize, write_reports, RunSummary,
};
use crate::trace::{ingest, parse_csv, IngestConfig, SplitLabel, WorkloadTrace};
use crate::training::{
    ddqn_log_row, evaluate, train_ddqn, train_log_row, train_ppo, DDQN_LOG_HEADER,
    TRAIN_LOG_HEADER,
};

/// Environment variable that re-roots relative output directories.
pub const OUT_ROOT_ENV: &str = "SCALEBENCH_OUT";

/// Relative output paths resolve under `$SCALEBENCH_OUT` when set.
pub fn resolve_out_dir(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(dir),
        None => dir.to_path_buf(),
    }
}

/// Builds the workload trace named by the config: a canonical `.json` trace,
/// a `.csv` to ingest, or the synthetic generator when no path is given.
pub fn load_or_build_trace(cfg: &RunConfig) -> Result<WorkloadTrace> {
    match &cfg.trace_path {
        None => crate::trace::synthesize(&cfg.synth_config()),
        Some(path) => match path.extension().and_then(|e| e.to_str()) {
            Some("json") => WorkloadTrace::load(path),
            Some("csv") => {
                let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let (rows, format) = parse_csv(file)?;
                ingest(
                    &rows,
                    format,
                    &IngestConfig {
                        seed: cfg.seed ^ crate::config::streams::TRACE,
                        days: cfg.trace.days,
                        train_days: cfg.trace.train_days,
                        steps_per_day: cfg.trace.steps_per_day,
                        step_seconds: cfg.trace.step_seconds,
                        functions: None,
                    },
                )
            }
            _ => Err(Error::data(format!(
                "trace_path {} must end in .json or .csv",
                path.display()
            ))),
        },
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn apply_overrides(cfg: &mut RunConfig, seed: Option<u64>, out: Option<PathBuf>) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
}

/// Trains the configured agent, writes logs, checkpoints, and a full test
/// evaluation (summary.json + series) into the output directory.
pub fn cmd_train(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    apply_overrides(&mut cfg, seed, out);
    cfg.validate()?;

    // Fail before creating any outputs if the trace is unusable.
    let trace = load_or_build_trace(&cfg)?;
    let out_dir = resolve_out_dir(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_text(&out_dir.join("config.resolved"), &cfg.to_config_string())?;
    trace.save(&out_dir.join("trace.json"))?;

    let env_cfg = cfg.env_config(&trace);
    let ckpt_path = out_dir.join("checkpoint.json");
    let agent = match cfg.agent {
        AgentKind::AttnDoubleLstmPpo | AgentKind::SingleLstmPpo => {
            let mut agent = PpoAgent::new(cfg.agent, cfg.seed)?;
            let mut env = SimEnv::new(trace.clone(), SplitLabel::Train, env_cfg.clone())?;
            let log_path = out_dir.join("training_log.csv");
            let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
            writeln!(log, "{TRAIN_LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;
            let every = cfg.checkpoint_every_updates;
            let train_result = train_ppo(
                &mut agent,
                &mut env,
                cfg.train_episodes,
                &cfg.ppo,
                cfg.seed,
                |stats, agent| {
                    writeln!(log, "{}", train_log_row(stats))
                        .map_err(|e| Error::io(&log_path, e))?;
                    if every > 0 && (stats.update_idx + 1) % every == 0 {
                        let snap = Checkpoint::from_agent(&AgentRef::ppo(agent));
                        snap.save(&out_dir.join(format!(
                            "checkpoint_{:06}.json",
                            stats.update_idx + 1
                        )))?;
                    }
                    Ok(())
                },
            );
            let agent = Agent::Ppo(agent);
            // keep partial artifacts on divergence, then propagate
            Checkpoint::from_agent(&agent).save(&ckpt_path)?;
            train_result?;
            agent
        }
        AgentKind::Ddqn => {
            let mut agent = DdqnAgent::new(cfg.ddqn.clone(), cfg.seed)?;
            let mut env = SimEnv::new(trace.clone(), SplitLabel::Train, env_cfg.clone())?;
            let log_path = out_dir.join("training_log.csv");
            let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
            writeln!(log, "{DDQN_LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;
            let result = train_ddqn(&mut agent, &mut env, cfg.train_episodes, |stats, _| {
                writeln!(log, "{}", ddqn_log_row(stats)).map_err(|e| Error::io(&log_path, e))
            });
            let agent = Agent::Ddqn(agent);
            Checkpoint::from_agent(&agent).save(&ckpt_path)?;
            result?;
            agent
        }
        AgentKind::StaticHpa => {
            let agent = Agent::StaticHpa;
            Checkpoint::from_agent(&agent).save(&ckpt_path)?;
            agent
        }
    };

    let mut agent = agent;
    let mut eval_env = SimEnv::new(trace, SplitLabel::Test, env_cfg)?;
    let records = evaluate(&mut agent, &mut eval_env)?;
    let summary = summarize(&records, cfg.agent.as_str(), cfg.seed, &cfg.slo)?;
    write_reports(&out_dir, &records, &summary)?;
    log::info!(
        "trained {} seed {}: hard SLO {:.1}%, churn {}, P90 {:.1} ms",
        cfg.agent.as_str(),
        cfg.seed,
        100.0 * summary.hard_slo_compliance,
        summary.churn,
        summary.aggregate_p90_ms
    );
    Ok(out_dir)
}

// Checkpoint::from_agent borrows an Agent; wrap a PpoAgent reference without
// moving it out of the training loop.
struct AgentRef;
impl AgentRef {
    fn ppo(agent: &PpoAgent) -> Agent {
        Agent::Ppo(PpoAgent {
            kind: agent.kind,
            net: agent.net.clone(),
            adam: agent.adam.clone(),
            rec: agent.rec.clone(),
            rng: agent.rng.clone(),
        })
    }
}

/// Replays the configured split with exploration disabled and writes
/// telemetry reports. The TRAIN split is refused without `allow_train`.
pub fn cmd_evaluate(
    config_path: &Path,
    checkpoint: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    split: SplitLabel,
    allow_train: bool,
) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    apply_overrides(&mut cfg, seed, None);
    cfg.validate()?;
    if split == SplitLabel::Train && !allow_train {
        return Err(Error::Usage(
            "evaluating on the TRAIN split requires --allow-train-split".into(),
        ));
    }

    let mut agent = match (&checkpoint, cfg.agent) {
        (None, AgentKind::StaticHpa) => Agent::StaticHpa,
        (None, kind) => {
            return Err(Error::Usage(format!(
                "{} needs --checkpoint (only static_hpa is parameter-free)",
                kind.as_str()
            )))
        }
        (Some(path), kind) => Checkpoint::load(path)?.restore_as(kind)?,
    };

    let trace = load_or_build_trace(&cfg)?;
    let out_dir = resolve_out_dir(&out.unwrap_or_else(|| {
        cfg.out_dir.join(match split {
            SplitLabel::Test => "eval_test",
            SplitLabel::Train => "eval_train",
        })
    }));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_text(&out_dir.join("config.resolved"), &cfg.to_config_string())?;

    let env_cfg = cfg.env_config(&trace);
    let mut env = SimEnv::new(trace, split, env_cfg)?;
    let records = evaluate(&mut agent, &mut env)?;
    let summary = summarize(&records, cfg.agent.as_str(), cfg.seed, &cfg.slo)?;
    write_reports(&out_dir, &records, &summary)?;
    Ok(out_dir)
}

/// Joins the summaries of several completed runs into compare.csv plus a
/// markdown table with pairwise churn/P90 deltas.
pub fn cmd_compare(run_dirs: &[PathBuf], out: &Path) -> Result<()> {
    let mut summaries: Vec<RunSummary> = Vec::new();
    for dir in run_dirs {
        let path = dir.join("summary.json");
        match std::fs::read_to_string(&path) {
            Ok(text) => summaries.push(serde_json::from_str(&text)?),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if summaries.len() < 2 {
        return Err(Error::data(format!(
            "need at least 2 runs with summary.json, found {}",
            summaries.len()
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("compare.csv"), &comparison_csv(&summaries))?;
    write_text(&out.join("compare.md"), &comparison_markdown(&summaries))?;
    Ok(())
}

/// Regenerates summary.json and the distribution files of an existing run
/// directory from its series.csv.
pub fn cmd_report(run_dir: &Path) -> Result<()> {
    let cfg_path = run_dir.join("config.resolved");
    let cfg = RunConfig::load(&cfg_path)?;
    let series_path = run_dir.join("series.csv");
    let text = std::fs::read_to_string(&series_path).map_err(|e| Error::io(&series_path, e))?;
    let records = parse_series_csv(&text)?;
    let summary = summarize(&records, cfg.agent.as_str(), cfg.seed, &cfg.slo)?;
    write_reports(run_dir, &records, &summary)
}

/// Ingests a CSV invocation log into the canonical trace file.
pub fn cmd_ingest(
    input: &Path,
    out_path: &Path,
    seed: u64,
    days: usize,
    train_days: usize,
    steps_per_day: u32,
) -> Result<()> {
    let file = std::fs::File::open(input).map_err(|e| Error::io(input, e))?;
    let (rows, format) = parse_csv(file)?;
    let trace = ingest(
        &rows,
        format,
        &IngestConfig {
            seed: seed ^ crate::config::streams::TRACE,
            days,
            train_days,
            steps_per_day,
            step_seconds: 60,
            functions: None,
        },
    )?;
    trace.save(out_path)?;
    log::info!(
        "ingested {} rows into {} days x {} steps ({} train / {} test steps)",
        rows.len(),
        trace.days.len(),
        trace.steps_per_day,
        trace.split_len(SplitLabel::Train),
        trace.split_len(SplitLabel::Test)
    );
    Ok(())
}

/// Generates the synthetic diurnal+burst trace named by the config.
pub fn cmd_synthesize(config_path: Option<&Path>, seed: Option<u64>, out_path: &Path) -> Result<()> {
    let mut cfg = match config_path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let trace = crate::trace::synthesize(&cfg.synth_config())?;
    trace.save(out_path)?;
    log::info!(
        "synthesized {} days x {} steps, peak {} req/step",
        trace.days.len(),
        trace.steps_per_day,
        trace.peak()
    );
    Ok(())
}
