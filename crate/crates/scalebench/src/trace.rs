//! Workload traces: ingestion of serverless invocation logs into a canonical
//! per-step demand schedule, synthetic diurnal traces for experiments without
//! real data, and the train/test day split.
//!
//! Two CSV input forms are accepted (see README for column docs):
//!
//! * per-minute counts:   header `minute,function,count`
//! * per-invocation rows: header `timestamp,function[,duration]`, one row per
//!   call, timestamp in seconds
//!
//! Both normalize to per-minute totals summed across the selected functions,
//! then each sampled day's 1440 minutes are compressed to `steps_per_day`
//! contiguous bins. A step's demand is the bin mean scaled by the average
//! bin width (1440 / steps_per_day), rounded to the nearest integer, which
//! keeps a day's total request volume within rounding of the original.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: usize = 1440;

/// One raw input row. `timestamp` is a minute index for per-minute-count
/// files and a second offset for per-invocation files.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTraceRow {
    pub timestamp: u64,
    pub function_id: String,
    pub count_or_duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    /// `minute,function,count`: third column is an invocation count.
    PerMinuteCounts,
    /// `timestamp,function[,duration]`: one row per invocation.
    PerInvocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Test,
}

/// Canonical demand schedule: `days[d][t]` is the number of requests offered
/// during step `t` of day `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTrace {
    pub steps_per_day: u32,
    pub step_seconds: u32,
    pub days: Vec<Vec<u64>>,
    pub split: Vec<SplitLabel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub seed: u64,
    /// Number of whole days to sample from the input.
    pub days: usize,
    /// How many of the sampled days become the training split.
    pub train_days: usize,
    pub steps_per_day: u32,
    pub step_seconds: u32,
    /// Optional allowlist; when set, only these function ids contribute.
    pub functions: Option<Vec<String>>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            seed: 0,
            days: 7,
            train_days: 5,
            steps_per_day: 500,
            step_seconds: 60,
            functions: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub days: usize,
    pub train_days: usize,
    pub steps_per_day: u32,
    pub step_seconds: u32,
    /// Mean request rate per step of the diurnal sinusoid.
    pub base_rate: f64,
    /// Peak-to-mean amplitude of the sinusoid.
    pub amplitude: f64,
    /// Per-step probability that a burst episode starts.
    pub burst_prob: f64,
    /// Demand multiplier drawn uniformly from this range at the burst peak.
    pub burst_mult_min: f64,
    pub burst_mult_max: f64,
    /// Plateau length in steps, drawn uniformly from this range.
    pub burst_len_min: u32,
    pub burst_len_max: u32,
    /// Maximum ramp-in length. Each burst draws r in 1..=max and climbs
    /// geometrically: step k of r reaches mult^(k/(r+1)), so steeper short
    /// ramps and gentler long ones mix in one trace.
    pub burst_ramp_steps: u32,
    /// Diurnal concentration of bursts in [0,1]: the per-step start
    /// probability is burst_prob * (1 + burst_season * sin(phase)), keeping
    /// the daily mean at burst_prob.
    pub burst_season: f64,
    /// Multiplicative noise level; 0 disables noise.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            days: 7,
            train_days: 5,
            steps_per_day: 500,
            step_seconds: 60,
            base_rate: 100.0,
            amplitude: 50.0,
            burst_prob: 0.0,
            burst_mult_min: 3.0,
            burst_mult_max: 6.0,
            burst_len_min: 3,
            burst_len_max: 8,
            burst_ramp_steps: 1,
            burst_season: 0.0,
            noise: 0.0,
        }
    }
}

impl WorkloadTrace {
    pub fn validate(&self) -> Result<()> {
        if self.days.len() != self.split.len() {
            return Err(Error::data(format!(
                "{} days but {} split labels",
                self.days.len(),
                self.split.len()
            )));
        }
        for (i, day) in self.days.iter().enumerate() {
            if day.len() != self.steps_per_day as usize {
                return Err(Error::data(format!(
                    "day {i} has {} steps, expected {}",
                    day.len(),
                    self.steps_per_day
                )));
            }
        }
        Ok(())
    }

    pub fn day_indices(&self, split: SplitLabel) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_len(&self, split: SplitLabel) -> usize {
        self.day_indices(split).len() * self.steps_per_day as usize
    }

    /// Demand at step `t` of the concatenated days of `split`.
    pub fn demand_at(&self, split: SplitLabel, t: usize) -> Result<u64> {
        let days = self.day_indices(split);
        let steps = self.steps_per_day as usize;
        if t >= days.len() * steps {
            return Err(Error::data(format!(
                "step index {t} out of range for split of {} steps",
                days.len() * steps
            )));
        }
        Ok(self.days[days[t / steps]][t % steps])
    }

    /// Largest single-step demand across all days; used for rate normalization.
    pub fn peak(&self) -> u64 {
        self.days
            .iter()
            .flat_map(|d| d.iter())
            .copied()
            .max()
            .unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let trace: WorkloadTrace = serde_json::from_str(&text)?;
        trace.validate()?;
        Ok(trace)
    }
}

/// Parses one of the two supported CSV forms, detecting it from the header.
pub fn parse_csv<R: Read>(reader: R) -> Result<(Vec<RawTraceRow>, TraceFormat)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: format!("missing header row: {e}"),
        })?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();

    let col = |name: &str| headers.iter().position(|h| h == name);
    let (format, time_col, count_col) = if let Some(m) = col("minute") {
        (TraceFormat::PerMinuteCounts, m, col("count"))
    } else if let Some(ts) = col("timestamp") {
        (TraceFormat::PerInvocation, ts, col("duration"))
    } else {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must contain `minute` or `timestamp`, got {headers:?}"),
        });
    };
    if format == TraceFormat::PerMinuteCounts && count_col.is_none() {
        return Err(Error::Parse {
            line: 1,
            msg: "per-minute form requires a `count` column".into(),
        });
    }
    let func_col = col("function").ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing `function` column".into(),
    })?;

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |idx: usize| {
            record.get(idx).ok_or(Error::Parse {
                line,
                msg: format!("missing column {idx}"),
            })
        };
        let timestamp: u64 = field(time_col)?.parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad time value: {e}"),
        })?;
        let count_or_duration: f64 = match count_col {
            Some(c) => field(c)?.parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad count/duration value: {e}"),
            })?,
            None => 1.0,
        };
        if !count_or_duration.is_finite() || count_or_duration < 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("count/duration must be >= 0, got {count_or_duration}"),
            });
        }
        rows.push(RawTraceRow {
            timestamp,
            function_id: field(func_col)?.to_string(),
            count_or_duration,
        });
    }
    Ok((rows, format))
}

/// Builds the canonical trace from raw rows: per-minute totals across the
/// selected functions, seeded day sampling without replacement, mean-bin
/// compression to `steps_per_day`, and the train/test assignment.
pub fn ingest(
    rows: &[RawTraceRow],
    format: TraceFormat,
    config: &IngestConfig,
) -> Result<WorkloadTrace> {
    validate_split_counts(config.days, config.train_days)?;
    if rows.is_empty() {
        return Err(Error::data("no trace rows to ingest"));
    }

    // Timestamps must be non-decreasing per function (each function's series
    // is contiguous in the public dataset dumps).
    let mut last_seen: std::collections::HashMap<&str, u64> = std::collections::HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        if let Some(&prev) = last_seen.get(row.function_id.as_str()) {
            if row.timestamp < prev {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: format!(
                        "timestamps for function {} go backwards ({} after {})",
                        row.function_id, row.timestamp, prev
                    ),
                });
            }
        }
        last_seen.insert(row.function_id.as_str(), row.timestamp);
    }

    let selected = |f: &str| match &config.functions {
        Some(list) => list.iter().any(|x| x == f),
        None => true,
    };

    let mut per_minute: Vec<f64> = Vec::new();
    for row in rows {
        if !selected(&row.function_id) {
            continue;
        }
        let minute = match format {
            TraceFormat::PerMinuteCounts => row.timestamp as usize,
            TraceFormat::PerInvocation => (row.timestamp / 60) as usize,
        };
        if minute >= per_minute.len() {
            per_minute.resize(minute + 1, 0.0);
        }
        per_minute[minute] += match format {
            TraceFormat::PerMinuteCounts => row.count_or_duration,
            TraceFormat::PerInvocation => 1.0,
        };
    }

    let whole_days = per_minute.len() / MINUTES_PER_DAY;
    if whole_days < config.days {
        return Err(Error::data(format!(
            "trace covers {whole_days} whole days, {} requested",
            config.days
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let picked = sample_without_replacement(&mut rng, whole_days, config.days);

    let mut days = Vec::with_capacity(config.days);
    for &d in &picked {
        let minutes = &per_minute[d * MINUTES_PER_DAY..(d + 1) * MINUTES_PER_DAY];
        days.push(bin_day(minutes, config.steps_per_day as usize));
    }
    let split = split_labels(config.days, config.train_days);

    let trace = WorkloadTrace {
        steps_per_day: config.steps_per_day,
        step_seconds: config.step_seconds,
        days,
        split,
    };
    trace.validate()?;
    Ok(trace)
}

/// Deterministic synthetic trace: a diurnal sinusoid with optional burst
/// episodes and multiplicative noise.
///
/// demand(t) = round(max(0, (base + amplitude*sin(2*pi*t/steps)) * burst * noise))
pub fn synthesize(config: &SynthConfig) -> Result<WorkloadTrace> {
    validate_split_counts(config.days, config.train_days)?;
    if config.base_rate <= 0.0 || !config.base_rate.is_finite() {
        return Err(Error::config(format!(
            "base_rate must be > 0, got {}",
            config.base_rate
        )));
    }
    if config.amplitude < 0.0 || config.noise < 0.0 || !(0.0..=1.0).contains(&config.burst_prob) {
        return Err(Error::config(
            "amplitude and noise must be >= 0, burst_prob in [0,1]",
        ));
    }
    if !(0.0..=1.0).contains(&config.burst_season) {
        return Err(Error::config("burst_season must be in [0,1]"));
    }
    if config.burst_mult_max < config.burst_mult_min || config.burst_len_max < config.burst_len_min
    {
        return Err(Error::config("burst ranges must satisfy min <= max"));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let steps = config.steps_per_day as usize;
    let mut days = Vec::with_capacity(config.days);
    for _ in 0..config.days {
        let mut day = Vec::with_capacity(steps);
        let mut plateau_left = 0u32;
        let mut ramp_left = 0u32;
        let mut ramp_total = 1u32;
        let mut burst_mult = 1.0;
        for t in 0..steps {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / steps as f64;
            let mut demand = config.base_rate + config.amplitude * phase.sin();
            let start_prob = config.burst_prob * (1.0 + config.burst_season * phase.sin());
            if plateau_left == 0
                && ramp_left == 0
                && config.burst_prob > 0.0
                && rng.gen::<f64>() < start_prob
            {
                burst_mult = rng.gen_range(config.burst_mult_min..=config.burst_mult_max);
                plateau_left = rng.gen_range(config.burst_len_min..=config.burst_len_max);
                ramp_total = rng.gen_range(1..=config.burst_ramp_steps.max(1));
                ramp_left = ramp_total;
            }
            if ramp_left > 0 {
                let k = ramp_total - ramp_left + 1;
                demand *= burst_mult.powf(k as f64 / (ramp_total + 1) as f64);
                ramp_left -= 1;
            } else if plateau_left > 0 {
                demand *= burst_mult;
                plateau_left -= 1;
            }
            if config.noise > 0.0 {
                demand *= 1.0 + config.noise * (2.0 * rng.gen::<f64>() - 1.0);
            }
            day.push(demand.max(0.0).round() as u64);
        }
        days.push(day);
    }

    let trace = WorkloadTrace {
        steps_per_day: config.steps_per_day,
        step_seconds: config.step_seconds,
        days,
        split: split_labels(config.days, config.train_days),
    };
    trace.validate()?;
    Ok(trace)
}

fn validate_split_counts(days: usize, train_days: usize) -> Result<()> {
    if days == 0 || train_days == 0 || train_days >= days {
        return Err(Error::config(format!(
            "need 0 < train_days < days, got train_days={train_days} days={days}"
        )));
    }
    Ok(())
}

fn split_labels(days: usize, train_days: usize) -> Vec<SplitLabel> {
    (0..days)
        .map(|i| {
            if i < train_days {
                SplitLabel::Train
            } else {
                SplitLabel::Test
            }
        })
        .collect()
}

fn sample_without_replacement(rng: &mut ChaCha12Rng, n: usize, k: usize) -> Vec<usize> {
    // Partial Fisher-Yates over the index range.
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

/// Compresses a day of per-minute counts into `steps` contiguous bins.
/// Step value = round(bin mean * minutes_per_day / steps).
fn bin_day(minutes: &[f64], steps: usize) -> Vec<u64> {
    let m = minutes.len();
    let scale = m as f64 / steps as f64;
    (0..steps)
        .map(|k| {
            let lo = (k as f64 * scale).floor() as usize;
            let hi = (((k + 1) as f64 * scale).floor() as usize).max(lo + 1).min(m);
            let sum: f64 = minutes[lo..hi].iter().sum();
            let mean = sum / (hi - lo) as f64;
            (mean * scale).round().max(0.0) as u64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn minute_csv(days: usize, count: u64) -> String {
        let mut s = String::from("minute,function,count\n");
        for m in 0..days * MINUTES_PER_DAY {
            s.push_str(&format!("{m},f1,{count}\n"));
        }
        s
    }

    #[test]
    fn constant_day_mean_bins_to_346() {
        let csv = minute_csv(7, 120);
        let (rows, format) = parse_csv(csv.as_bytes()).unwrap();
        let trace = ingest(&rows, format, &IngestConfig::default()).unwrap();
        // 120 req/min * (1440/500) = 345.6 -> 346 at every step
        for day in &trace.days {
            assert!(day.iter().all(|&v| v == 346), "day {day:?}");
        }
        assert_eq!(trace.demand_at(SplitLabel::Train, 0).unwrap(), 346);
    }

    #[test]
    fn default_protocol_shape() {
        let csv = minute_csv(9, 10);
        let (rows, format) = parse_csv(csv.as_bytes()).unwrap();
        let trace = ingest(&rows, format, &IngestConfig::default()).unwrap();
        assert_eq!(trace.split_len(SplitLabel::Train), 2500);
        assert_eq!(trace.split_len(SplitLabel::Test), 1000);
        let train = trace.day_indices(SplitLabel::Train);
        let test = trace.day_indices(SplitLabel::Test);
        assert!(train.iter().all(|d| !test.contains(d)));
        assert_eq!(train.len() + test.len(), 7);
    }

    #[test]
    fn zero_day_maps_to_zero_demand() {
        let mut csv = String::from("minute,function,count\n");
        for m in 0..7 * MINUTES_PER_DAY {
            csv.push_str(&format!("{m},f1,0\n"));
        }
        let (rows, format) = parse_csv(csv.as_bytes()).unwrap();
        let trace = ingest(&rows, format, &IngestConfig::default()).unwrap();
        assert!(trace.days.iter().all(|d| d.iter().all(|&v| v == 0)));
        assert_eq!(trace.demand_at(SplitLabel::Test, 999).unwrap(), 0);
    }

    #[test]
    fn volume_conserved_within_rounding() {
        // constant day
        let minutes = vec![120.0; MINUTES_PER_DAY];
        let day = bin_day(&minutes, 500);
        let total_steps: u64 = day.iter().sum();
        let total_minutes: f64 = minutes.iter().sum();
        assert!((total_steps as f64 - total_minutes).abs() <= 250.0);

        // smooth sinusoidal day
        let minutes: Vec<f64> = (0..MINUTES_PER_DAY)
            .map(|m| 100.0 + 40.0 * (2.0 * std::f64::consts::PI * m as f64 / 1440.0).sin())
            .map(|v| v.round())
            .collect();
        let day = bin_day(&minutes, 500);
        let total_steps: u64 = day.iter().sum();
        let total_minutes: f64 = minutes.iter().sum();
        assert!(
            (total_steps as f64 - total_minutes).abs() <= 250.0,
            "steps {total_steps} vs minutes {total_minutes}"
        );
    }

    #[test]
    fn insufficient_days_is_an_error() {
        let csv = minute_csv(3, 5);
        let (rows, format) = parse_csv(csv.as_bytes()).unwrap();
        let err = ingest(&rows, format, &IngestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "minute,function,count\n0,f1,3\n1,f1,not_a_number\n";
        let err = parse_csv(csv.as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn per_invocation_form_counts_rows() {
        // 2 invocations in minute 0, 1 in minute 2, padded to 7 days
        let mut csv = String::from("timestamp,function,duration\n5,f1,0.2\n42,f1,0.3\n130,f2,0.1\n");
        let last = 7 * MINUTES_PER_DAY * 60;
        csv.push_str(&format!("{last},f1,0.1\n"));
        let (rows, format) = parse_csv(csv.as_bytes()).unwrap();
        assert_eq!(format, TraceFormat::PerInvocation);
        assert_eq!(rows.len(), 4);
        let config = IngestConfig {
            days: 2,
            train_days: 1,
            ..IngestConfig::default()
        };
        let trace = ingest(&rows, format, &config).unwrap();
        let total: u64 = trace.days.iter().flatten().sum();
        // volume of the sampled days is bounded by the inputs that fall in them
        assert!(total <= 10);
    }

    #[test]
    fn ingest_is_deterministic_per_seed() {
        let csv = minute_csv(10, 7);
        let (rows, format) = parse_csv(csv.as_bytes()).unwrap();
        let a = ingest(&rows, format, &IngestConfig::default()).unwrap();
        let b = ingest(&rows, format, &IngestConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = ingest(
            &rows,
            format,
            &IngestConfig {
                seed: 99,
                ..IngestConfig::default()
            },
        )
        .unwrap();
        assert_eq!(a.days.len(), c.days.len());
    }

    #[test]
    fn demand_at_boundary_errors() {
        let trace = synthesize(&SynthConfig::default()).unwrap();
        let len = trace.split_len(SplitLabel::Train);
        assert!(trace.demand_at(SplitLabel::Train, len - 1).is_ok());
        assert!(trace.demand_at(SplitLabel::Train, len).is_err());
    }

    #[test]
    fn synth_degenerate_is_flat() {
        let config = SynthConfig {
            amplitude: 0.0,
            burst_prob: 0.0,
            base_rate: 100.0,
            ..SynthConfig::default()
        };
        let trace = synthesize(&config).unwrap();
        assert!(trace.days.iter().all(|d| d.iter().all(|&v| v == 100)));
    }

    #[test]
    fn synth_sinusoid_extrema() {
        let trace = synthesize(&SynthConfig::default()).unwrap();
        for day in &trace.days {
            let min = *day.iter().min().unwrap();
            let max = *day.iter().max().unwrap();
            assert_eq!(min, 50);
            assert_eq!(max, 150);
        }
    }

    #[test]
    fn synth_same_seed_identical() {
        let config = SynthConfig {
            burst_prob: 0.05,
            noise: 0.1,
            seed: 1234,
            ..SynthConfig::default()
        };
        assert_eq!(synthesize(&config).unwrap(), synthesize(&config).unwrap());
    }

    #[test]
    fn synth_rejects_bad_base() {
        let config = SynthConfig {
            base_rate: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(synthesize(&config), Err(Error::Config(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.json");
        let trace = synthesize(&SynthConfig {
            burst_prob: 0.03,
            seed: 7,
            ..SynthConfig::default()
        })
        .unwrap();
        trace.save(&path).unwrap();
        let loaded = WorkloadTrace::load(&path).unwrap();
        assert_eq!(trace, loaded);
    }

    proptest! {
        #[test]
        fn binning_keeps_constant_series_flat(count in 0u64..500, steps in 50usize..600) {
            let minutes = vec![count as f64; MINUTES_PER_DAY];
            let day = bin_day(&minutes, steps);
            let expected = (count as f64 * MINUTES_PER_DAY as f64 / steps as f64).round() as u64;
            prop_assert!(day.iter().all(|&v| v == expected));
        }

        #[test]
        fn split_sets_always_disjoint(days in 2usize..12, train in 1usize..11) {
            prop_assume!(train < days);
            let labels = split_labels(days, train);
            let train_set: Vec<usize> = labels.iter().enumerate()
                .filter(|(_, l)| **l == SplitLabel::Train).map(|(i, _)| i).collect();
            let test_set: Vec<usize> = labels.iter().enumerate()
                .filter(|(_, l)| **l == SplitLabel::Test).map(|(i, _)| i).collect();
            prop_assert_eq!(train_set.len(), train);
            prop_assert!(train_set.iter().all(|i| !test_set.contains(i)));
        }
    }
}
