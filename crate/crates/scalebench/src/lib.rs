//! A reproducible autoscaling workbench: a simulated Kubernetes-style
//! serverless cluster driven by replayed or synthetic invocation traces, four
//! controllers (attention-enhanced double-LSTM PPO, single-LSTM PPO, double
//! DQN, static HPA), and the telemetry to compare them on latency, SLO
//! compliance and scaling stability.
//!
//! See the crate examples for runnable entry points per capability, or the
//! `scalebench` binary for the experiment CLI.

pub mod agents;
pub mod commands;
pub mod config;
pub mod control;
pub mod envloop;
pub mod error;
pub mod nn;
pub mod reward;
pub mod sim;
pub mod telemetry;
pub mod trace;
pub mod training;

pub use error::{Error, Result};
