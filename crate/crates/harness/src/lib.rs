//! Deterministic in-process protocol harness: simulated network with
//! latency and fault injection, message accounting, the interactive
//! baseline for comparison, and the benchmark runner.

pub mod bench;
pub mod config;
pub mod error;
pub mod fault;
pub mod runner;
pub mod sim;
pub mod transcript;

pub use bench::{run_bench, CSV_HEADER};
pub use config::{parse_config, BenchConfig};
pub use error::HarnessError;
pub use fault::{FaultPlan, LatencyModel, TamperRule};
pub use runner::{
    run_baseline_interactive, run_baseline_with_faults, run_pitpm, RunReport, Scheme,
};
pub use sim::Simulator;
pub use transcript::{MessageRecord, Party, Phase, Transcript};
