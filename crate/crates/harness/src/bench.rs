//! Benchmark runner: executes the partially interactive protocol and the
//! interactive baseline across the configured signer counts and renders the
//! CSV report.  Deterministic per config seed.

use crate::config::BenchConfig;
use crate::error::HarnessError;
use crate::fault::FaultPlan;
use crate::runner::{run_baseline_with_faults, run_pitpm, RunReport, Scheme};

pub const CSV_HEADER: &str = "n,scheme,messages_total,bytes_total,wall_ms_simulated,failures";

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    messages: usize,
    bytes: usize,
    wall_ms: u64,
    failures: u32,
}

impl Tally {
    fn add(&mut self, report: &RunReport) {
        self.messages += report.transcript.total_messages();
        self.bytes += report.transcript.total_bytes();
        self.wall_ms += report.wall_ms;
        if !report.succeeded() {
            self.failures += 1;
        }
    }

    fn row(&self, n: u16, scheme: &str) -> String {
        format!(
            "{n},{scheme},{},{},{},{}",
            self.messages, self.bytes, self.wall_ms, self.failures
        )
    }
}

fn trial_seed(base: u64, n: u16, scheme_tag: u64, trial: u32) -> u64 {
    // splitmix-style spread so trials never share protocol randomness
    let mut z = base
        .wrapping_add((n as u64) << 32)
        .wrapping_add(scheme_tag << 48)
        .wrapping_add(trial as u64)
        .wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Run the configured benchmark and render the CSV report.
pub fn run_bench(config: &BenchConfig) -> Result<String, HarnessError> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let faults = FaultPlan {
        latency: config.latency,
        ..FaultPlan::none()
    };
    for &n in &config.ns {
        let mut pitpm = Tally::default();
        for trial in 0..config.trials {
            let seed = trial_seed(config.seed, n, 1, trial);
            let report = run_pitpm(config.group, n, config.scheme, &faults, seed)?;
            pitpm.add(&report);
        }
        out.push_str(&pitpm.row(n, &config.scheme.label()));
        out.push('\n');

        // the interactive baseline rides along for the comparison runs
        if config.scheme == Scheme::Multisig && n >= 2 {
            let mut baseline = Tally::default();
            for trial in 0..config.trials {
                let seed = trial_seed(config.seed, n, 2, trial);
                let report = run_baseline_with_faults(config.group, n, &faults, seed)?;
                baseline.add(&report);
            }
            out.push_str(&baseline.row(n, "baseline"));
            out.push('\n');
        }
    }
    Ok(out)
}
