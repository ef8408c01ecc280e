//! Benchmark configuration: plain key=value text.
//!
//! Recognized keys: `ns` (comma-separated signer counts), `scheme`
//! (`multisig` or `threshold:T`), `trials`, `latency_ms`, `jitter_ms`,
//! `seed`, `group` (`prod` or `test`).

use pitpm_core::group::Backend;

use crate::error::HarnessError;
use crate::fault::LatencyModel;
use crate::runner::Scheme;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub ns: Vec<u16>,
    pub scheme: Scheme,
    pub trials: u32,
    pub latency: LatencyModel,
    pub seed: u64,
    pub group: Backend,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            ns: Vec::new(),
            scheme: Scheme::Multisig,
            trials: 1,
            latency: LatencyModel::default(),
            seed: 42,
            group: Backend::Prod,
        }
    }
}

fn bad(line: usize, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        line,
        reason: reason.into(),
    }
}

pub fn parse_config(text: &str) -> Result<BenchConfig, HarnessError> {
    let mut config = BenchConfig::default();
    let mut saw_ns = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(line_no, format!("expected key=value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "ns" => {
                config.ns = value
                    .split(',')
                    .map(|part| part.trim().parse::<u16>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(line_no, format!("bad ns list: {e}")))?;
                if config.ns.is_empty() {
                    return Err(bad(line_no, "ns list is empty"));
                }
                saw_ns = true;
            }
            "scheme" => {
                config.scheme = if value == "multisig" {
                    Scheme::Multisig
                } else if let Some(t) = value.strip_prefix("threshold:") {
                    let t = t
                        .parse::<u16>()
                        .map_err(|e| bad(line_no, format!("bad threshold: {e}")))?;
                    Scheme::Threshold { t }
                } else {
                    return Err(bad(line_no, format!("unknown scheme {value:?}")));
                };
            }
            "trials" => {
                config.trials = value
                    .parse()
                    .map_err(|e| bad(line_no, format!("bad trials: {e}")))?;
                if config.trials == 0 {
                    return Err(bad(line_no, "trials must be at least 1"));
                }
            }
            "latency_ms" => {
                config.latency.fixed_ms = value
                    .parse()
                    .map_err(|e| bad(line_no, format!("bad latency_ms: {e}")))?;
            }
            "jitter_ms" => {
                config.latency.jitter_ms = value
                    .parse()
                    .map_err(|e| bad(line_no, format!("bad jitter_ms: {e}")))?;
            }
            "seed" => {
                config.seed = value
                    .parse()
                    .map_err(|e| bad(line_no, format!("bad seed: {e}")))?;
            }
            "group" => {
                config.group = match value {
                    "prod" => Backend::Prod,
                    "test" => Backend::Test,
                    other => return Err(bad(line_no, format!("unknown group {other:?}"))),
                };
            }
            other => return Err(bad(line_no, format!("unknown key {other:?}"))),
        }
    }
    if !saw_ns {
        return Err(bad(0, "missing required key ns"));
    }
    if config.group == Backend::Test {
        if let Some(&n) = config.ns.iter().find(|&&n| n > 10) {
            return Err(bad(
                0,
                format!("the test group has only ten distinct keys; n={n} needs group=prod"),
            ));
        }
    }
    if let Scheme::Threshold { t } = config.scheme {
        if let Some(&n) = config.ns.iter().find(|&&n| t >= n) {
            return Err(bad(0, format!("threshold t={t} needs t < n, got n={n}")));
        }
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_example() {
        let config = parse_config(
            "ns=2,10,100\nscheme=multisig\ntrials=5\nlatency_ms=20\njitter_ms=5\nseed=42\n",
        )
        .unwrap();
        assert_eq!(config.ns, vec![2, 10, 100]);
        assert_eq!(config.scheme, Scheme::Multisig);
        assert_eq!(config.trials, 5);
        assert_eq!(
            config.latency,
            LatencyModel {
                fixed_ms: 20,
                jitter_ms: 5
            }
        );
        assert_eq!(config.seed, 42);
        assert_eq!(config.group, Backend::Prod);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("ns=2,3\nbogus line without equals\n").unwrap_err();
        assert_eq!(
            err,
            HarnessError::Config {
                line: 2,
                reason: "expected key=value, got \"bogus line without equals\"".into()
            }
        );

        let err = parse_config("ns=2\nscheme=quantum\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { line: 2, .. }));

        let err = parse_config("ns=2\ntrials=zero\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { line: 2, .. }));
    }

    #[test]
    fn threshold_and_group_validation() {
        assert!(parse_config("ns=3\nscheme=threshold:1\n").is_ok());
        assert!(parse_config("ns=3\nscheme=threshold:3\n").is_err());
        assert!(parse_config("ns=100\ngroup=test\n").is_err());
        assert!(parse_config("ns=10\ngroup=test\n").is_ok());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let config = parse_config("# benchmark\n\nns = 4, 6\n# done\n").unwrap();
        assert_eq!(config.ns, vec![4, 6]);
    }
}
