//! TOML configuration file.
//!
//! Top-level keys hold settings shared by all experiments; each subcommand
//! has its own table. Unknown keys are rejected, and errors carry the TOML
//! location and the offending key.
//!
//! ```toml
//! seed = 7
//! jobs = 4
//!
//! [tmr_sweep]
//! bits = 8
//! p_gate = [1e-3, 1e-4]
//! modes = ["none", "serial", "parallel"]
//! trials = 2e4
//! ```

use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use crate::args::Format;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Integer that may be written as `20000`, `2e4` or `"2e4"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Count(pub u64);

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Count;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative integer")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Count, E> {
                u64::try_from(v).map(Count).map_err(|_| E::custom(format!("{v} is negative")))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Count, E> {
                Ok(Count(v))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Count, E> {
                crate::args::parse_u64(&v.to_string()).map(Count).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Count, E> {
                crate::args::parse_u64(v).map(Count).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<Count>,
    pub jobs: Option<Count>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub mult: Option<MultSection>,
    pub ecc: Option<EccSection>,
    pub tmr_sweep: Option<TmrSweepSection>,
    pub nn: Option<NnSection>,
    pub degradation: Option<DegradationSection>,
    pub dump_netlist: Option<DumpNetlistSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultSection {
    pub bits: Option<Count>,
    pub a: Option<Count>,
    pub b: Option<Count>,
    pub trials: Option<Count>,
    pub p_gate: Option<f64>,
    pub tmr: Option<String>,
    pub voting: Option<String>,
    pub netlist: Option<PathBuf>,
    pub batch_lanes: Option<Count>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EccSection {
    pub n: Option<Count>,
    pub m: Option<Count>,
    pub banks: Option<Count>,
    pub data: Option<PathBuf>,
    pub flips: Option<Vec<String>>,
    pub random_flips: Option<Count>,
    pub bits: Option<Count>,
    pub lanes: Option<Count>,
    /// Crossbar sizes for `ecc overhead`.
    pub sizes: Option<Vec<Count>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmrSweepSection {
    pub bits: Option<Count>,
    pub p_gate: Option<Vec<f64>>,
    pub modes: Option<Vec<String>>,
    pub voting: Option<Vec<String>>,
    pub trials: Option<Count>,
    pub batch_lanes: Option<Count>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnSection {
    pub p_mult: Option<Vec<f64>>,
    pub p_mask: Option<f64>,
    #[serde(rename = "M")]
    pub m_mults: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSection {
    pub p_input: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub t_batches: Option<Vec<f64>>,
    pub ecc: Option<Vec<String>>,
    #[serde(rename = "W")]
    pub w_weights: Option<f64>,
    pub model: Option<String>,
    pub bits: Option<Count>,
    pub m: Option<Count>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpNetlistSection {
    pub function: Option<String>,
    pub bits: Option<Count>,
    pub orientation: Option<String>,
}

/// Parse config text. Structure only; value ranges are checked on resolve.
pub fn parse_config(text: &str) -> Result<FileConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError(format!("config: {}", e.to_string().trim_end())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let c = parse_config(
            r#"
seed = 7
jobs = 2
format = "json"
[tmr_sweep]
bits = 8
p_gate = [1e-3, 1e-4]
modes = ["none", "serial"]
trials = 2e4
[nn]
M = 6.12e8
[degradation]
T = [1, 1e3]
"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(Count(7)));
        assert_eq!(c.format, Some(Format::Json));
        let t = c.tmr_sweep.unwrap();
        assert_eq!(t.trials, Some(Count(20_000)));
        assert_eq!(c.nn.unwrap().m_mults, Some(6.12e8));
        assert_eq!(c.degradation.unwrap().t_batches, Some(vec![1.0, 1e3]));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config("[tmr_sweep]\ntrails = 5\n").unwrap_err();
        assert!(e.0.contains("trails"), "{}", e.0);
        let e = parse_config("sed = 1\n").unwrap_err();
        assert!(e.0.contains("sed"), "{}", e.0);
    }

    #[test]
    fn count_rejects_fractions() {
        assert!(parse_config("seed = 1.5").is_err());
        assert!(parse_config("seed = -1").is_err());
        assert_eq!(parse_config("seed = \"1e3\"").unwrap().seed, Some(Count(1000)));
    }
}
