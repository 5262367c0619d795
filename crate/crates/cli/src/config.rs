//! TOML run configuration and its merge with command-line flags.
//!
//! Precedence, lowest to highest: built-in defaults, the `--config` file,
//! flags. The merged result is written back as `config.toml` next to the
//! outputs so a run can be repeated from its output directory alone.

use std::path::Path;

use anyhow::{Context, Result};
use echofactor::{FillPolicy, PcpConfig, SynthSpec, TsnmfConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input bundle directory or matrix CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    /// Master seed; overrides the per-section seeds when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker cap. Never changes results, so it is not echoed back.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fill: Option<FillPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_distance: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    pub pcp: PcpConfig,
    pub tsnmf: TsnmfConfig,
    pub synth: SynthSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            anyhow::Error::new(echofactor::Error::Parameter(format!(
                "config {}: {e}",
                path.display()
            )))
        })
    }

    /// Propagates the master seed into the sections that consume one.
    pub fn resolve_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.tsnmf.seed = seed;
            self.synth.seed = seed;
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| {
            anyhow::Error::new(echofactor::Error::Parameter(format!(
                "config cannot be serialized: {e}"
            )))
        })?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `a..b` (inclusive) or a comma list.
pub fn parse_ranks(s: &str) -> std::result::Result<Vec<usize>, String> {
    let ranks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| format!("bad rank `{a}`"))?;
        let b: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| format!("bad rank `{b}`"))?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| format!("bad rank `{v}`")))
            .collect::<std::result::Result<_, _>>()?
    };
    if ranks.is_empty() || ranks.contains(&0) {
        return Err("ranks must be a non-empty list of positive integers".into());
    }
    if ranks.windows(2).any(|w| w[0] >= w[1]) {
        return Err("ranks must be strictly ascending".into());
    }
    Ok(ranks)
}

/// Comma list of values, or `1e<a>..1e<b>` for every decade in between.
pub fn parse_etas(s: &str) -> std::result::Result<Vec<f64>, String> {
    let etas: Vec<f64> = if let Some((a, b)) = s.split_once("..") {
        let exp = |v: &str| -> std::result::Result<i32, String> {
            v.trim()
                .strip_prefix("1e")
                .and_then(|e| e.parse().ok())
                .ok_or_else(|| format!("range endpoints must look like 1e<k>, got `{v}`"))
        };
        let (a, b) = (exp(a)?, exp(b)?);
        (a..=b).map(|k| 10f64.powi(k)).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| format!("bad eta `{v}`")))
            .collect::<std::result::Result<_, _>>()?
    };
    if etas.is_empty() || etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err("etas must be positive and finite".into());
    }
    if etas.windows(2).any(|w| w[0] >= w[1]) {
        return Err("etas must be strictly ascending".into());
    }
    Ok(etas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_lists() {
        assert_eq!(parse_ranks("1..8").unwrap(), (1..=8).collect::<Vec<_>>());
        assert_eq!(parse_ranks("1..=3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_ranks("2,3,5").unwrap(), vec![2, 3, 5]);
        assert!(parse_ranks("0..3").is_err());
        assert!(parse_ranks("3,2").is_err());
        assert!(parse_ranks("x").is_err());
    }

    #[test]
    fn eta_lists() {
        assert_eq!(parse_etas("1e0..1e2").unwrap(), vec![1.0, 10.0, 100.0]);
        assert_eq!(parse_etas("5,500000").unwrap(), vec![5.0, 500000.0]);
        assert!(parse_etas("0,1").is_err());
        assert!(parse_etas("10..100").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
seed = 7
fill = "constant(-999.0)"
[tsnmf]
rank = 4
"#;
        let mut cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.resolve_seed();
        assert_eq!(cfg.tsnmf.rank, 4);
        assert_eq!(cfg.tsnmf.eta, 500_000.0);
        assert_eq!(cfg.tsnmf.seed, 7);
        assert_eq!(cfg.fill, Some(FillPolicy::Constant(-999.0)));
        let back: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
