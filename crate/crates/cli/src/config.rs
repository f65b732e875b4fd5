//! Experiment configuration file.
//!
//! ```toml
//! name = "desk"
//! seed_range = [0, 20]        # or: seeds = [0, 3, 7]
//! analyses = ["theory", "distill"]
//!
//! [plots]
//! enabled = true
//!
//! [train]
//! steps_per_phase = 2000
//! curriculum = ["sho", "pendulum", "kepler", "relativistic"]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mass_core::physics::SystemId;
use mass_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::exit::usage;

pub const ANALYSES: [&str; 7] = [
    "significance",
    "correlation",
    "strip",
    "pca",
    "theory",
    "reference",
    "distill",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Write SVG figures next to the CSV tables.
    pub enabled: bool,
    /// Longest polyline drawn for per-step traces.
    pub trace_points: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            enabled: true,
            trace_points: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Empty means every system.
    pub systems: Vec<SystemId>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            systems: Vec::new(),
            samples: 512,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Sweep directory name under `<out>/sweeps`.
    pub name: Option<String>,
    /// Output root; `MASS_OUT` and `--out` take precedence.
    pub output: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    /// Half-open `[start, end)`.
    pub seed_range: Option<[u64; 2]>,
    /// Empty means all.
    pub analyses: Vec<String>,
    /// Distillation control fits per seed.
    pub controls: Option<usize>,
    pub jobs: Option<usize>,
    pub plots: PlotConfig,
    pub generate: GenerateConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e| usage(format!("{e}")))?;
        if raw
            .get("train")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("seeds"))
        {
            return Err(usage("seeds belong at the top level, not under [train]"));
        }
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| usage(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not depend on flags.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_some() && self.seed_range.is_some() {
            return Err(usage("give either seeds or seed_range, not both"));
        }
        resolve_analyses(&self.analyses)?;
        if self.jobs == Some(0) {
            return Err(usage("jobs must be at least 1"));
        }
        Ok(())
    }

    /// The seed list after flag overrides.
    pub fn seed_list(&self) -> Result<Vec<u64>> {
        let seeds = match (&self.seeds, self.seed_range) {
            (Some(_), Some(_)) => return Err(usage("give either seeds or seed_range, not both")),
            (Some(s), None) => s.clone(),
            (None, Some([a, b])) => (a..b).collect(),
            (None, None) => vec![0],
        };
        if seeds.is_empty() {
            return Err(usage("the seed list is empty"));
        }
        Ok(seeds)
    }

    /// Training config with the resolved seeds, validated.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut t = self.train.clone();
        t.seeds = self.seed_list()?;
        t.validate()?;
        Ok(t)
    }
}

/// Expands and checks analysis names; empty or `all` selects every one.
pub fn resolve_analyses(names: &[String]) -> Result<Vec<&'static str>> {
    if names.is_empty() || names.iter().any(|n| n == "all") {
        return Ok(ANALYSES.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let Some(a) = ANALYSES.iter().find(|a| **a == n.as_str()) else {
            return Err(usage(format!(
                "unknown analysis `{n}` (valid: all, {})",
                ANALYSES.join(", ")
            )));
        };
        if !out.contains(a) {
            out.push(*a);
        }
    }
    // Canonical order keeps outputs independent of how the list was typed.
    out.sort_by_key(|a| ANALYSES.iter().position(|b| b == a));
    Ok(out)
}

/// Parses `a..b` (half-open) or `a..=b`.
pub fn parse_range(s: &str) -> Result<[u64; 2]> {
    let bad = || usage(format!("bad seed range `{s}`, expected START..END"));
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    Ok([a, if inclusive { b + 1 } else { b }])
}

pub fn parse_systems(list: &[String]) -> Result<Vec<SystemId>> {
    list.iter()
        .map(|s| s.parse::<SystemId>().map_err(|e| usage(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("nmae = \"x\"").is_err());
        assert!(ExperimentConfig::parse("[train]\nlearning_rate = 1.0").is_err());
        assert!(ExperimentConfig::parse("[train]\nseeds = [1]").is_err());
    }

    #[test]
    fn sections_parse() {
        let c = ExperimentConfig::parse(
            "seed_range = [2, 5]\nanalyses = [\"pca\", \"theory\"]\n[train]\nsteps_per_phase = 7\ncurriculum = [\"sho\", \"kepler\"]\n",
        )
        .unwrap();
        assert_eq!(c.seed_list().unwrap(), vec![2, 3, 4]);
        let t = c.train_config().unwrap();
        assert_eq!(t.steps_per_phase, 7);
        assert_eq!(t.curriculum, vec![SystemId::Sho, SystemId::Kepler]);
        assert_eq!(resolve_analyses(&c.analyses).unwrap(), vec!["pca", "theory"]);
    }

    #[test]
    fn ranges_and_analyses() {
        assert_eq!(parse_range("0..4").unwrap(), [0, 4]);
        assert_eq!(parse_range("1..=3").unwrap(), [1, 4]);
        assert!(parse_range("3").is_err());
        assert!(resolve_analyses(&["nope".into()]).is_err());
        assert_eq!(
            resolve_analyses(&["theory".into(), "pca".into(), "pca".into()]).unwrap(),
            vec!["pca", "theory"]
        );
    }

    #[test]
    fn empty_seed_list_is_a_usage_error() {
        let c = ExperimentConfig::parse("seeds = []").unwrap();
        let e = c.seed_list().unwrap_err();
        assert_eq!(crate::exit::exit_code(&e), 1);
    }
}
