//! Experiment configuration: a single JSON document, validated in full before
//! any sampling starts.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use normex_core::geoquantile::EXTREME_LENGTH;
use normex_core::{
    level_grid, truncated_moments, FamilyParams, FamilySpec, GridLevel, Level, Method, NormKind, NormexConfig,
    NormingShift,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_COUNT: usize = 100_000;
pub const DEFAULT_GRID_PER_DIM: usize = 20;
pub const DEFAULT_ORACLE_DRAWS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridName {
    #[serde(rename = "paper-grid")]
    PaperGrid,
}

/// `"paper-grid"` or an explicit list of level vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelsSpec {
    Named(GridName),
    Explicit(Vec<Vec<f64>>),
}

impl Default for LevelsSpec {
    fn default() -> Self {
        LevelsSpec::Named(GridName::PaperGrid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentChecks {
    pub levels: Vec<f64>,
    #[serde(default = "default_oracle_draws")]
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub norm: NormKind,
    pub n: usize,
    #[serde(default = "default_count")]
    pub count: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub levels: LevelsSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_n_list: Option<Vec<usize>>,
    /// Rows per sample in the rate experiment; defaults to `count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_count: Option<usize>,
    #[serde(default = "default_grid_per_dim")]
    pub grid_per_dim: usize,
    #[serde(default)]
    pub shift: NormingShift,
    #[serde(default = "default_y_floor")]
    pub y_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_checks: Option<MomentChecks>,
    #[serde(default)]
    pub plots: bool,
}

fn default_count() -> usize {
    DEFAULT_COUNT
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("normex-out")
}

fn default_grid_per_dim() -> usize {
    DEFAULT_GRID_PER_DIM
}

fn default_y_floor() -> f64 {
    1e-8
}

fn default_oracle_draws() -> usize {
    DEFAULT_ORACLE_DRAWS
}

/// A configuration that passed every precondition check.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub family: FamilyParams,
    pub levels: Vec<GridLevel>,
}

impl Experiment {
    pub fn engine_config(&self, n: usize, count: usize, seed: u64) -> NormexConfig {
        let mut c = NormexConfig::new(self.family, self.config.norm, n, count, seed);
        c.y_floor = self.config.y_floor;
        c.shift = self.config.shift;
        c
    }

    /// Methods other than the direct sum, i.e. those compared in rate experiments.
    pub fn approximations(&self) -> Vec<Method> {
        self.config.methods.iter().copied().filter(|m| *m != Method::DirectSum).collect()
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<Experiment> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let family = FamilyParams::try_from(self.family).map_err(|e| CliError::Config(e.to_string()))?;
        family.check_norm(self.norm).map_err(|e| CliError::Config(e.to_string()))?;
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        let mut seen = HashSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return bad(format!("method {m} listed twice"));
            }
        }
        if !(self.y_floor > 0.0 && self.y_floor.is_finite()) {
            return bad(format!("y_floor must be positive, got {}", self.y_floor));
        }
        if self.grid_per_dim < 2 {
            return bad(format!("grid_per_dim must be at least 2, got {}", self.grid_per_dim));
        }
        let exp = Experiment { config: self.clone(), family, levels: Vec::new() };
        for m in &self.methods {
            exp.engine_config(self.n, self.count, self.seed)
                .validate(*m)
                .map_err(|e| CliError::Config(format!("method {m}: {e}")))?;
        }
        let levels = self.resolve_levels(family.dim())?;
        if let Some(list) = &self.rate_n_list {
            if list.len() < 2 || list.windows(2).any(|w| w[0] >= w[1]) {
                return bad("rate_n_list needs at least two strictly increasing values".into());
            }
            if list[0] < 2 {
                return bad("rate_n_list values must be at least 2".into());
            }
            if exp.approximations().is_empty() {
                return bad("a rate experiment needs at least one method besides DirectSum".into());
            }
            if self.rate_count == Some(0) {
                return bad("rate_count must be at least 1".into());
            }
            for m in exp.approximations() {
                for &n in list {
                    exp.engine_config(n, 1, self.seed)
                        .validate(m)
                        .map_err(|e| CliError::Config(format!("method {m} at n = {n}: {e}")))?;
                }
            }
        } else if self.rate_count.is_some() {
            return bad("rate_count given without rate_n_list".into());
        }
        if let Some(mc) = &self.moment_checks {
            if mc.levels.is_empty() {
                return bad("moment_checks.levels must not be empty".into());
            }
            if mc.draws < 10_000 {
                return bad(format!("moment_checks.draws must be at least 10000, got {}", mc.draws));
            }
            for &y in &mc.levels {
                truncated_moments(&family, self.norm, y)
                    .map_err(|e| CliError::Config(format!("moment check at y = {y}: {e}")))?;
            }
        }
        Ok(Experiment { levels, ..exp })
    }

    fn resolve_levels(&self, d: usize) -> Result<Vec<GridLevel>> {
        match &self.levels {
            // d = 1 has no paper grid; only QQ stages need one, so the error is deferred
            LevelsSpec::Named(GridName::PaperGrid) if d == 1 => Ok(Vec::new()),
            LevelsSpec::Named(GridName::PaperGrid) => {
                level_grid(d).map_err(|e| CliError::Config(format!("levels: {e}")))
            }
            LevelsSpec::Explicit(list) => {
                if list.is_empty() {
                    return Err(CliError::Config("levels list is empty".into()));
                }
                list.iter()
                    .enumerate()
                    .map(|(index, u)| {
                        if u.len() != d {
                            return Err(CliError::Config(format!("level {index} has {} entries, expected {d}", u.len())));
                        }
                        let level = Level::new(u.clone()).map_err(|e| CliError::Config(format!("level {index}: {e}")))?;
                        let length = level.norm();
                        Ok(GridLevel { index, level, length, is_extreme: length > EXTREME_LENGTH })
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "family": {"variant": "MvParetoLomax", "alpha": 2.3, "d": 3},
        "norm": "L1", "n": 52, "count": 1000, "seed": 1,
        "methods": ["DirectSum", "DNormex"]
    }"#;

    #[test]
    fn minimal_config_validates() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.levels, LevelsSpec::Named(GridName::PaperGrid));
        let e = c.validate().unwrap();
        assert_eq!(e.levels.len(), 235);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"sede\": 2");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(CliError::Config(_))));
        let text = MINIMAL.replace("\"d\": 3", "\"d\": 3, \"beta\": 1");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn clt_with_heavy_tail_is_refused() {
        let text = MINIMAL.replace("2.3", "1.5").replace("\"DNormex\"", "\"CLT\"");
        let err = ExperimentConfig::from_json(&text).unwrap().validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("finite variance"), "{err}");
    }

    #[test]
    fn explicit_levels() {
        let text = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"levels\": [[0,0,0],[0.95,0,0]]");
        let e = ExperimentConfig::from_json(&text).unwrap().validate().unwrap();
        assert_eq!(e.levels.len(), 2);
        assert!(e.levels[1].is_extreme && !e.levels[0].is_extreme);
        let text = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"levels\": [[1,0,0]]");
        assert!(ExperimentConfig::from_json(&text).unwrap().validate().is_err());
        let text = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"levels\": \"grid\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn rate_list_checks() {
        let text = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"rate_n_list\": [16, 8]");
        assert!(ExperimentConfig::from_json(&text).unwrap().validate().is_err());
        let text = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"rate_count\": 10");
        assert!(ExperimentConfig::from_json(&text).unwrap().validate().is_err());
    }

    #[test]
    fn mismatched_norm_is_refused() {
        let text = MINIMAL.replace("\"L1\"", "\"Linf\"");
        assert!(ExperimentConfig::from_json(&text).unwrap().validate().is_err());
    }
}
