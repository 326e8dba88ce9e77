use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{RankerSpec, SelectorSpec};
use crate::error::{Error, Result};
use crate::estimation::{Mode, DEFAULT_FOLDS};
use crate::inference::{IntervalMethod, DEFAULT_MC_DRAWS};
use crate::learners::LearnerSpec;
use crate::metrics::metric_by_name;

/// Everything needed to reproduce one analysis. Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub outcome: String,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "LearnerSpec::stack")]
    pub learner: LearnerSpec,
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub inference: InferenceSettings,
    #[serde(default)]
    pub bootstrap: Option<BootstrapSettings>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Adds wall-clock timings to `summary.json`; off by default so reruns
    /// are byte-identical.
    #[serde(default)]
    pub timings: bool,
}

/// One ranking or selection to evaluate: a built-in algorithm or a file
/// produced elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranker: Option<RankerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<SelectorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_file: Option<PathBuf>,
}

impl AlgorithmEntry {
    pub fn is_ranking(&self) -> bool {
        self.ranker.is_some() || self.ranking_file.is_some()
    }

    fn sources(&self) -> usize {
        [
            self.ranker.is_some(),
            self.selector.is_some(),
            self.ranking_file.is_some(),
            self.subset_file.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSettings {
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        Self {
            level: default_level(),
            mc_draws: default_mc_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSettings {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<IntervalMethod>,
    /// Also write every replicate to `bootstrap_draws.csv`.
    #[serde(default)]
    pub export_draws: bool,
}

fn default_metric() -> String {
    "r_squared".into()
}
fn default_mode() -> Mode {
    Mode::Crossfit
}
fn default_folds() -> usize {
    DEFAULT_FOLDS
}
fn default_level() -> f64 {
    0.95
}
fn default_mc_draws() -> usize {
    DEFAULT_MC_DRAWS
}
fn default_replicates() -> usize {
    1000
}
fn default_methods() -> Vec<IntervalMethod> {
    vec![
        IntervalMethod::Efron,
        IntervalMethod::Percentile,
        IntervalMethod::PercentileT,
    ]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("vroc-out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.output_dir);
        for a in &mut self.algorithms {
            a.ranking_file.as_mut().map(fix);
            a.subset_file.as_mut().map(fix);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        metric_by_name(&self.metric).map_err(|e| Error::Config(e.to_string()))?;
        if self.outcome.trim().is_empty() {
            return bad("outcome column name is empty".into());
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm entry is required".into());
        }
        let mut names = std::collections::HashSet::new();
        for a in &self.algorithms {
            if !names.insert(a.name.as_str()) {
                return bad(format!("algorithm name '{}' used twice", a.name));
            }
            if a.sources() != 1 {
                return bad(format!(
                    "algorithm '{}' must set exactly one of ranker, selector, ranking_file, subset_file",
                    a.name
                ));
            }
            if let Some(r) = &a.ranker {
                r.validate()
                    .map_err(|e| Error::Config(format!("algorithm '{}': {e}", a.name)))?;
            }
            if let Some(s) = &a.selector {
                s.validate()
                    .map_err(|e| Error::Config(format!("algorithm '{}': {e}", a.name)))?;
            }
        }
        if self.mode == Mode::Crossfit && self.folds < 2 {
            return bad(format!("cross-fitting needs at least 2 folds, got {}", self.folds));
        }
        if !(self.inference.level > 0.0 && self.inference.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.inference.level));
        }
        if self.inference.mc_draws == 0 {
            return bad("mc_draws must be positive".into());
        }
        if let Some(b) = &self.bootstrap {
            if b.replicates < crate::bootstrap::MIN_INTERVAL_REPLICATES {
                return bad(format!(
                    "bootstrap intervals need at least {} replicates, got {}",
                    crate::bootstrap::MIN_INTERVAL_REPLICATES,
                    b.replicates
                ));
            }
            if let Some(m) = b
                .methods
                .iter()
                .find(|m| matches!(m, IntervalMethod::Wald | IntervalMethod::Uniform))
            {
                return bad(format!("{m:?} is not a bootstrap method"));
            }
        }
        Ok(())
    }
}
