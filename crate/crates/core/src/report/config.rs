//! Run configuration: one JSON document.
//!
//! ```json
//! {
//!   "dataset": {"path": "sonar.csv", "target": "Class", "task": "classification"},
//!   "learner": "random_forest",
//!   "learner_params": {"num.trees": 200},
//!   "grid": {"mtry": [5, 10, 20], "replace": [true, false]},
//!   "exclusions": [{"replace": true, "mtry": 20}],
//!   "strategy": {"folds": 5, "sampling": "SRS"},
//!   "designs": [{"type": "bcv", "y": 2, "z": 2}, {"type": "rcv", "reps": 4}],
//!   "interactions": [["mtry", "replace"]],
//!   "permutations": 4999,
//!   "master_seed": 1
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::anova::ModelSpec;
use crate::data::{ColumnKind, Task};
use crate::design::plan::{stream_seed, TAG_CV, TAG_LEARNER};
use crate::design::{DesignPlan, DesignVariant, Exclusion};
use crate::error::{Error, Result};
use crate::learner::{LossFn, ParamMap, RANDOM_FOREST};
use crate::params::ParamValue;
use crate::partition::PartitionStrategy;
use crate::permtest::DEFAULT_PERMUTATIONS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub target: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schema_overrides: BTreeMap<String, ColumnKind>,
}

/// One design as declared. Seeds are either listed or drawn from `seed`
/// (default: the run's master seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    /// `z = 0` (and no learner seeds) is the CV-only design `Yx0`.
    Bcv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cv_seeds: Option<Vec<u64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        learner_seeds: Option<Vec<u64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Rcv {
        reps: usize,
        #[serde(default)]
        shared_within_rep: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl DesignSpec {
    pub fn resolve(&self, master: u64, strategy: PartitionStrategy) -> Result<DesignPlan> {
        match self {
            DesignSpec::Bcv {
                y,
                z,
                cv_seeds,
                learner_seeds,
                seed,
            } => {
                let seed = seed.unwrap_or(master);
                let cv_seeds = match (cv_seeds, y) {
                    (Some(s), Some(y)) if s.len() != *y => {
                        return Err(Error::Config(format!("y = {y} but {} cv_seeds listed", s.len())))
                    }
                    (Some(s), _) => s.clone(),
                    (None, Some(y)) => (0..*y as u64).map(|i| stream_seed(seed, TAG_CV, i)).collect(),
                    (None, None) => return Err(Error::Config("bcv design needs `y` or `cv_seeds`".into())),
                };
                match (learner_seeds, z) {
                    (Some(s), Some(z)) if s.len() != *z => {
                        Err(Error::Config(format!("z = {z} but {} learner_seeds listed", s.len())))
                    }
                    (Some(s), _) => DesignPlan::bcv(cv_seeds, s.clone(), strategy),
                    (None, Some(0)) => {
                        let plan = DesignPlan {
                            variant: DesignVariant::BcvCvOnly {
                                cv_seeds,
                                master_seed: seed,
                            },
                            strategy,
                        };
                        plan.validate()?;
                        Ok(plan)
                    }
                    (None, Some(z)) => DesignPlan::bcv(
                        cv_seeds,
                        (0..*z as u64).map(|j| stream_seed(seed, TAG_LEARNER, j)).collect(),
                        strategy,
                    ),
                    (None, None) => Err(Error::Config("bcv design needs `z` or `learner_seeds`".into())),
                }
            }
            DesignSpec::Rcv {
                reps,
                shared_within_rep,
                seed,
            } => DesignPlan::rcv(*reps, seed.unwrap_or(master), *shared_within_rep, strategy),
        }
    }

    /// The explicit form of a resolved plan: every seed listed.
    pub fn from_plan(plan: &DesignPlan) -> Self {
        match &plan.variant {
            DesignVariant::Bcv {
                cv_seeds,
                learner_seeds,
            } => DesignSpec::Bcv {
                y: None,
                z: None,
                cv_seeds: Some(cv_seeds.clone()),
                learner_seeds: Some(learner_seeds.clone()),
                seed: None,
            },
            DesignVariant::BcvCvOnly { cv_seeds, master_seed } => DesignSpec::Bcv {
                y: None,
                z: Some(0),
                cv_seeds: Some(cv_seeds.clone()),
                learner_seeds: None,
                seed: Some(*master_seed),
            },
            DesignVariant::Rcv {
                n_reps,
                master_seed,
                shared_within_rep,
            } => DesignSpec::Rcv {
                reps: *n_reps,
                shared_within_rep: *shared_within_rep,
                seed: Some(*master_seed),
            },
        }
    }
}

fn default_learner() -> String {
    RANDOM_FOREST.to_string()
}

fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}

fn default_top_k() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// Defaults to misclassification rate or RMSE by task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossFn>,
    #[serde(default = "default_learner")]
    pub learner: String,
    /// Applied to every setting; may not repeat a grid parameter.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub learner_params: ParamMap,
    /// Parameter name to list of values, in declaration order.
    pub grid: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<Exclusion>,
    pub strategy: PartitionStrategy,
    pub designs: Vec<DesignSpec>,
    /// Overrides the default model (blocks, main effects, `interactions`).
    /// Random terms that do not exist in a design are dropped for it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<(String, String)>,
    /// `0` skips the permutation tests.
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Adds one curve row per setting next to the averaged one.
    #[serde(default)]
    pub per_setting_curve: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        // A run manifest carries its resolved config under `config`.
        let value = match value {
            Value::Object(mut obj) if obj.contains_key("config") && !obj.contains_key("dataset") => {
                obj.remove("config").unwrap_or_default()
            }
            v => v,
        };
        Ok(serde_json::from_value(value)?)
    }

    /// Reads a config file; a relative dataset path is taken relative to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if config.dataset.path.is_relative() {
            if let Some(dir) = path.parent() {
                config.dataset.path = dir.join(&config.dataset.path);
            }
        }
        Ok(config)
    }

    pub fn grid_params(&self) -> Result<Vec<(String, Vec<ParamValue>)>> {
        self.grid
            .iter()
            .map(|(name, values)| {
                let values: Vec<ParamValue> = serde_json::from_value(values.clone()).map_err(|_| {
                    Error::Config(format!("grid entry `{name}` must be an array of scalars"))
                })?;
                Ok((name.clone(), values))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.designs.is_empty() {
            return Err(Error::Config("at least one design is required".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        PartitionStrategy::new(self.strategy.folds, self.strategy.sampling)?;
        Ok(())
    }
}
