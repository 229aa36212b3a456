use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::PartitionStrategy;
use crate::rng::derive_seed;

/// Stream tags for seeds drawn from a master seed.
pub(crate) const TAG_CV: u64 = 1;
pub(crate) const TAG_LEARNER: u64 = 2;
pub(crate) const TAG_CELL_LEARNER: u64 = 3;
pub(crate) const TAG_RCV_CV: u64 = 4;
pub(crate) const TAG_RCV_LEARNER: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignVariant {
    /// Blocked on CV seeds and learner seeds (`YxZ`).
    Bcv { cv_seeds: Vec<u64>, learner_seeds: Vec<u64> },
    /// Blocked on CV seeds only (`Yx0`); learner seeds fresh per cell.
    BcvCvOnly { cv_seeds: Vec<u64>, master_seed: u64 },
    /// Repeated CV; seeds fresh per cell, or per repetition when shared.
    Rcv {
        n_reps: usize,
        master_seed: u64,
        #[serde(default)]
        shared_within_rep: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignPlan {
    #[serde(flatten)]
    pub variant: DesignVariant,
    pub strategy: PartitionStrategy,
}

/// Seed `index` of stream `tag` under `master`. Prefix-stable, so a larger
/// design extends the seed lists of a smaller one.
pub fn stream_seed(master: u64, tag: u64, index: u64) -> u64 {
    derive_seed(master, &[tag, index])
}

impl DesignPlan {
    pub fn bcv(cv_seeds: Vec<u64>, learner_seeds: Vec<u64>, strategy: PartitionStrategy) -> Result<Self> {
        let plan = DesignPlan {
            variant: DesignVariant::Bcv {
                cv_seeds,
                learner_seeds,
            },
            strategy,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// `BCV YxZ` with seeds drawn from `master`; `z = 0` gives `Yx0`.
    pub fn bcv_from_master(y: usize, z: usize, master: u64, strategy: PartitionStrategy) -> Result<Self> {
        let cv_seeds: Vec<u64> = (0..y as u64).map(|i| stream_seed(master, TAG_CV, i)).collect();
        let variant = if z == 0 {
            DesignVariant::BcvCvOnly {
                cv_seeds,
                master_seed: master,
            }
        } else {
            DesignVariant::Bcv {
                cv_seeds,
                learner_seeds: (0..z as u64)
                    .map(|j| stream_seed(master, TAG_LEARNER, j))
                    .collect(),
            }
        };
        let plan = DesignPlan { variant, strategy };
        plan.validate()?;
        Ok(plan)
    }

    pub fn rcv(n_reps: usize, master_seed: u64, shared_within_rep: bool, strategy: PartitionStrategy) -> Result<Self> {
        let plan = DesignPlan {
            variant: DesignVariant::Rcv {
                n_reps,
                master_seed,
                shared_within_rep,
            },
            strategy,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        fn distinct(what: &str, seeds: &[u64]) -> Result<()> {
            if seeds.is_empty() {
                return Err(Error::Design(format!("{what} list is empty")));
            }
            let set: HashSet<&u64> = seeds.iter().collect();
            if set.len() != seeds.len() {
                return Err(Error::Design(format!("{what} list has duplicates")));
            }
            Ok(())
        }
        PartitionStrategy::new(self.strategy.folds, self.strategy.sampling)?;
        match &self.variant {
            DesignVariant::Bcv {
                cv_seeds,
                learner_seeds,
            } => {
                distinct("cv_seeds", cv_seeds)?;
                distinct("learner_seeds", learner_seeds)
            }
            DesignVariant::BcvCvOnly { cv_seeds, .. } => distinct("cv_seeds", cv_seeds),
            DesignVariant::Rcv { n_reps, .. } => {
                if *n_reps == 0 {
                    Err(Error::Design("RCV needs at least one repetition".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn shape(&self) -> TableShape {
        match &self.variant {
            DesignVariant::Bcv {
                cv_seeds,
                learner_seeds,
            } => TableShape::Bcv {
                n_cv: cv_seeds.len(),
                n_learner: learner_seeds.len(),
            },
            DesignVariant::BcvCvOnly { cv_seeds, .. } => TableShape::BcvCvOnly { n_cv: cv_seeds.len() },
            DesignVariant::Rcv { n_reps, .. } => TableShape::Rcv { n_reps: *n_reps },
        }
    }

    /// `5-BCV SRS 4x4`, `5-BCV STS 8x0`, `10-RCV SRS 16Rep`.
    pub fn notation(&self) -> String {
        let k = self.strategy.folds;
        let s = self.strategy.sampling;
        match self.shape() {
            TableShape::Bcv { n_cv, n_learner } => format!("{k}-BCV {s} {n_cv}x{n_learner}"),
            TableShape::BcvCvOnly { n_cv } => format!("{k}-BCV {s} {n_cv}x0"),
            TableShape::Rcv { n_reps } => format!("{k}-RCV {s} {n_reps}Rep"),
        }
    }

    /// Directory-friendly name: `bcv_4x4`, `bcv_8x0`, `rcv_16`.
    pub fn slug(&self) -> String {
        self.shape().slug()
    }
}

/// Replication layout of an error table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TableShape {
    Bcv { n_cv: usize, n_learner: usize },
    BcvCvOnly { n_cv: usize },
    Rcv { n_reps: usize },
}

impl TableShape {
    /// Sizes of the two replication axes `(a, b)`; `b = 1` unless crossed.
    pub fn axes(&self) -> (usize, usize) {
        match *self {
            TableShape::Bcv { n_cv, n_learner } => (n_cv, n_learner),
            TableShape::BcvCvOnly { n_cv } => (n_cv, 1),
            TableShape::Rcv { n_reps } => (n_reps, 1),
        }
    }

    /// Runs per setting (`R` in the standard-error formula).
    pub fn replicates(&self) -> usize {
        let (a, b) = self.axes();
        a * b
    }

    pub fn is_blocked(&self) -> bool {
        !matches!(self, TableShape::Rcv { .. })
    }

    pub fn slug(&self) -> String {
        match *self {
            TableShape::Bcv { n_cv, n_learner } => format!("bcv_{n_cv}x{n_learner}"),
            TableShape::BcvCvOnly { n_cv } => format!("bcv_{n_cv}x0"),
            TableShape::Rcv { n_reps } => format!("rcv_{n_reps}"),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            TableShape::Bcv { .. } => "BCV YxZ",
            TableShape::BcvCvOnly { .. } => "BCV Yx0",
            TableShape::Rcv { .. } => "RCV",
        }
    }
}
