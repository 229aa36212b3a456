use rayon::prelude::*;

use super::tree::{majority, GrowParams, LeafValue, Tree};
use super::{Learner, ParamMap, Predictor};
use crate::data::{Dataset, Response, Task};
use crate::error::{Error, Result};
use crate::params::ParamValue;
use crate::rng::{derive_seed, Pcg32};

pub const MTRY: &str = "mtry";
pub const MIN_NODE_SIZE: &str = "min.node.size";
pub const REPLACE: &str = "replace";
pub const SAMPLE_FRACTION: &str = "sample.fraction";
pub const NUM_TREES: &str = "num.trees";
pub const PARAM_NAMES: [&str; 5] = [MTRY, MIN_NODE_SIZE, REPLACE, SAMPLE_FRACTION, NUM_TREES];

/// Random-forest hyperparameters, named as in the config files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfHyperparams {
    pub mtry: usize,
    pub min_node_size: usize,
    pub replace: bool,
    pub sample_fraction: f64,
    pub num_trees: usize,
}

impl RfHyperparams {
    /// Defaults for a dataset: `mtry = floor(sqrt(p))` (classification) or
    /// `floor(p/3)` (regression), node size 1 or 5, bootstrap, 500 trees.
    pub fn defaults(data: &Dataset) -> Self {
        let p = data.n_features();
        let (mtry, min_node_size) = match data.task() {
            Task::Classification => (((p as f64).sqrt().floor() as usize).max(1), 1),
            Task::Regression => ((p / 3).max(1), 5),
        };
        RfHyperparams {
            mtry,
            min_node_size,
            replace: true,
            sample_fraction: 1.0,
            num_trees: 500,
        }
    }

    pub fn from_params(params: &ParamMap, data: &Dataset) -> Result<Self> {
        let mut hp = Self::defaults(data);
        let mut sample_fraction_set = false;
        for (name, value) in params {
            match name.as_str() {
                MTRY => hp.mtry = positive_int(name, value)?,
                MIN_NODE_SIZE => hp.min_node_size = positive_int(name, value)?,
                NUM_TREES => hp.num_trees = positive_int(name, value)?,
                REPLACE => {
                    hp.replace = value.as_bool().ok_or_else(|| {
                        Error::Hyperparameter(format!("{name} must be boolean, got {value}"))
                    })?
                }
                SAMPLE_FRACTION => {
                    hp.sample_fraction = value.as_f64().ok_or_else(|| {
                        Error::Hyperparameter(format!("{name} must be a real, got {value}"))
                    })?;
                    sample_fraction_set = true;
                }
                other => {
                    return Err(Error::Hyperparameter(format!(
                        "random_forest does not recognise `{other}`"
                    )))
                }
            }
        }
        if !sample_fraction_set && !hp.replace {
            hp.sample_fraction = 0.632;
        }
        hp.validate(data.n_features())?;
        Ok(hp)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.mtry < 1 || self.mtry > p {
            return Err(Error::Hyperparameter(format!(
                "mtry = {} outside [1, {p}]",
                self.mtry
            )));
        }
        if self.min_node_size < 1 {
            return Err(Error::Hyperparameter("min.node.size must be >= 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Hyperparameter(format!(
                "sample.fraction = {} outside (0, 1]",
                self.sample_fraction
            )));
        }
        if self.num_trees < 1 {
            return Err(Error::Hyperparameter("num.trees must be >= 1".into()));
        }
        Ok(())
    }

    /// Rows drawn per tree: `round(sample_fraction * n_train)`, at least one.
    pub fn bag_size(&self, n_train: usize) -> usize {
        ((self.sample_fraction * n_train as f64).round() as usize).clamp(1, usize::MAX)
    }
}

fn positive_int(name: &str, value: &ParamValue) -> Result<usize> {
    match value.as_i64() {
        Some(v) if v >= 1 => Ok(v as usize),
        _ => Err(Error::Hyperparameter(format!(
            "{name} must be a positive integer, got {value}"
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    pub hyper: RfHyperparams,
}

impl RandomForest {
    pub fn new(hyper: RfHyperparams) -> Self {
        Self { hyper }
    }

    /// Draws the bag for one tree; sorted so that node sums run in row order.
    fn draw_bag(&self, train_rows: &[usize], rng: &mut Pcg32) -> Vec<usize> {
        let n = train_rows.len();
        let size = self.hyper.bag_size(n);
        let mut bag = if self.hyper.replace {
            (0..size).map(|_| train_rows[rng.index(n)]).collect::<Vec<_>>()
        } else {
            let mut pool = train_rows.to_vec();
            let size = size.min(n);
            for t in 0..size {
                let j = t + rng.index(n - t);
                pool.swap(t, j);
            }
            pool.truncate(size);
            pool
        };
        bag.sort_unstable();
        bag
    }

    /// Grows tree `index` with the stream `derive_seed(seed, [index])`.
    pub fn grow_tree(&self, data: &Dataset, train_rows: &[usize], seed: u64, index: usize) -> Tree {
        let mut rng = Pcg32::from_seed(derive_seed(seed, &[index as u64]));
        let bag = self.draw_bag(train_rows, &mut rng);
        let params = GrowParams {
            mtry: self.hyper.mtry,
            min_node_size: self.hyper.min_node_size,
        };
        Tree::grow(data, bag, params, &mut rng)
    }
}

impl Learner for RandomForest {
    fn fit(&self, data: &Dataset, train_rows: &[usize], seed: u64) -> Result<Box<dyn Predictor>> {
        self.hyper.validate(data.n_features())?;
        let trees: Vec<Tree> = (0..self.hyper.num_trees)
            .into_par_iter()
            .map(|t| self.grow_tree(data, train_rows, seed, t))
            .collect();
        Ok(Box::new(Forest {
            trees,
            task: data.task(),
            n_classes: data.target.n_classes(),
        }))
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    pub trees: Vec<Tree>,
    task: Task,
    n_classes: usize,
}

impl Predictor for Forest {
    fn predict(&self, data: &Dataset, rows: &[usize]) -> Response {
        match self.task {
            Task::Classification => {
                let mut votes = vec![0u64; self.n_classes];
                Response::Classes(
                    rows.iter()
                        .map(|&r| {
                            votes.iter_mut().for_each(|v| *v = 0);
                            for t in &self.trees {
                                if let LeafValue::Class(c) = t.predict_row(data, r) {
                                    votes[c as usize] += 1;
                                }
                            }
                            majority(&votes)
                        })
                        .collect(),
                )
            }
            Task::Regression => Response::Values(
                rows.iter()
                    .map(|&r| {
                        let mut sum = 0.0;
                        for t in &self.trees {
                            if let LeafValue::Value(v) = t.predict_row(data, r) {
                                sum += v;
                            }
                        }
                        sum / self.trees.len() as f64
                    })
                    .collect(),
            ),
        }
    }
}
