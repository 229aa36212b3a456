use super::tree::majority;
use super::{Learner, Predictor};
use crate::data::{Dataset, Response, Target};
use crate::error::{Error, Result};
use crate::stats::kahan_sum;

/// Baseline that predicts the training majority class (ties to the smallest
/// label) or the training mean. Hyperparameters are accepted and ignored, so
/// the baseline can run any grid.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantLearner;

impl Learner for ConstantLearner {
    fn fit(&self, data: &Dataset, train_rows: &[usize], _seed: u64) -> Result<Box<dyn Predictor>> {
        if train_rows.is_empty() {
            return Err(Error::Dataset("empty training set".into()));
        }
        let value = match &data.target {
            Target::Classes { labels, codes } => {
                let mut counts = vec![0u64; labels.len()];
                for &r in train_rows {
                    counts[codes[r] as usize] += 1;
                }
                Constant::Class(majority(&counts))
            }
            Target::Values(y) => {
                Constant::Value(kahan_sum(train_rows.iter().map(|&r| y[r])) / train_rows.len() as f64)
            }
        };
        Ok(Box::new(value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constant {
    Class(u32),
    Value(f64),
}

impl Predictor for Constant {
    fn predict(&self, _data: &Dataset, rows: &[usize]) -> Response {
        match *self {
            Constant::Class(c) => Response::Classes(vec![c; rows.len()]),
            Constant::Value(v) => Response::Values(vec![v; rows.len()]),
        }
    }
}
