use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Response, Task};
use crate::error::{Error, Result};
use crate::stats::kahan_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFn {
    #[serde(alias = "misclassification")]
    MisclassificationRate,
    Rmse,
    Mae,
}

impl LossFn {
    /// Misclassification rate for classification, RMSE for regression.
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Classification => LossFn::MisclassificationRate,
            Task::Regression => LossFn::Rmse,
        }
    }

    pub fn task(self) -> Task {
        match self {
            LossFn::MisclassificationRate => Task::Classification,
            LossFn::Rmse | LossFn::Mae => Task::Regression,
        }
    }
}

impl fmt::Display for LossFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossFn::MisclassificationRate => "misclassification_rate",
            LossFn::Rmse => "rmse",
            LossFn::Mae => "mae",
        })
    }
}

pub fn compute_loss(loss: LossFn, predictions: &Response, truth: &Response) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Loss(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Loss("empty vectors".into()));
    }
    let n = truth.len() as f64;
    match (loss, predictions, truth) {
        (LossFn::MisclassificationRate, Response::Classes(p), Response::Classes(t)) => {
            let wrong = p.iter().zip(t).filter(|(a, b)| a != b).count();
            Ok(wrong as f64 / n)
        }
        (LossFn::Rmse, Response::Values(p), Response::Values(t)) => {
            let sq = kahan_sum(p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)));
            Ok((sq / n).sqrt())
        }
        (LossFn::Mae, Response::Values(p), Response::Values(t)) => {
            Ok(kahan_sum(p.iter().zip(t).map(|(a, b)| (a - b).abs())) / n)
        }
        (loss, _, _) => Err(Error::Loss(format!(
            "{loss} does not apply to these responses"
        ))),
    }
}
