//! Learners, trained models and losses.

pub mod constant;
pub mod forest;
pub mod loss;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, Response};
use crate::error::{Error, Result};
use crate::params::ParamValue;
use crate::rng::derive_seed;

pub use constant::ConstantLearner;
pub use forest::{RandomForest, RfHyperparams};
pub use loss::{compute_loss, LossFn};

pub type ParamMap = BTreeMap<String, ParamValue>;

pub const RANDOM_FOREST: &str = "random_forest";
pub const CONSTANT: &str = "constant";

/// A learner kind plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: String,
    #[serde(default)]
    pub params: ParamMap,
}

impl LearnerSpec {
    pub fn new(kind: impl Into<String>, params: ParamMap) -> Self {
        Self {
            kind: kind.into(),
            params,
        }
    }
}

pub trait Learner: Send + Sync {
    fn fit(&self, data: &Dataset, train_rows: &[usize], seed: u64) -> Result<Box<dyn Predictor>>;
}

pub trait Predictor: Send + Sync + Debug {
    fn predict(&self, data: &Dataset, rows: &[usize]) -> Response;
}

pub fn build_learner(spec: &LearnerSpec, data: &Dataset) -> Result<Box<dyn Learner>> {
    match spec.kind.as_str() {
        RANDOM_FOREST => Ok(Box::new(RandomForest::new(RfHyperparams::from_params(
            &spec.params,
            data,
        )?))),
        CONSTANT => Ok(Box::new(ConstantLearner)),
        other => Err(Error::UnknownLearner(other.to_string())),
    }
}

/// Checks that `kind` names a known learner accepting every key in `names`.
pub fn check_param_names<'a>(kind: &str, names: impl IntoIterator<Item = &'a str>) -> Result<()> {
    match kind {
        RANDOM_FOREST => {
            for name in names {
                if !forest::PARAM_NAMES.contains(&name) {
                    return Err(Error::Hyperparameter(format!(
                        "random_forest does not recognise `{name}`"
                    )));
                }
            }
            Ok(())
        }
        CONSTANT => Ok(()),
        other => Err(Error::UnknownLearner(other.to_string())),
    }
}

#[derive(Debug)]
pub struct TrainedModel {
    pub learner_seed: u64,
    /// Hash of the training row indices.
    pub fingerprint: u64,
    schema: Vec<ColumnKind>,
    n_classes: usize,
    predictor: Box<dyn Predictor>,
}

impl TrainedModel {
    pub fn predict(&self, data: &Dataset, rows: &[usize]) -> Result<Response> {
        if data.schema() != self.schema || data.target.n_classes() != self.n_classes {
            return Err(Error::SchemaMismatch(
                "query dataset does not have the training schema".into(),
            ));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= data.n_rows()) {
            return Err(Error::SchemaMismatch(format!("row {r} out of range")));
        }
        Ok(self.predictor.predict(data, rows))
    }
}

pub fn training_fingerprint(rows: &[usize]) -> u64 {
    let words: Vec<u64> = rows.iter().map(|&r| r as u64).collect();
    derive_seed(rows.len() as u64, &words)
}

/// Trains `spec` on `train_rows` of `data` with the given learner seed.
pub fn train(spec: &LearnerSpec, data: &Dataset, train_rows: &[usize], learner_seed: u64) -> Result<TrainedModel> {
    let learner = build_learner(spec, data)?;
    fit_model(learner.as_ref(), data, train_rows, learner_seed)
}

pub fn fit_model(learner: &dyn Learner, data: &Dataset, train_rows: &[usize], learner_seed: u64) -> Result<TrainedModel> {
    if train_rows.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    if let Some(&r) = train_rows.iter().find(|&&r| r >= data.n_rows()) {
        return Err(Error::Dataset(format!("training row {r} out of range")));
    }
    let predictor = learner.fit(data, train_rows, learner_seed)?;
    Ok(TrainedModel {
        learner_seed,
        fingerprint: training_fingerprint(train_rows),
        schema: data.schema(),
        n_classes: data.target.n_classes(),
        predictor,
    })
}
