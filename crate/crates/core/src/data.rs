//! Tabular datasets and CSV ingestion.
//!
//! A column is numeric iff every non-missing cell parses as a finite
//! decimal real; otherwise it is categorical with levels ordered
//! lexicographically. Rows with any missing cell (empty or `NA`) are dropped
//! and counted, never imputed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feature {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl Feature {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Feature::Numeric(_) => ColumnKind::Numeric,
            Feature::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Feature::Numeric(v) => v.len(),
            Feature::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds a categorical column, coding levels in lexicographic order.
    pub fn categorical<S: AsRef<str>>(cells: &[S]) -> Self {
        let (levels, codes) = encode_levels(cells);
        Feature::Categorical { levels, codes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Class labels in lexicographic order; codes index into them.
    Classes { labels: Vec<String>, codes: Vec<u32> },
    Values(Vec<f64>),
}

impl Target {
    pub fn classes<S: AsRef<str>>(cells: &[S]) -> Self {
        let (labels, codes) = encode_levels(cells);
        Target::Classes { labels, codes }
    }

    pub fn len(&self) -> usize {
        match self {
            Target::Classes { codes, .. } => codes.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Target::Classes { .. } => Task::Classification,
            Target::Values(_) => Task::Regression,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Target::Classes { labels, .. } => labels.len(),
            Target::Values(_) => 0,
        }
    }

    /// The full response vector.
    pub fn response(&self) -> Response {
        match self {
            Target::Classes { codes, .. } => Response::Classes(codes.clone()),
            Target::Values(v) => Response::Values(v.clone()),
        }
    }
}

/// A vector of responses: class codes or real values. Used for both
/// ground truth and predictions.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Classes(Vec<u32>),
    Values(Vec<f64>),
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Classes(v) => v.len(),
            Response::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn encode_levels<S: AsRef<str>>(cells: &[S]) -> (Vec<String>, Vec<u32>) {
    let levels: Vec<String> = cells
        .iter()
        .map(|c| c.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, u32> = levels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as u32))
        .collect();
    let codes = cells.iter().map(|c| index[c.as_ref()]).collect();
    (levels, codes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub features: Vec<Feature>,
    pub target: Target,
}

impl Dataset {
    /// Validates shape and label invariants.
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        features: Vec<Feature>,
        target: Target,
    ) -> Result<Self> {
        let n = target.len();
        if n < 2 {
            return Err(Error::Dataset(format!("need at least 2 rows, got {n}")));
        }
        if features.is_empty() {
            return Err(Error::Dataset("need at least 1 feature".into()));
        }
        if feature_names.len() != features.len() {
            return Err(Error::Dataset(format!(
                "{} names for {} features",
                feature_names.len(),
                features.len()
            )));
        }
        for (name, f) in feature_names.iter().zip(&features) {
            if f.len() != n {
                return Err(Error::Column {
                    column: name.clone(),
                    reason: format!("has {} entries, expected {n}", f.len()),
                });
            }
            if let Feature::Numeric(v) = f {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Column {
                        column: name.clone(),
                        reason: "non-finite value".into(),
                    });
                }
            }
        }
        match &target {
            Target::Classes { labels, codes } => {
                let used: BTreeSet<u32> = codes.iter().copied().collect();
                if used.len() < 2 {
                    return Err(Error::TooFewLabels(used.len()));
                }
                if used.len() != labels.len() {
                    return Err(Error::Dataset("every label needs at least one instance".into()));
                }
            }
            Target::Values(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Dataset("non-finite target value".into()));
                }
            }
        }
        Ok(Dataset {
            name: name.into(),
            feature_names,
            features,
            target,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn task(&self) -> Task {
        self.target.task()
    }

    pub fn schema(&self) -> Vec<ColumnKind> {
        self.features.iter().map(Feature::kind).collect()
    }
}

/// Result of [`load_csv`]: the dataset and how many rows were dropped.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Parses a decimal real. Non-finite spellings (`inf`, `NaN`) are not numbers here.
fn parse_real(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|x| x.is_finite())
}

pub fn load_csv(
    path: impl AsRef<Path>,
    target_column: &str,
    task: Task,
    schema_overrides: &BTreeMap<String, ColumnKind>,
) -> Result<Loaded> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv(file, &name, target_column, task, schema_overrides)
}

/// Same as [`load_csv`] but from any reader.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    name: &str,
    target_column: &str,
    task: Task,
    schema_overrides: &BTreeMap<String, ColumnKind>,
) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::Column {
                column: h.clone(),
                reason: "duplicate column name".into(),
            });
        }
    }
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingTarget(target_column.to_string()))?;
    for col in schema_overrides.keys() {
        if !header.contains(col) || col == target_column {
            return Err(Error::Column {
                column: col.clone(),
                reason: "schema override names no feature column".into(),
            });
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = record?;
        if record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::NoUsableRows { dropped });
    }

    let column = |j: usize| -> Vec<&str> { rows.iter().map(|r| r[j].as_str()).collect() };

    let target = match task {
        Task::Classification => Target::classes(&column(target_idx)),
        Task::Regression => {
            let cells = column(target_idx);
            let values: Option<Vec<f64>> = cells.iter().map(|c| parse_real(c)).collect();
            Target::Values(values.ok_or_else(|| Error::Column {
                column: target_column.to_string(),
                reason: "regression target is not numeric".into(),
            })?)
        }
    };
    if let Target::Classes { labels, .. } = &target {
        if labels.len() < 2 {
            return Err(Error::TooFewLabels(labels.len()));
        }
    }

    let mut feature_names = Vec::new();
    let mut features = Vec::new();
    for (j, h) in header.iter().enumerate() {
        if j == target_idx {
            continue;
        }
        let cells = column(j);
        let parsed: Option<Vec<f64>> = cells.iter().map(|c| parse_real(c)).collect();
        let feature = match (schema_overrides.get(h), parsed) {
            (Some(ColumnKind::Categorical), _) => Feature::categorical(&cells),
            (Some(ColumnKind::Numeric), None) => {
                return Err(Error::Column {
                    column: h.clone(),
                    reason: "declared numeric but has non-numeric cells".into(),
                })
            }
            (_, Some(values)) => Feature::Numeric(values),
            (None, None) => Feature::categorical(&cells),
        };
        feature_names.push(h.clone());
        features.push(feature);
    }

    let dataset = Dataset::new(name, feature_names, features, target)?;
    Ok(Loaded {
        dataset,
        dropped_rows: dropped,
    })
}
