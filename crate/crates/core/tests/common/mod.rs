//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_rational::Ratio;

use bcv::data::{read_csv, Dataset, Task};
use bcv::rng::Pcg32;

/// A small dataset kept in plain form next to its CSV text.
#[derive(Debug, Clone)]
pub struct Raw {
    pub columns: Vec<Column>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Raw {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for j in 0..self.columns.len() {
            s.push_str(&format!("x{j},"));
        }
        s.push_str("label\n");
        for i in 0..self.n() {
            for c in &self.columns {
                match c {
                    Column::Numeric(v) => s.push_str(&format!("{},", v[i])),
                    Column::Categorical(v) => s.push_str(&format!("{},", v[i])),
                }
            }
            s.push_str(&self.labels[i]);
            s.push('\n');
        }
        s
    }

    pub fn dataset(&self) -> Dataset {
        read_csv(self.to_csv().as_bytes(), "raw", "label", Task::Classification, &BTreeMap::new())
            .expect("valid dataset")
            .dataset
    }
}

/// Random classification data: quarter-step numeric features, sometimes a
/// categorical one, two or three labels loosely tied to the features.
pub fn random_raw(seed: u64, n: usize, p: usize) -> Raw {
    let mut rng = Pcg32::from_seed(seed);
    let n_labels = 2 + rng.index(2);
    let categorical = p > 1 && rng.index(2) == 0;
    let mut columns = Vec::new();
    for j in 0..p {
        if categorical && j == p - 1 {
            let levels = ["u", "v", "w", "z"];
            columns.push(Column::Categorical(
                (0..n).map(|_| levels[rng.index(levels.len())].to_string()).collect(),
            ));
        } else {
            let range = 4 + rng.index(20);
            columns.push(Column::Numeric((0..n).map(|_| rng.index(range) as f64 / 4.0).collect()));
        }
    }
    let names = ["a", "b", "c"];
    let labels = (0..n)
        .map(|i| {
            let signal = match &columns[0] {
                Column::Numeric(v) => v[i] as usize,
                Column::Categorical(_) => 0,
            };
            let l = if rng.index(4) == 0 { rng.index(n_labels) } else { signal % n_labels };
            names[l].to_string()
        })
        .collect::<Vec<_>>();
    let mut raw = Raw { columns, labels };
    // Guarantee at least two labels.
    if raw.labels.iter().all(|l| *l == raw.labels[0]) {
        raw.labels[0] = if raw.labels[0] == "a" { "b".into() } else { "a".into() };
    }
    raw
}

/// Exhaustive CART on exact rational Gini impurity.
#[derive(Debug, Clone)]
pub enum OracleNode {
    Leaf(String),
    Numeric { feature: usize, threshold: f64, left: Box<OracleNode>, right: Box<OracleNode> },
    Level { feature: usize, level: String, left: Box<OracleNode>, right: Box<OracleNode> },
}

fn gini(rows: &[usize], labels: &[String]) -> Ratio<i64> {
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for &r in rows {
        *counts.entry(labels[r].as_str()).or_default() += 1;
    }
    let n = rows.len() as i64;
    let mut g = Ratio::from_integer(1);
    for &c in counts.values() {
        g -= Ratio::new(c * c, n * n);
    }
    g
}

fn majority_label(rows: &[usize], labels: &[String]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &r in rows {
        *counts.entry(labels[r].as_str()).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    // BTreeMap iterates labels in ascending order: the first maximum wins.
    counts.into_iter().find(|(_, c)| *c == best).map(|(l, _)| l.to_string()).unwrap_or_default()
}

pub fn oracle_tree(raw: &Raw, rows: &[usize], min_node_size: usize) -> OracleNode {
    let labels = &raw.labels;
    let parent = gini(rows, labels);
    if rows.len() < min_node_size.max(2) || parent == Ratio::from_integer(0) {
        return OracleNode::Leaf(majority_label(rows, labels));
    }
    let n = Ratio::from_integer(rows.len() as i64);
    let weighted = |left: &[usize], right: &[usize]| {
        Ratio::from_integer(left.len() as i64) / n * gini(left, labels)
            + Ratio::from_integer(right.len() as i64) / n * gini(right, labels)
    };
    enum Best {
        Numeric(usize, f64),
        Level(usize, String),
    }
    let mut best: Option<(Ratio<i64>, Best)> = None;
    for (j, col) in raw.columns.iter().enumerate() {
        match col {
            Column::Numeric(x) => {
                let mut values: Vec<f64> = rows.iter().map(|&r| x[r]).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                for w in values.windows(2) {
                    let t = (w[0] + w[1]) / 2.0;
                    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i] <= t);
                    let score = weighted(&l, &r);
                    if best.as_ref().is_none_or(|(s, _)| score < *s) {
                        best = Some((score, Best::Numeric(j, t)));
                    }
                }
            }
            Column::Categorical(v) => {
                let mut levels: Vec<&String> = rows.iter().map(|&r| &v[r]).collect();
                levels.sort();
                levels.dedup();
                if levels.len() < 2 {
                    continue;
                }
                for level in levels {
                    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| &v[i] == level);
                    let score = weighted(&l, &r);
                    if best.as_ref().is_none_or(|(s, _)| score < *s) {
                        best = Some((score, Best::Level(j, level.clone())));
                    }
                }
            }
        }
    }
    match best {
        Some((score, split)) if score < parent => match split {
            Best::Numeric(feature, threshold) => {
                let Column::Numeric(x) = &raw.columns[feature] else { unreachable!() };
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i] <= threshold);
                OracleNode::Numeric {
                    feature,
                    threshold,
                    left: Box::new(oracle_tree(raw, &l, min_node_size)),
                    right: Box::new(oracle_tree(raw, &r, min_node_size)),
                }
            }
            Best::Level(feature, level) => {
                let Column::Categorical(v) = &raw.columns[feature] else { unreachable!() };
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| v[i] == level);
                OracleNode::Level {
                    feature,
                    level,
                    left: Box::new(oracle_tree(raw, &l, min_node_size)),
                    right: Box::new(oracle_tree(raw, &r, min_node_size)),
                }
            }
        },
        _ => OracleNode::Leaf(majority_label(rows, labels)),
    }
}

pub fn oracle_predict(node: &OracleNode, raw: &Raw, row: usize) -> String {
    match node {
        OracleNode::Leaf(l) => l.clone(),
        OracleNode::Numeric { feature, threshold, left, right } => {
            let Column::Numeric(x) = &raw.columns[*feature] else { unreachable!() };
            oracle_predict(if x[row] <= *threshold { left } else { right }, raw, row)
        }
        OracleNode::Level { feature, level, left, right } => {
            let Column::Categorical(v) = &raw.columns[*feature] else { unreachable!() };
            oracle_predict(if &v[row] == level { left } else { right }, raw, row)
        }
    }
}

/// Trains a one-tree forest that should equal plain CART and compares it with
/// the oracle on every row. Training rows are the even ones.
pub fn single_tree_matches_oracle(raw: &Raw, seed: u64) -> Result<(), String> {
    use bcv::data::Response;
    use bcv::learner::{train, LearnerSpec};
    use bcv::params::ParamValue;

    let data = raw.dataset();
    let p = raw.columns.len() as i64;
    let spec = LearnerSpec::new(
        "random_forest",
        [
            ("num.trees", ParamValue::from(1)),
            ("mtry", ParamValue::from(p)),
            ("replace", ParamValue::from(false)),
            ("sample.fraction", ParamValue::from(1.0)),
            ("min.node.size", ParamValue::from(1)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
    );
    let train_rows: Vec<usize> = (0..raw.n()).step_by(2).collect();
    let all: Vec<usize> = (0..raw.n()).collect();
    let model = train(&spec, &data, &train_rows, seed).map_err(|e| e.to_string())?;
    let Response::Classes(pred) = model.predict(&data, &all).map_err(|e| e.to_string())? else {
        return Err("expected class predictions".into());
    };
    let bcv::data::Target::Classes { labels, .. } = &data.target else {
        return Err("expected a class target".into());
    };
    let tree = oracle_tree(raw, &train_rows, 1);
    for &r in &all {
        let want = oracle_predict(&tree, raw, r);
        let got = &labels[pred[r] as usize];
        if *got != want {
            return Err(format!("row {r}: forest predicts {got}, CART predicts {want}"));
        }
    }
    Ok(())
}

/// The four-parameter grid with 84 settings as a JSON grid object.
pub const TABLE1_GRID: &str = r#"{
    "mtry": [5, 10, 20],
    "min.node.size": [3, 5, 10, 15],
    "replace": [true, false],
    "sample.fraction": [0.5, 0.7, 0.9, 1.0]
}"#;

pub const TABLE1_EXCLUSIONS: &str = r#"[{"replace": false, "sample.fraction": 1.0}]"#;
