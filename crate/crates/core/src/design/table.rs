//! Complete balanced tables of CV errors.
//!
//! Cells are stored densely, setting-major: cell `(m, a, b)` sits at
//! `(m * n_a + a) * n_b + b`, where `a` is the CV-seed index (or repetition)
//! and `b` the learner-seed index.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::SettingGrid;
use super::plan::TableShape;
use crate::error::{Error, Result};
use crate::learner::LossFn;
use crate::params::ParamValue;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TableMeta {
    pub dataset: String,
    pub loss: Option<LossFn>,
    pub notation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrTable {
    pub shape: TableShape,
    pub grid: Arc<SettingGrid>,
    pub err: Vec<f64>,
    pub cv_seeds: Vec<u64>,
    pub learner_seeds: Vec<u64>,
    pub meta: TableMeta,
}

impl ErrTable {
    /// Checks completeness and finiteness. Negative values are allowed so that
    /// simulated tables can be stored; loss-range checks happen in `run_design`.
    pub fn new(
        shape: TableShape,
        grid: Arc<SettingGrid>,
        err: Vec<f64>,
        cv_seeds: Vec<u64>,
        learner_seeds: Vec<u64>,
        meta: TableMeta,
    ) -> Result<Self> {
        let n = grid.len() * shape.replicates();
        if err.len() != n || cv_seeds.len() != n || learner_seeds.len() != n {
            return Err(Error::Unbalanced(format!(
                "{} settings x {} replicates needs {n} cells, got {}",
                grid.len(),
                shape.replicates(),
                err.len()
            )));
        }
        if let Some(i) = err.iter().position(|e| !e.is_finite()) {
            return Err(Error::Unbalanced(format!("cell {i} has non-finite error")));
        }
        Ok(ErrTable {
            shape,
            grid,
            err,
            cv_seeds,
            learner_seeds,
            meta,
        })
    }

    /// Table without seeds, for simulated or hand-built data.
    pub fn from_values(shape: TableShape, grid: Arc<SettingGrid>, err: Vec<f64>) -> Result<Self> {
        let n = err.len();
        Self::new(shape, grid, err, vec![0; n], vec![0; n], TableMeta::default())
    }

    pub fn n_settings(&self) -> usize {
        self.grid.len()
    }

    pub fn axes(&self) -> (usize, usize) {
        self.shape.axes()
    }

    pub fn len(&self) -> usize {
        self.err.len()
    }

    pub fn is_empty(&self) -> bool {
        self.err.is_empty()
    }

    pub fn index(&self, m: usize, a: usize, b: usize) -> usize {
        let (na, nb) = self.axes();
        (m * na + a) * nb + b
    }

    pub fn get(&self, m: usize, a: usize, b: usize) -> f64 {
        self.err[self.index(m, a, b)]
    }

    /// Keeps the first `n_a` blocks (or repetitions) and, for crossed
    /// designs, the first `n_b` learner blocks.
    pub fn sub_table(&self, shape: TableShape) -> Result<Self> {
        let ok = match (self.shape, shape) {
            (TableShape::Bcv { n_cv, n_learner }, TableShape::Bcv { n_cv: a, n_learner: b }) => {
                a <= n_cv && b <= n_learner
            }
            (TableShape::BcvCvOnly { n_cv }, TableShape::BcvCvOnly { n_cv: a }) => a <= n_cv,
            (TableShape::Rcv { n_reps }, TableShape::Rcv { n_reps: a }) => a <= n_reps,
            _ => false,
        };
        let (na, nb) = shape.axes();
        if !ok || na == 0 || nb == 0 {
            return Err(Error::Design(format!(
                "{} is not a sub-design of {}",
                shape.slug(),
                self.shape.slug()
            )));
        }
        let mut err = Vec::with_capacity(self.n_settings() * na * nb);
        let mut cv = Vec::with_capacity(err.capacity());
        let mut lr = Vec::with_capacity(err.capacity());
        for m in 0..self.n_settings() {
            for a in 0..na {
                for b in 0..nb {
                    let i = self.index(m, a, b);
                    err.push(self.err[i]);
                    cv.push(self.cv_seeds[i]);
                    lr.push(self.learner_seeds[i]);
                }
            }
        }
        Self::new(shape, self.grid.clone(), err, cv, lr, self.meta.clone())
    }

    /// Columns: `setting_index`, one per hyperparameter, `cv_seed_index` and
    /// `learner_seed_index` (or `rep`), `cv_seed`, `learner_seed`, `err`.
    /// `learner_seed_index` is empty for `Yx0` tables, whose learner seeds are
    /// not blocked.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["setting_index".to_string()];
        header.extend(self.grid.names.iter().cloned());
        match self.shape {
            TableShape::Rcv { .. } => header.push("rep".into()),
            _ => {
                header.push("cv_seed_index".into());
                header.push("learner_seed_index".into());
            }
        }
        header.extend(["cv_seed", "learner_seed", "err"].map(String::from));
        w.write_record(&header)?;
        let (na, nb) = self.axes();
        for m in 0..self.n_settings() {
            for a in 0..na {
                for b in 0..nb {
                    let i = self.index(m, a, b);
                    let mut row = vec![m.to_string()];
                    row.extend(self.grid.settings[m].values.iter().map(|v| v.to_string()));
                    row.push(a.to_string());
                    match self.shape {
                        TableShape::Bcv { .. } => row.push(b.to_string()),
                        TableShape::BcvCvOnly { .. } => row.push(String::new()),
                        TableShape::Rcv { .. } => {}
                    }
                    row.push(self.cv_seeds[i].to_string());
                    row.push(self.learner_seeds[i].to_string());
                    row.push(format_real(self.err[i]));
                    w.write_record(&row)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<err table>", e))?;
        Ok(())
    }

    /// Inverse of [`ErrTable::write_csv`]. Rows may come in any order.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let bad = |msg: &str| Error::Unbalanced(format!("error table: {msg}"));
        if header.first().map(String::as_str) != Some("setting_index") || header.len() < 5 {
            return Err(bad("unexpected header"));
        }
        let rcv = header.iter().any(|h| h == "rep");
        let n_coord = if rcv { 1 } else { 2 };
        let n_params = header.len() - 1 - n_coord - 3;
        let names = header[1..1 + n_params].to_vec();
        let mut rows: Vec<(usize, usize, Option<usize>, Vec<ParamValue>, u64, u64, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<u64> {
                rec[i].parse::<u64>().map_err(|_| bad(&format!("bad integer `{}`", &rec[i])))
            };
            let m = num(0)? as usize;
            let values = (1..=n_params).map(|i| ParamValue::parse_cell(&rec[i])).collect();
            let a = num(1 + n_params)? as usize;
            let b = if rcv || rec[2 + n_params].is_empty() {
                None
            } else {
                Some(num(2 + n_params)? as usize)
            };
            let base = 1 + n_params + n_coord;
            let err: f64 = rec[base + 2]
                .parse()
                .map_err(|_| bad(&format!("bad error value `{}`", &rec[base + 2])))?;
            rows.push((m, a, b, values, num(base)?, num(base + 1)?, err));
        }
        if rows.is_empty() {
            return Err(bad("no rows"));
        }
        let n_settings = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let na = rows.iter().map(|r| r.1).max().unwrap() + 1;
        let crossed = rows.iter().any(|r| r.2.is_some());
        if crossed && rows.iter().any(|r| r.2.is_none()) {
            return Err(bad("mixed learner_seed_index cells"));
        }
        let nb = rows.iter().map(|r| r.2.unwrap_or(0)).max().unwrap() + 1;
        let shape = if rcv {
            TableShape::Rcv { n_reps: na }
        } else if crossed {
            TableShape::Bcv {
                n_cv: na,
                n_learner: nb,
            }
        } else {
            TableShape::BcvCvOnly { n_cv: na }
        };
        let n = n_settings * na * nb;
        if rows.len() != n {
            return Err(bad(&format!("{} rows, expected {n}", rows.len())));
        }
        let mut setting_values: Vec<Option<Vec<ParamValue>>> = vec![None; n_settings];
        let mut err = vec![f64::NAN; n];
        let mut cv = vec![0; n];
        let mut lr = vec![0; n];
        let mut seen = vec![false; n];
        for (m, a, b, values, cs, ls, e) in rows {
            let i = (m * na + a) * nb + b.unwrap_or(0);
            if seen[i] {
                return Err(bad(&format!("duplicate cell ({m}, {a}, {})", b.unwrap_or(0))));
            }
            seen[i] = true;
            match &setting_values[m] {
                Some(v) if *v != values => {
                    return Err(bad(&format!("setting {m} has inconsistent values")))
                }
                Some(_) => {}
                None => setting_values[m] = Some(values),
            }
            err[i] = e;
            cv[i] = cs;
            lr[i] = ls;
        }
        let grid = SettingGrid::from_settings(names, setting_values.into_iter().map(Option::unwrap).collect())?;
        Self::new(shape, Arc::new(grid), err, cv, lr, TableMeta::default())
    }
}

/// Shortest representation that round-trips exactly.
pub fn format_real(x: f64) -> String {
    format!("{x}")
}
