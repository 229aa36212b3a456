//! Standard error of the setting means against the number of runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::anova::{estimate_setting_means, fit_anova, AnovaResult, ModelSpec};
use crate::design::table::format_real;
use crate::design::{ErrTable, TableShape};
use crate::error::{Error, Result};

/// Note recorded in the run manifest next to the curve.
pub const AGGREGATION_NOTE: &str = "std_err is sqrt(MSE_residual / R) of the model with blocks and settings, \
averaged over settings; per-setting rows use each setting's share of the residual sum of squares";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub family: String,
    pub shape: TableShape,
    pub runs: usize,
    /// `None` for the average over settings.
    pub setting: Option<usize>,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrCurve {
    /// Grouped by family in order of first appearance, then by run count.
    pub points: Vec<CurvePoint>,
    /// Smallest averaged std.err among RCV points.
    pub rcv_min: Option<f64>,
}

impl StdErrCurve {
    /// Averaged points of one family.
    pub fn family(&self, family: &str) -> Vec<&CurvePoint> {
        self.points
            .iter()
            .filter(|p| p.family == family && p.setting.is_none())
            .collect()
    }

    /// Columns `family, design, runs, setting, std_err, rcv_min_std_err`;
    /// `setting` is `mean` on averaged rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["family", "design", "runs", "setting", "std_err", "rcv_min_std_err"])?;
        let rcv_min = self.rcv_min.map(format_real).unwrap_or_default();
        for p in &self.points {
            w.write_record([
                p.family.clone(),
                p.shape.slug(),
                p.runs.to_string(),
                p.setting.map_or_else(|| "mean".to_string(), |m| m.to_string()),
                format_real(p.std_err),
                rcv_min.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<curve csv>", e))?;
        Ok(())
    }
}

/// Shapes on the curve below `shape`. Crossed designs use every `y x z` with
/// `2 <= z <= y`, which for `4x4` gives 2x2, 3x2, 4x2, 3x3, 4x3, 4x4; one
/// shape is kept per run count, preferring the larger `z`.
pub fn curve_shapes(shape: TableShape) -> Vec<TableShape> {
    let mut shapes = match shape {
        TableShape::Bcv { n_cv, n_learner } => {
            let mut s = vec![shape];
            for y in 1..=n_cv {
                for z in 1..=n_learner.min(y) {
                    if y * z >= 2 && (z >= 2 || n_learner == 1) {
                        s.push(TableShape::Bcv { n_cv: y, n_learner: z });
                    }
                }
            }
            s
        }
        TableShape::BcvCvOnly { n_cv } => (2..=n_cv).map(|n_cv| TableShape::BcvCvOnly { n_cv }).collect(),
        TableShape::Rcv { n_reps } => (2..=n_reps).map(|n_reps| TableShape::Rcv { n_reps }).collect(),
    };
    shapes.sort_by_key(|s| (s.replicates(), std::cmp::Reverse(s.axes().1)));
    shapes.dedup_by_key(|s| s.replicates());
    shapes
}

fn fits_inside(small: TableShape, large: TableShape) -> bool {
    let ((a, b), (na, nb)) = (small.axes(), large.axes());
    a <= na && b <= nb
}

/// The smaller table's blocks must be the leading blocks of the larger one.
fn check_nested(small: &ErrTable, large: &ErrTable) -> Result<()> {
    let fail = || {
        Error::Design(format!(
            "{} does not extend {}: seed lists must be nested",
            large.shape.slug(),
            small.shape.slug()
        ))
    };
    if small.grid.settings != large.grid.settings || !fits_inside(small.shape, large.shape) {
        return Err(fail());
    }
    let (na, nb) = small.axes();
    for m in 0..small.n_settings() {
        for a in 0..na {
            for b in 0..nb {
                let (i, j) = (small.index(m, a, b), large.index(m, a, b));
                if small.cv_seeds[i] != large.cv_seeds[j] || small.learner_seeds[i] != large.learner_seeds[j] {
                    return Err(fail());
                }
            }
        }
    }
    Ok(())
}

/// Per-setting std.err: `sqrt(SSE_m / (df_res / M) / R)` with `SSE_m` the
/// residual sum of squares of setting `m`. Their squares average to the
/// pooled `MSE_res / R`.
pub fn per_setting_std_err(fit: &AnovaResult) -> Option<Vec<f64>> {
    let m = fit.setting_means.len();
    let r = fit.shape().replicates();
    let df = fit.residual.df as f64 / m as f64;
    if df <= 0.0 || r < 2 {
        return None;
    }
    Some(
        fit.residuals
            .chunks(r)
            .map(|e| (e.iter().map(|x| x * x).sum::<f64>() / df / r as f64).sqrt())
            .collect(),
    )
}

fn points_for(table: &ErrTable, per_setting: bool) -> Result<Vec<CurvePoint>> {
    let fit = fit_anova(table, &ModelSpec::setting_model(table.shape))?;
    let means = estimate_setting_means(table, &fit)?;
    let Some(std_err) = means.std_err else {
        return Ok(Vec::new());
    };
    let point = |setting, std_err| CurvePoint {
        family: table.shape.family().to_string(),
        shape: table.shape,
        runs: table.shape.replicates(),
        setting,
        std_err,
    };
    let mut points = vec![point(None, std_err)];
    if per_setting {
        if let Some(se) = per_setting_std_err(&fit) {
            points.extend(se.into_iter().enumerate().map(|(m, s)| point(Some(m), s)));
        }
    }
    Ok(points)
}

/// Builds the curve from tables of nested designs. Tables of one family are
/// checked for nesting; the points come from the largest table's leading
/// blocks at [`curve_shapes`] plus every given shape. Shapes whose std.err is
/// undefined are skipped.
pub fn stderr_curve(tables: &[&ErrTable], per_setting: bool) -> Result<StdErrCurve> {
    let mut families: Vec<(&str, Vec<&ErrTable>)> = Vec::new();
    for t in tables {
        let f = t.shape.family();
        match families.iter_mut().find(|(name, _)| *name == f) {
            Some((_, ts)) => ts.push(t),
            None => families.push((f, vec![t])),
        }
    }
    let mut points = Vec::new();
    for (_, mut members) in families {
        members.sort_by_key(|t| t.shape.replicates());
        for pair in members.windows(2) {
            check_nested(pair[0], pair[1])?;
        }
        let largest = *members.last().expect("family has a member");
        let given: Vec<TableShape> = members.iter().map(|t| t.shape).collect();
        let mut shapes: Vec<TableShape> = curve_shapes(largest.shape)
            .into_iter()
            .filter(|s| given.contains(s) || !given.iter().any(|g| g.replicates() == s.replicates()))
            .collect();
        shapes.extend(given.iter().copied());
        shapes.sort_by_key(|s| s.replicates());
        shapes.dedup();
        for shape in shapes {
            points.extend(points_for(&largest.sub_table(shape)?, per_setting)?);
        }
    }
    let rcv_min = points
        .iter()
        .filter(|p| p.setting.is_none() && matches!(p.shape, TableShape::Rcv { .. }))
        .map(|p| p.std_err)
        .reduce(f64::min);
    Ok(StdErrCurve { points, rcv_min })
}
