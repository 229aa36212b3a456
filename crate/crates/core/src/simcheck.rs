//! Synthetic error tables drawn from the additive block model, used as an
//! oracle for the estimators, variance formulas and permutation tests.
//!
//! Blocked designs draw one `π_a` per CV block and one `ρ_b` per learner
//! block and reuse them for every setting; noise is fresh per cell. In `Yx0`
//! tables `ρ` is fresh per cell; in RCV tables `π`, `ρ` and noise all are.
//!
//! Variances are conditional on the realized blocks: the deviation of a
//! setting mean is measured from the mean of the same table without noise.

use std::io::Write;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anova::{fit_anova, ModelSpec};
use crate::design::table::format_real;
use crate::design::{build_grid, ErrTable, SettingGrid, TableShape};
use crate::error::{Error, Result};
use crate::params::ParamValue;
use crate::rng::{derive_seed, Pcg32};
use crate::stats::KahanSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    Gaussian,
    /// Uniform with the same standard deviation.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub mu: f64,
    pub tau: Vec<f64>,
    pub sigma_pi: f64,
    pub sigma_rho: f64,
    pub sigma_eps: f64,
    pub noise: Noise,
    /// Adds `interaction * π_a * τ_m` to every cell.
    #[serde(default)]
    pub interaction: f64,
    pub seed: u64,
}

impl SyntheticModel {
    pub fn new(mu: f64, tau: Vec<f64>, sigma_pi: f64, sigma_rho: f64, sigma_eps: f64, seed: u64) -> Result<Self> {
        let m = SyntheticModel {
            mu,
            tau,
            sigma_pi,
            sigma_rho,
            sigma_eps,
            noise: Noise::Gaussian,
            interaction: 0.0,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    /// `m` setting effects evenly spread over `[-range/2, range/2]`.
    pub fn linear_tau(m: usize, range: f64) -> Vec<f64> {
        if m == 1 {
            return vec![0.0];
        }
        (0..m)
            .map(|i| range * (i as f64 / (m - 1) as f64 - 0.5))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.is_empty() {
            return Err(Error::Config("synthetic model needs at least one setting".into()));
        }
        let sum: f64 = self.tau.iter().copied().collect::<KahanSum>().total();
        let scale = self.tau.iter().fold(1.0f64, |a, t| a.max(t.abs()));
        if sum.abs() > 1e-12 * scale * self.tau.len() as f64 {
            return Err(Error::Config(format!("tau sums to {sum}, not zero")));
        }
        for (name, s) in [
            ("sigma_pi", self.sigma_pi),
            ("sigma_rho", self.sigma_rho),
            ("sigma_eps", self.sigma_eps),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("{name} = {s} must be finite and >= 0")));
            }
        }
        if !self.mu.is_finite() || !self.interaction.is_finite() {
            return Err(Error::Config("mu and interaction must be finite".into()));
        }
        Ok(())
    }

    pub fn n_settings(&self) -> usize {
        self.tau.len()
    }

    /// Variance of a setting mean given the realized blocks.
    pub fn formula_variance(&self, shape: TableShape) -> f64 {
        let (e, p, r) = (
            self.sigma_eps.powi(2),
            self.sigma_pi.powi(2),
            self.sigma_rho.powi(2),
        );
        let n = shape.replicates() as f64;
        match shape {
            TableShape::Bcv { .. } => e / n,
            TableShape::BcvCvOnly { .. } => (r + e) / n,
            TableShape::Rcv { .. } => (p + r + e) / n,
        }
    }
}

struct Draw {
    rng: Pcg32,
    noise: Noise,
}

impl Draw {
    fn next(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        match self.noise {
            Noise::Gaussian => {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                sigma * z
            }
            Noise::Uniform => sigma * 3f64.sqrt() * (2.0 * self.rng.uniform() - 1.0),
        }
    }
}

/// One simulated table together with its noiseless counterpart.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub table: ErrTable,
    /// `μ + τ_m` plus the blocked effects of each cell.
    pub baseline: Vec<f64>,
    /// Realized CV-block and learner-block effects (blocked axes only).
    pub pi: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Simulated {
    /// Setting means minus the noiseless setting means.
    pub fn deviations(&self) -> Vec<f64> {
        let a = setting_means(&self.table.err, self.table.n_settings());
        let b = setting_means(&self.baseline, self.table.n_settings());
        a.iter().zip(&b).map(|(x, y)| x - y).collect()
    }
}

fn setting_means(values: &[f64], m: usize) -> Vec<f64> {
    let r = values.len() / m;
    values
        .chunks(r)
        .map(|c| c.iter().copied().collect::<KahanSum>().total() / r as f64)
        .collect()
}

pub fn synthetic_grid(m: usize) -> Arc<SettingGrid> {
    Arc::new(
        build_grid(&[("theta".into(), (0..m as i64).map(ParamValue::from).collect())], &[])
            .expect("non-empty grid"),
    )
}

fn shape_tag(shape: TableShape) -> u64 {
    match shape {
        TableShape::Bcv { .. } => 1,
        TableShape::BcvCvOnly { .. } => 2,
        TableShape::Rcv { .. } => 3,
    }
}

/// Replication `replication` of `shape`, drawn from
/// `derive_seed(model.seed, [family, replication])`.
pub fn simulate_table(model: &SyntheticModel, shape: TableShape, replication: u64) -> Simulated {
    simulate_on(model, shape, replication, synthetic_grid(model.n_settings()))
}

fn simulate_on(model: &SyntheticModel, shape: TableShape, replication: u64, grid: Arc<SettingGrid>) -> Simulated {
    let mut d = Draw {
        rng: Pcg32::from_seed(derive_seed(model.seed, &[shape_tag(shape), replication])),
        noise: model.noise,
    };
    let m = model.n_settings();
    let (na, nb) = shape.axes();
    let pi: Vec<f64> = if shape.is_blocked() {
        (0..na).map(|_| d.next(model.sigma_pi)).collect()
    } else {
        Vec::new()
    };
    let rho: Vec<f64> = if matches!(shape, TableShape::Bcv { .. }) {
        (0..nb).map(|_| d.next(model.sigma_rho)).collect()
    } else {
        Vec::new()
    };
    let n = m * na * nb;
    let mut err = Vec::with_capacity(n);
    let mut baseline = Vec::with_capacity(n);
    for &tau in &model.tau {
        for a in 0..na {
            for b in 0..nb {
                let (p, r) = match shape {
                    TableShape::Bcv { .. } => (pi[a], rho[b]),
                    TableShape::BcvCvOnly { .. } => (pi[a], d.next(model.sigma_rho)),
                    TableShape::Rcv { .. } => (d.next(model.sigma_pi), d.next(model.sigma_rho)),
                };
                let e = d.next(model.sigma_eps);
                let base = match shape {
                    TableShape::Bcv { .. } => model.mu + tau + p + r,
                    TableShape::BcvCvOnly { .. } => model.mu + tau + p,
                    TableShape::Rcv { .. } => model.mu + tau,
                };
                baseline.push(base);
                let noiseless = model.mu + tau + p + r;
                err.push(noiseless + e + model.interaction * p * tau);
            }
        }
    }
    let table = ErrTable::from_values(shape, grid, err).expect("complete simulated table");
    Simulated {
        table,
        baseline,
        pi,
        rho,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub design: String,
    pub formula_var: f64,
    pub empirical_var: f64,
    pub ratio: f64,
    pub pass: bool,
    /// Mean deviation of setting means from their noiseless values.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub rows: Vec<VarianceRow>,
    pub replications: usize,
}

impl VarianceReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Columns `design, formula_var, empirical_var, ratio, pass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["design", "formula_var", "empirical_var", "ratio", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.design.clone(),
                format_real(r.formula_var),
                format_real(r.empirical_var),
                format_real(r.ratio),
                r.pass.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<variance report>", e))?;
        Ok(())
    }
}

fn design_name(shape: TableShape) -> String {
    match shape {
        TableShape::Bcv { n_cv, n_learner } => format!("BCV {n_cv}x{n_learner}"),
        TableShape::BcvCvOnly { n_cv } => format!("BCV {n_cv}x0"),
        TableShape::Rcv { n_reps } => format!("RCV {n_reps}Rep"),
    }
}

/// Mean squared deviation of setting means over `n_reps` replications,
/// against the formula variance. A row passes when the ratio is within 10%;
/// when the formula gives 0 the empirical value must be exactly 0.
pub fn validate_variance_formulas(
    model: &SyntheticModel,
    shapes: &[TableShape],
    n_reps: usize,
) -> Result<VarianceReport> {
    model.validate()?;
    if n_reps < 1000 {
        return Err(Error::Config(format!("n_reps = {n_reps}, need at least 1000")));
    }
    let grid = synthetic_grid(model.n_settings());
    let rows = shapes
        .iter()
        .map(|&shape| {
            let per_rep: Vec<(f64, f64)> = (0..n_reps as u64)
                .into_par_iter()
                .map(|rep| {
                    let dev = simulate_on(model, shape, rep, grid.clone()).deviations();
                    let sq: f64 = dev.iter().map(|d| d * d).collect::<KahanSum>().total();
                    let s: f64 = dev.iter().copied().collect::<KahanSum>().total();
                    (sq, s)
                })
                .collect();
            let count = (n_reps * model.n_settings()) as f64;
            let empirical_var = per_rep.iter().map(|p| p.0).collect::<KahanSum>().total() / count;
            let bias = per_rep.iter().map(|p| p.1).collect::<KahanSum>().total() / count;
            let formula_var = model.formula_variance(shape);
            let ratio = if formula_var > 0.0 {
                empirical_var / formula_var
            } else if empirical_var == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            VarianceRow {
                design: design_name(shape),
                formula_var,
                empirical_var,
                ratio,
                pass: (0.9..=1.1).contains(&ratio),
                bias,
            }
        })
        .collect();
    Ok(VarianceReport {
        rows,
        replications: n_reps,
    })
}

/// Outcome of comparing two designs on paired replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub first: String,
    pub second: String,
    pub replications: usize,
    /// Share of replications where the first design's ANOVA standard error
    /// is below the second's.
    pub stderr_wins: f64,
    /// Share of replications where the first design's mean squared setting
    /// deviation is below the second's.
    pub variance_wins: f64,
    pub mean_stderr: (f64, f64),
    pub mean_sq_deviation: (f64, f64),
}

/// Per-replication summary: ANOVA standard error and mean squared deviation.
pub fn replication_summary(sim: &Simulated) -> Result<(f64, f64)> {
    let fit = fit_anova(&sim.table, &ModelSpec::setting_model(sim.table.shape))?;
    let se = (fit.residual_mse()? / sim.table.shape.replicates() as f64).sqrt();
    let dev = sim.deviations();
    let msd = dev.iter().map(|d| d * d).sum::<f64>() / dev.len() as f64;
    Ok((se, msd))
}

pub fn compare_designs(
    model: &SyntheticModel,
    first: TableShape,
    second: TableShape,
    n_reps: usize,
) -> Result<PairedComparison> {
    model.validate()?;
    let grid = synthetic_grid(model.n_settings());
    let pairs: Vec<((f64, f64), (f64, f64))> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let a = replication_summary(&simulate_on(model, first, rep, grid.clone()))?;
            let b = replication_summary(&simulate_on(model, second, rep, grid.clone()))?;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let n = n_reps as f64;
    let share = |f: &dyn Fn(&((f64, f64), (f64, f64))) -> bool| pairs.iter().filter(|p| f(p)).count() as f64 / n;
    let mean = |f: &dyn Fn(&((f64, f64), (f64, f64))) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    Ok(PairedComparison {
        first: design_name(first),
        second: design_name(second),
        replications: n_reps,
        stderr_wins: share(&|p| p.0 .0 < p.1 .0),
        variance_wins: share(&|p| p.0 .1 < p.1 .1),
        mean_stderr: (mean(&|p| p.0 .0), mean(&|p| p.1 .0)),
        mean_sq_deviation: (mean(&|p| p.0 .1), mean(&|p| p.1 .1)),
    })
}
