//! Balanced mixed-model decomposition of an error table.
//!
//! Block terms and the hyperparameter×CV interactions are estimated from
//! marginal means. Fixed terms live in the M-dimensional space of setting
//! means and are fitted sequentially: each term's sum of squares is the
//! projection on the part of its indicator span orthogonal to the earlier
//! terms. In a full factorial grid this equals the usual mean-formula sums of
//! squares; in a grid with excluded combinations it gives Type-I sums.
//!
//! All arithmetic runs on values shifted by the first cell, so a constant
//! table decomposes into exact zeros.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::model::{ModelSpec, Term, TermKind};
use crate::design::{ErrTable, SettingGrid, TableShape};
use crate::error::{Error, Result};
use crate::stats::KahanSum;

/// Squared norm below this fraction of the candidate's own norm counts as
/// linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
struct Groups {
    of: Vec<usize>,
    labels: Vec<String>,
    counts: Vec<usize>,
}

impl Groups {
    /// Levels of one parameter; levels removed by exclusions are dropped.
    fn main(grid: &SettingGrid, name: &str) -> Self {
        let t = grid.names.iter().position(|n| n == name).expect("validated term");
        let kept: Vec<usize> = grid
            .settings
            .iter()
            .map(|s| s.levels[t])
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let labels: Vec<String> = kept.iter().map(|&l| grid.values[t][l].to_string()).collect();
        let of: Vec<usize> = grid
            .settings
            .iter()
            .map(|s| kept.binary_search(&s.levels[t]).expect("observed level"))
            .collect();
        let mut counts = vec![0; labels.len()];
        of.iter().for_each(|&l| counts[l] += 1);
        Groups { of, labels, counts }
    }

    /// Observed level pairs, ordered by (level of `a`, level of `b`).
    fn pair(grid: &SettingGrid, a: &str, b: &str) -> Self {
        let ga = Self::main(grid, a);
        let gb = Self::main(grid, b);
        let keys: BTreeMap<(usize, usize), usize> = ga
            .of
            .iter()
            .zip(&gb.of)
            .map(|(&x, &y)| (x, y))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        let of: Vec<usize> = ga.of.iter().zip(&gb.of).map(|(&x, &y)| keys[&(x, y)]).collect();
        let mut labels = vec![String::new(); keys.len()];
        for (&(x, y), &i) in &keys {
            labels[i] = format!("{}:{}", ga.labels[x], gb.labels[y]);
        }
        let mut counts = vec![0; labels.len()];
        of.iter().for_each(|&l| counts[l] += 1);
        Groups { of, labels, counts }
    }

    fn indicators(&self) -> Vec<Vec<f64>> {
        (0..self.labels.len())
            .map(|l| self.of.iter().map(|&g| f64::from(u8::from(g == l))).collect())
            .collect()
    }

    /// Mean of `u` within each group.
    fn means(&self, u: &[f64]) -> Vec<f64> {
        let mut sums = vec![KahanSum::new(); self.labels.len()];
        for (m, &g) in self.of.iter().enumerate() {
            sums[g].add(u[m]);
        }
        sums.iter()
            .zip(&self.counts)
            .map(|(s, &c)| s.total() / c as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Part {
    Cv,
    Learner,
    CvBy { basis: Vec<Vec<f64>>, groups: Groups },
    Fixed { basis: Vec<Vec<f64>>, groups: Option<Groups> },
    /// Everything in setting space not spanned by earlier fixed terms.
    Rest { df: usize },
}

/// A model bound to a table layout. Compiling once lets permutation tests
/// refit many value vectors cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledModel {
    shape: TableShape,
    n_settings: usize,
    terms: Vec<Term>,
    parts: Vec<Part>,
    /// Pair groups of interaction terms, for effect reporting.
    pair_parents: Vec<Option<(Groups, Groups)>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).collect::<KahanSum>().total()
}

/// Gram-Schmidt (twice) of `candidates` against `chain`; kept vectors are
/// appended to `chain` and returned.
fn extend(chain: &mut Vec<Vec<f64>>, candidates: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut kept = Vec::new();
    for mut v in candidates {
        let norm0 = dot(&v, &v);
        for _ in 0..2 {
            for q in chain.iter() {
                let d = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= d * qi);
            }
        }
        let norm = dot(&v, &v);
        if norm > RANK_TOL * norm0 {
            let s = norm.sqrt();
            v.iter_mut().for_each(|x| *x /= s);
            chain.push(v.clone());
            kept.push(v);
        }
    }
    kept
}

fn project(basis: &[Vec<f64>], u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for q in basis {
        let d = dot(q, u);
        out.iter_mut().zip(q).for_each(|(o, qi)| *o += d * qi);
    }
    out
}

fn sum_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).collect::<KahanSum>().total()
}

/// Per-term fitted values of one value vector.
#[derive(Debug, Clone)]
pub(crate) struct Decomposition {
    shift: f64,
    mu: f64,
    setting_means: Vec<f64>,
    /// Per part: `na` (Cv), `nb` (Learner), `M·na` (CvBy) or `M` values.
    contributions: Vec<Vec<f64>>,
    pub(crate) sse: Vec<f64>,
}

impl CompiledModel {
    pub fn compile(shape: TableShape, grid: &SettingGrid, model: &ModelSpec) -> Result<Self> {
        model.validate(shape, grid)?;
        let m = grid.len();
        let unit = vec![1.0 / (m as f64).sqrt(); m];
        let mut cv_chain = vec![unit.clone()];
        let mut fixed_chain = vec![unit];
        let mut complete = false;
        let mut terms = Vec::new();
        let mut parts = Vec::new();
        let mut pair_parents = Vec::new();
        for term in model.terms() {
            let mut parents = None;
            let part = match term {
                Term::CvSeeds => Part::Cv,
                Term::LearnerSeeds => Part::Learner,
                Term::ParamByCv(p) => {
                    let groups = Groups::main(grid, p);
                    Part::CvBy {
                        basis: extend(&mut cv_chain, groups.indicators()),
                        groups,
                    }
                }
                Term::Setting => {
                    let df = if complete { 0 } else { m - fixed_chain.len() };
                    complete = true;
                    Part::Rest { df }
                }
                Term::Main(_) | Term::Interaction(..) => {
                    let groups = match term {
                        Term::Main(p) => Groups::main(grid, p),
                        Term::Interaction(a, b) => {
                            parents = Some((Groups::main(grid, a), Groups::main(grid, b)));
                            Groups::pair(grid, a, b)
                        }
                        _ => unreachable!(),
                    };
                    let basis = if complete {
                        Vec::new()
                    } else {
                        extend(&mut fixed_chain, groups.indicators())
                    };
                    Part::Fixed {
                        basis,
                        groups: Some(groups),
                    }
                }
            };
            terms.push(term.clone());
            parts.push(part);
            pair_parents.push(parents);
        }
        Ok(CompiledModel {
            shape,
            n_settings: m,
            terms,
            parts,
            pair_parents,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn shape(&self) -> TableShape {
        self.shape
    }

    pub fn n_cells(&self) -> usize {
        self.n_settings * self.shape.replicates()
    }

    pub fn term_index(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn df(&self, t: usize) -> usize {
        let (na, nb) = self.shape.axes();
        match &self.parts[t] {
            Part::Cv => na - 1,
            Part::Learner => nb - 1,
            Part::CvBy { basis, .. } => basis.len() * (na - 1),
            Part::Fixed { basis, .. } => basis.len(),
            Part::Rest { df } => *df,
        }
    }

    pub fn residual_df(&self) -> usize {
        let used: usize = (0..self.terms.len()).map(|t| self.df(t)).sum();
        self.n_cells() - 1 - used
    }

    pub(crate) fn decompose(&self, values: &[f64]) -> Decomposition {
        let m_count = self.n_settings;
        let (na, nb) = self.shape.axes();
        let r = na * nb;
        assert_eq!(values.len(), m_count * r, "value vector does not match the table");
        let shift = values[0];
        let need_cell = self.parts.iter().any(|p| matches!(p, Part::CvBy { .. }));

        let mut total = KahanSum::new();
        let mut a_sums = vec![KahanSum::new(); na];
        let mut b_sums = vec![KahanSum::new(); nb];
        let mut setting_means = Vec::with_capacity(m_count);
        let mut cell_means = if need_cell { Vec::with_capacity(m_count * na) } else { Vec::new() };
        for m in 0..m_count {
            let mut s = KahanSum::new();
            for a in 0..na {
                let mut c = KahanSum::new();
                for b in 0..nb {
                    let z = values[(m * na + a) * nb + b] - shift;
                    c.add(z);
                    b_sums[b].add(z);
                }
                let cell = c.total();
                a_sums[a].add(cell);
                s.add(cell);
                if need_cell {
                    cell_means.push(cell / nb as f64);
                }
            }
            let st = s.total();
            total.add(st);
            setting_means.push(st / r as f64);
        }
        let n = (m_count * r) as f64;
        let mu = total.total() / n;
        // A single block has no effect; computing it would only leave rounding.
        let block_effects = |sums: &[KahanSum], per: usize| -> Vec<f64> {
            if sums.len() == 1 {
                vec![0.0]
            } else {
                sums.iter().map(|s| s.total() / per as f64 - mu).collect()
            }
        };
        let a_eff = block_effects(&a_sums, m_count * nb);
        let b_eff = block_effects(&b_sums, m_count * na);
        let u: Vec<f64> = setting_means.iter().map(|s| s - mu).collect();

        let mut contributions = Vec::with_capacity(self.parts.len());
        let mut sse = Vec::with_capacity(self.parts.len());
        let mut fixed_so_far = vec![0.0; m_count];
        for part in &self.parts {
            let (c, s) = match part {
                Part::Cv => (a_eff.clone(), (m_count * nb) as f64 * sum_sq(&a_eff)),
                Part::Learner => (b_eff.clone(), (m_count * na) as f64 * sum_sq(&b_eff)),
                Part::CvBy { .. } if na == 1 => (vec![0.0; m_count], 0.0),
                Part::CvBy { basis, .. } => {
                    let mut proj = vec![0.0; m_count * na];
                    let mut col = vec![0.0; m_count];
                    for a in 0..na {
                        for m in 0..m_count {
                            col[m] = cell_means[m * na + a] - setting_means[m] - a_eff[a];
                        }
                        for (m, p) in project(basis, &col).into_iter().enumerate() {
                            proj[m * na + a] = p;
                        }
                    }
                    let s = nb as f64 * sum_sq(&proj);
                    (proj, s)
                }
                Part::Fixed { basis, .. } => {
                    let p = project(basis, &u);
                    fixed_so_far.iter_mut().zip(&p).for_each(|(f, x)| *f += x);
                    let s = r as f64 * sum_sq(&p);
                    (p, s)
                }
                Part::Rest { df } => {
                    let p: Vec<f64> = if *df == 0 {
                        vec![0.0; m_count]
                    } else {
                        u.iter().zip(&fixed_so_far).map(|(x, f)| x - f).collect()
                    };
                    fixed_so_far.iter_mut().zip(&p).for_each(|(f, x)| *f += x);
                    let s = r as f64 * sum_sq(&p);
                    (p, s)
                }
            };
            contributions.push(c);
            sse.push(s);
        }
        Decomposition {
            shift,
            mu,
            setting_means,
            contributions,
            sse,
        }
    }

    /// Fitted contribution of term `t` at cell `(m, a, b)`.
    fn contribution_at(&self, d: &Decomposition, t: usize, m: usize, a: usize, b: usize) -> f64 {
        let na = self.shape.axes().0;
        let c = &d.contributions[t];
        match self.parts[t] {
            Part::Cv => c[a],
            Part::Learner => c[b],
            Part::CvBy { .. } => c[m * na + a],
            Part::Fixed { .. } | Part::Rest { .. } => c[m],
        }
    }

    fn contribution_vec(&self, d: &Decomposition, t: usize) -> Vec<f64> {
        let (na, nb) = self.shape.axes();
        let mut out = Vec::with_capacity(self.n_cells());
        for m in 0..self.n_settings {
            for a in 0..na {
                for b in 0..nb {
                    out.push(self.contribution_at(d, t, m, a, b));
                }
            }
        }
        out
    }

    /// Sum of squares of every term for an arbitrary value vector laid out
    /// like the table.
    pub fn term_sse(&self, values: &[f64]) -> Vec<f64> {
        self.decompose(values).sse
    }

    fn effects(&self, d: &Decomposition, t: usize) -> Effects {
        let (na, _) = self.shape.axes();
        let u: Vec<f64> = d.setting_means.iter().map(|s| s - d.mu).collect();
        let c = &d.contributions[t];
        match &self.parts[t] {
            Part::Cv | Part::Learner => Effects {
                labels: (0..c.len()).map(|i| i.to_string()).collect(),
                values: c.clone(),
                weights: vec![1.0; c.len()],
            },
            Part::CvBy { groups, .. } => {
                let mut labels = Vec::new();
                let mut values = Vec::new();
                let mut weights = Vec::new();
                for a in 0..na {
                    let col: Vec<f64> = (0..self.n_settings).map(|m| c[m * na + a]).collect();
                    for (l, v) in groups.means(&col).into_iter().enumerate() {
                        labels.push(format!("{}:{a}", groups.labels[l]));
                        values.push(v);
                        weights.push(groups.counts[l] as f64);
                    }
                }
                Effects { labels, values, weights }
            }
            Part::Fixed { groups: Some(groups), .. } => {
                let mut values = groups.means(&u);
                if let Some((ga, gb)) = &self.pair_parents[t] {
                    let ea = ga.means(&u);
                    let eb = gb.means(&u);
                    let mut first = vec![None; groups.labels.len()];
                    for m in 0..self.n_settings {
                        first[groups.of[m]].get_or_insert(m);
                    }
                    for (g, v) in values.iter_mut().enumerate() {
                        let m = first[g].expect("every pair group is observed");
                        *v -= ea[ga.of[m]] + eb[gb.of[m]];
                    }
                }
                Effects {
                    labels: groups.labels.clone(),
                    values,
                    weights: groups.counts.iter().map(|&c| c as f64).collect(),
                }
            }
            Part::Fixed { groups: None, .. } | Part::Rest { .. } => Effects {
                labels: (0..self.n_settings).map(|m| m.to_string()).collect(),
                values: u,
                weights: vec![1.0; self.n_settings],
            },
        }
    }

    pub fn fit(self: &Arc<Self>, values: &[f64]) -> Result<AnovaResult> {
        if values.len() != self.n_cells() {
            return Err(Error::Unbalanced(format!(
                "{} values for a {}-cell table",
                values.len(),
                self.n_cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unbalanced("non-finite value in table".into()));
        }
        let d = self.decompose(values);
        let (na, nb) = self.shape.axes();
        let n = values.len();
        let mut fitted = Vec::with_capacity(n);
        let mut residuals = Vec::with_capacity(n);
        let mut random_part = Vec::with_capacity(n);
        for m in 0..self.n_settings {
            for a in 0..na {
                for b in 0..nb {
                    let mut f = d.mu;
                    let mut rnd = 0.0;
                    for t in 0..self.parts.len() {
                        let c = self.contribution_at(&d, t, m, a, b);
                        f += c;
                        if self.terms[t].kind() == TermKind::Random {
                            rnd += c;
                        }
                    }
                    let z = values[(m * na + a) * nb + b] - d.shift;
                    residuals.push(z - f);
                    fitted.push(f + d.shift);
                    random_part.push(rnd);
                }
            }
        }
        let total_sse = values
            .iter()
            .map(|v| {
                let x = v - d.shift - d.mu;
                x * x
            })
            .collect::<KahanSum>()
            .total();
        let residual_sse = sum_sq(&residuals);
        let residual_df = self.residual_df();
        let terms = (0..self.terms.len())
            .map(|t| {
                let df = self.df(t);
                TermFit {
                    term: self.terms[t].clone(),
                    kind: self.terms[t].kind(),
                    df,
                    sse: d.sse[t],
                    mse: (df > 0).then(|| d.sse[t] / df as f64),
                    effects: self.effects(&d, t),
                }
            })
            .collect();
        Ok(AnovaResult {
            mu: d.mu + d.shift,
            terms,
            residual: SumOfSquares {
                df: residual_df,
                sse: residual_sse,
                mse: (residual_df > 0).then(|| residual_sse / residual_df as f64),
            },
            total: SumOfSquares {
                df: n - 1,
                sse: total_sse,
                mse: (n > 1).then(|| total_sse / (n - 1) as f64),
            },
            setting_means: d.setting_means.iter().map(|s| s + d.shift).collect(),
            observed: values.to_vec(),
            fitted,
            residuals,
            random_part,
            model: self.clone(),
        })
    }

    /// Per-cell fitted contribution of term `t` for `values`.
    pub fn contribution(&self, values: &[f64], t: usize) -> Vec<f64> {
        let d = self.decompose(values);
        self.contribution_vec(&d, t)
    }
}

/// Effect estimates of one term. For unequal level counts the estimates sum
/// to zero when weighted by `weights`.
#[derive(Debug, Clone, PartialEq)]
pub struct Effects {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Effects {
    pub fn weighted_sum(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .collect::<KahanSum>()
            .total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermFit {
    pub term: Term,
    pub kind: TermKind,
    pub df: usize,
    pub sse: f64,
    pub mse: Option<f64>,
    pub effects: Effects,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumOfSquares {
    pub df: usize,
    pub sse: f64,
    pub mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AnovaResult {
    pub mu: f64,
    pub terms: Vec<TermFit>,
    pub residual: SumOfSquares,
    pub total: SumOfSquares,
    /// Mean of each setting over the replication axes.
    pub setting_means: Vec<f64>,
    pub observed: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of the random-term contributions in each cell.
    pub random_part: Vec<f64>,
    pub model: Arc<CompiledModel>,
}

impl AnovaResult {
    pub fn term(&self, term: &Term) -> Option<&TermFit> {
        self.terms.iter().find(|t| &t.term == term)
    }

    pub fn residual_mse(&self) -> Result<f64> {
        self.residual.mse.ok_or_else(|| Error::NoResidualDf("the model leaves no residual degrees of freedom".into()))
    }

    pub fn shape(&self) -> TableShape {
        self.model.shape()
    }
}

pub fn fit_anova(table: &ErrTable, model: &ModelSpec) -> Result<AnovaResult> {
    let compiled = Arc::new(CompiledModel::compile(table.shape, &table.grid, model)?);
    compiled.fit(&table.err)
}
