//! Permutation tests for ANOVA terms.
//!
//! Fixed terms are tested on block residuals `r = observed - random part`:
//! `r` is permuted over all cells and the term's sum of squares recomputed.
//! Random terms are tested on the vector residualized on every other term,
//! i.e. residual plus the tested term's own fitted contribution. A joint test
//! uses the sum of its terms' sums of squares. All tests of one call share the
//! same permutations, permutation `b` being drawn from `derive_seed(seed, [b])`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anova::{AnovaResult, Term, TermKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Pcg32};

pub const DEFAULT_PERMUTATIONS: usize = 4999;

/// Permuted statistics within this relative distance below the observed one
/// count as ties, so rounding noise cannot make a tie look significant.
const TIE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationPlan {
    /// Each entry is one test; several terms make a joint test.
    pub tests: Vec<Vec<Term>>,
    pub permutations: usize,
    pub seed: u64,
}

impl PermutationPlan {
    /// One test per term of the fit.
    pub fn all_terms(fit: &AnovaResult, permutations: usize, seed: u64) -> Self {
        PermutationPlan {
            tests: fit.terms.iter().map(|t| vec![t.term.clone()]).collect(),
            permutations,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub terms: Vec<Term>,
    pub observed: f64,
    /// Permuted statistics at least as large as the observed one.
    pub exceed: usize,
    pub permutations: usize,
    pub p_value: f64,
    pub null_mean: f64,
    pub null_max: f64,
}

impl TestResult {
    pub fn label(&self) -> String {
        self.terms.iter().map(Term::to_string).collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub tests: Vec<TestResult>,
}

impl PermutationResult {
    /// p-value of the single-term test of `term`, if run.
    pub fn p_value(&self, term: &Term) -> Option<f64> {
        self.tests
            .iter()
            .find(|t| t.terms.len() == 1 && &t.terms[0] == term)
            .map(|t| t.p_value)
    }
}

/// `observed - (block effects)`: the observations with every random-term
/// contribution removed. Equal to `observed` for tables without blocks.
pub fn block_residuals(fit: &AnovaResult) -> Vec<f64> {
    fit.observed
        .iter()
        .zip(&fit.random_part)
        .map(|(y, r)| y - r)
        .collect()
}

struct Prepared {
    indices: Vec<usize>,
    values: Vec<f64>,
    observed: f64,
}

fn statistic(fit: &AnovaResult, indices: &[usize], values: &[f64]) -> f64 {
    let sse = fit.model.term_sse(values);
    indices.iter().map(|&t| sse[t]).sum()
}

pub fn permutation_test(fit: &AnovaResult, plan: &PermutationPlan) -> Result<PermutationResult> {
    if plan.permutations == 0 {
        return Err(Error::Model("need at least one permutation".into()));
    }
    let r = block_residuals(fit);
    let mut prepared = Vec::with_capacity(plan.tests.len());
    for test in &plan.tests {
        if test.is_empty() {
            return Err(Error::Model("empty permutation test".into()));
        }
        let indices: Vec<usize> = test
            .iter()
            .map(|term| {
                fit.model
                    .term_index(term)
                    .ok_or_else(|| Error::Model(format!("term `{term}` is not in the fitted model")))
            })
            .collect::<Result<_>>()?;
        let all_fixed = indices.iter().all(|&t| fit.terms[t].kind == TermKind::Fixed);
        let values = if all_fixed {
            r.clone()
        } else {
            let mut v = fit.residuals.clone();
            for &t in &indices {
                let c = fit.model.contribution(&fit.observed, t);
                v.iter_mut().zip(c).for_each(|(x, ci)| *x += ci);
            }
            v
        };
        let observed = statistic(fit, &indices, &values);
        prepared.push(Prepared {
            indices,
            values,
            observed,
        });
    }

    let n = fit.observed.len();
    let stats: Vec<Vec<f64>> = (0..plan.permutations)
        .into_par_iter()
        .map_init(
            || (vec![0usize; n], vec![0.0f64; n]),
            |(perm, buf), b| {
                perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
                Pcg32::from_seed(derive_seed(plan.seed, &[b as u64])).shuffle(perm);
                prepared
                    .iter()
                    .map(|p| {
                        buf.iter_mut().zip(perm.iter()).for_each(|(x, &i)| *x = p.values[i]);
                        statistic(fit, &p.indices, buf)
                    })
                    .collect()
            },
        )
        .collect();

    let b = plan.permutations;
    let tests = prepared
        .iter()
        .zip(&plan.tests)
        .enumerate()
        .map(|(k, (p, terms))| {
            let threshold = p.observed - TIE_SLACK * p.observed.abs();
            let exceed = stats.iter().filter(|s| s[k] >= threshold).count();
            let null_mean = stats.iter().map(|s| s[k]).sum::<f64>() / b as f64;
            let null_max = stats.iter().map(|s| s[k]).fold(f64::NEG_INFINITY, f64::max);
            TestResult {
                terms: terms.clone(),
                observed: p.observed,
                exceed,
                permutations: b,
                p_value: (1 + exceed) as f64 / (b + 1) as f64,
                null_mean,
                null_max,
            }
        })
        .collect();
    Ok(PermutationResult { tests })
}
