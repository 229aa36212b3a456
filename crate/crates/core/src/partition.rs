//! Seeded K-fold partitions.
//!
//! SRS shuffles the instance indices with Fisher–Yates and cuts the shuffled
//! order into `k` contiguous chunks, the first `n % k` of size `ceil(n/k)`.
//! STS shuffles each stratum, then deals the strata one after the other into
//! folds round-robin starting at a seed-drawn offset, so both the overall and
//! the per-stratum fold counts differ by at most one. Regression targets are
//! stratified on `k` quantile bins of the target.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Target};
use crate::error::{Error, Result};
use crate::rng::Pcg32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sampling {
    #[serde(rename = "SRS", alias = "srs")]
    Srs,
    #[serde(rename = "STS", alias = "sts")]
    Sts,
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Srs => "SRS",
            Sampling::Sts => "STS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionStrategy {
    pub folds: usize,
    pub sampling: Sampling,
}

impl PartitionStrategy {
    pub fn new(folds: usize, sampling: Sampling) -> Result<Self> {
        if folds < 2 {
            return Err(Error::Partition(format!("k = {folds}, need k >= 2")));
        }
        Ok(Self { folds, sampling })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    pub fold_of: Vec<usize>,
    pub cv_seed: u64,
    pub strategy: PartitionStrategy,
}

impl FoldPartition {
    pub fn k(&self) -> usize {
        self.strategy.folds
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// Instance indices in fold `fold`, ascending.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    /// Instance indices outside fold `fold`, ascending.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    /// Audit dump: `instance_index,fold`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["instance_index", "fold"])?;
        for (i, f) in self.fold_of.iter().enumerate() {
            w.write_record([i.to_string(), f.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<partition csv>", e))?;
        Ok(())
    }
}

/// Stratum of every instance: class code, or quantile bin of a real target.
fn strata(target: &Target, k: usize) -> (usize, Vec<usize>) {
    match target {
        Target::Classes { labels, codes } => {
            (labels.len(), codes.iter().map(|&c| c as usize).collect())
        }
        Target::Values(values) => {
            let n = values.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            let mut bin = vec![0; n];
            for (rank, &i) in order.iter().enumerate() {
                bin[i] = rank * k / n;
            }
            (k, bin)
        }
    }
}

pub fn partition_folds(
    dataset: &Dataset,
    strategy: PartitionStrategy,
    cv_seed: u64,
) -> Result<FoldPartition> {
    let n = dataset.n_rows();
    let k = strategy.folds;
    if k < 2 {
        return Err(Error::Partition(format!("k = {k}, need k >= 2")));
    }
    if k > n {
        return Err(Error::Partition(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = Pcg32::from_seed(cv_seed);
    let mut fold_of = vec![0usize; n];
    match strategy.sampling {
        Sampling::Srs => {
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            let base = n / k;
            let extra = n % k;
            let mut pos = 0;
            for fold in 0..k {
                let size = base + usize::from(fold < extra);
                for &i in &order[pos..pos + size] {
                    fold_of[i] = fold;
                }
                pos += size;
            }
        }
        Sampling::Sts => {
            let (n_strata, stratum) = strata(&dataset.target, k);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
            for (i, &s) in stratum.iter().enumerate() {
                members[s].push(i);
            }
            let mut pos = rng.index(k);
            for group in &mut members {
                rng.shuffle(group);
                for &i in group.iter() {
                    fold_of[i] = pos % k;
                    pos += 1;
                }
            }
        }
    }
    Ok(FoldPartition {
        fold_of,
        cv_seed,
        strategy,
    })
}
