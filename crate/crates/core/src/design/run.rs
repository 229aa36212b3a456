//! Execution of a design: one pooled out-of-fold loss per cell.

use std::sync::Arc;

use rayon::prelude::*;

use super::grid::SettingGrid;
use super::plan::{
    stream_seed, DesignPlan, DesignVariant, TAG_CELL_LEARNER, TAG_RCV_CV, TAG_RCV_LEARNER,
};
use super::table::{ErrTable, TableMeta};
use crate::data::{Dataset, Response};
use crate::error::{Error, Result};
use crate::learner::{build_learner, check_param_names, compute_loss, fit_model, LearnerSpec, LossFn};
use crate::partition::{partition_folds, FoldPartition};
use crate::rng::derive_seed;

/// Seeds of one cell. The learner seed is per cell; fold `f` trains with
/// `derive_seed(learner_seed, [f])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    pub cv_seed: u64,
    pub learner_seed: u64,
}

pub fn fold_seed(learner_seed: u64, fold: usize) -> u64 {
    derive_seed(learner_seed, &[fold as u64])
}

/// Seeds of every cell in table order, derived from the plan alone.
pub fn cell_seeds(grid: &SettingGrid, plan: &DesignPlan) -> Vec<CellSeeds> {
    let (na, nb) = plan.shape().axes();
    let mut out = Vec::with_capacity(grid.len() * na * nb);
    for m in 0..grid.len() {
        let key = grid.setting_key(m);
        for a in 0..na {
            for b in 0..nb {
                out.push(match &plan.variant {
                    DesignVariant::Bcv {
                        cv_seeds,
                        learner_seeds,
                    } => CellSeeds {
                        cv_seed: cv_seeds[a],
                        learner_seed: learner_seeds[b],
                    },
                    DesignVariant::BcvCvOnly {
                        cv_seeds,
                        master_seed,
                    } => CellSeeds {
                        cv_seed: cv_seeds[a],
                        learner_seed: derive_seed(*master_seed, &[TAG_CELL_LEARNER, a as u64, key]),
                    },
                    DesignVariant::Rcv {
                        master_seed,
                        shared_within_rep,
                        ..
                    } => {
                        if *shared_within_rep {
                            CellSeeds {
                                cv_seed: stream_seed(*master_seed, TAG_RCV_CV, a as u64),
                                learner_seed: stream_seed(*master_seed, TAG_RCV_LEARNER, a as u64),
                            }
                        } else {
                            CellSeeds {
                                cv_seed: derive_seed(*master_seed, &[TAG_RCV_CV, a as u64, key]),
                                learner_seed: derive_seed(*master_seed, &[TAG_RCV_LEARNER, a as u64, key]),
                            }
                        }
                    }
                });
            }
        }
    }
    out
}

/// Pooled out-of-fold predictions for one cell.
pub fn cross_validate(
    dataset: &Dataset,
    spec: &LearnerSpec,
    partition: &FoldPartition,
    learner_seed: u64,
) -> Result<Response> {
    let learner = build_learner(spec, dataset)?;
    let n = dataset.n_rows();
    let mut classes = vec![0u32; n];
    let mut values = vec![0.0f64; n];
    for fold in 0..partition.k() {
        let train = partition.train_rows(fold);
        let test = partition.test_rows(fold);
        let model = fit_model(learner.as_ref(), dataset, &train, fold_seed(learner_seed, fold))?;
        match model.predict(dataset, &test)? {
            Response::Classes(p) => test.iter().zip(p).for_each(|(&r, c)| classes[r] = c),
            Response::Values(p) => test.iter().zip(p).for_each(|(&r, v)| values[r] = v),
        }
    }
    Ok(match dataset.task() {
        crate::data::Task::Classification => Response::Classes(classes),
        crate::data::Task::Regression => Response::Values(values),
    })
}

/// Runs every cell of `plan` over `grid`. `learner.params` apply to every
/// setting and may not overlap the grid's parameters. With `threads = Some(n)`
/// the cells run on a dedicated pool of `n` workers, otherwise on the current
/// pool; the table does not depend on the number of workers.
pub fn run_design(
    dataset: &Dataset,
    grid: &Arc<SettingGrid>,
    plan: &DesignPlan,
    learner: &LearnerSpec,
    loss: LossFn,
    threads: Option<usize>,
) -> Result<ErrTable> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()?
            .install(|| run_cells(dataset, grid, plan, learner, loss)),
        None => run_cells(dataset, grid, plan, learner, loss),
    }
}

/// Learner spec of every setting: the base parameters plus the setting's.
pub fn setting_specs(grid: &SettingGrid, learner: &LearnerSpec) -> Result<Vec<LearnerSpec>> {
    check_param_names(&learner.kind, grid.names.iter().chain(learner.params.keys()).map(String::as_str))?;
    if let Some(name) = grid.names.iter().find(|n| learner.params.contains_key(*n)) {
        return Err(Error::Grid(format!("`{name}` is both a grid and a fixed learner parameter")));
    }
    Ok((0..grid.len())
        .map(|m| {
            let mut params = learner.params.clone();
            params.extend(grid.param_map(m));
            LearnerSpec::new(learner.kind.clone(), params)
        })
        .collect())
}

fn run_cells(
    dataset: &Dataset,
    grid: &Arc<SettingGrid>,
    plan: &DesignPlan,
    learner: &LearnerSpec,
    loss: LossFn,
) -> Result<ErrTable> {
    plan.validate()?;
    if loss.task() != dataset.task() {
        return Err(Error::Loss(format!("{loss} does not apply to a {:?} task", dataset.task())));
    }
    let specs = setting_specs(grid, learner)?;
    for spec in &specs {
        build_learner(spec, dataset)?;
    }
    let seeds = cell_seeds(grid, plan);
    let truth = dataset.target.response();

    // Blocked designs share one partition per CV seed.
    let shared: Vec<FoldPartition> = match &plan.variant {
        DesignVariant::Bcv { cv_seeds, .. } | DesignVariant::BcvCvOnly { cv_seeds, .. } => cv_seeds
            .iter()
            .map(|&s| partition_folds(dataset, plan.strategy, s))
            .collect::<Result<_>>()?,
        DesignVariant::Rcv { .. } => Vec::new(),
    };
    let (na, nb) = plan.shape().axes();
    let err: Vec<f64> = (0..seeds.len())
        .into_par_iter()
        .map(|cell| {
            let m = cell / (na * nb);
            let a = (cell / nb) % na;
            let s = seeds[cell];
            let own;
            let partition = if shared.is_empty() {
                own = partition_folds(dataset, plan.strategy, s.cv_seed)?;
                &own
            } else {
                &shared[a]
            };
            let pred = cross_validate(dataset, &specs[m], partition, s.learner_seed)?;
            compute_loss(loss, &pred, &truth)
        })
        .collect::<Result<_>>()?;
    if let Some(i) = err
        .iter()
        .position(|&e| e < 0.0 || (loss == LossFn::MisclassificationRate && e > 1.0))
    {
        return Err(Error::Loss(format!("cell {i} has out-of-range error {}", err[i])));
    }
    ErrTable::new(
        plan.shape(),
        grid.clone(),
        err,
        seeds.iter().map(|s| s.cv_seed).collect(),
        seeds.iter().map(|s| s.learner_seed).collect(),
        TableMeta {
            dataset: dataset.name.clone(),
            loss: Some(loss),
            notation: plan.notation(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Feature, Target};
    use crate::design::grid::build_grid;
    use crate::params::ParamValue;
    use crate::partition::{PartitionStrategy, Sampling};

    fn data() -> Dataset {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| ((i * 17) % 40) as f64).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64).collect();
        let y: Vec<&str> = (0..n)
            .map(|i| if x[i] + z[i] > 25.0 { "pos" } else { "neg" })
            .collect();
        Dataset::new(
            "d",
            vec!["x".into(), "z".into()],
            vec![Feature::Numeric(x), Feature::Numeric(z)],
            Target::classes(&y),
        )
        .unwrap()
    }

    fn grid() -> Arc<SettingGrid> {
        Arc::new(
            build_grid(
                &[
                    ("mtry".into(), vec![1.into(), 2.into()]),
                    ("min.node.size".into(), vec![1.into(), 4.into()]),
                ],
                &[],
            )
            .unwrap(),
        )
    }

    fn rf() -> LearnerSpec {
        LearnerSpec::new("random_forest", [("num.trees".to_string(), ParamValue::from(5))].into())
    }

    fn srs() -> PartitionStrategy {
        PartitionStrategy::new(4, Sampling::Srs).unwrap()
    }

    #[test]
    fn record_counts_and_blocking() {
        let d = data();
        let g = grid();
        let plan = DesignPlan::bcv_from_master(2, 3, 5, srs()).unwrap();
        let t = run_design(&d, &g, &plan, &rf(), LossFn::MisclassificationRate, Some(1)).unwrap();
        assert_eq!(t.len(), 4 * 6);
        for m in 0..4 {
            for a in 0..2 {
                for b in 0..3 {
                    let i = t.index(m, a, b);
                    assert_eq!(t.cv_seeds[i], t.cv_seeds[t.index(0, a, 0)]);
                    assert_eq!(t.learner_seeds[i], t.learner_seeds[t.index(0, 0, b)]);
                    assert!((0.0..=1.0).contains(&t.err[i]));
                }
            }
        }
    }

    #[test]
    fn rcv_seeds_are_fresh_per_cell() {
        let g = grid();
        let plan = DesignPlan::rcv(16, 3, false, srs()).unwrap();
        let seeds = cell_seeds(&g, &plan);
        let cv: std::collections::HashSet<u64> = seeds.iter().map(|s| s.cv_seed).collect();
        let lr: std::collections::HashSet<u64> = seeds.iter().map(|s| s.learner_seed).collect();
        assert_eq!(cv.len(), seeds.len());
        assert_eq!(lr.len(), seeds.len());
        let shared = cell_seeds(&g, &DesignPlan::rcv(16, 3, true, srs()).unwrap());
        let cv: std::collections::HashSet<u64> = shared.iter().map(|s| s.cv_seed).collect();
        assert_eq!(cv.len(), 16);
    }

    #[test]
    fn thread_count_does_not_change_table() {
        let d = data();
        let g = grid();
        let plan = DesignPlan::rcv(3, 8, false, srs()).unwrap();
        let one = run_design(&d, &g, &plan, &rf(), LossFn::MisclassificationRate, Some(1)).unwrap();
        let three = run_design(&d, &g, &plan, &rf(), LossFn::MisclassificationRate, Some(3)).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn constant_learner_gives_constant_table() {
        let d = data();
        let g = grid();
        let sts = PartitionStrategy::new(4, Sampling::Sts).unwrap();
        let plan = DesignPlan::bcv_from_master(2, 2, 1, sts).unwrap();
        let t = run_design(&d, &g, &plan, &LearnerSpec::new("constant", Default::default()), LossFn::MisclassificationRate, None).unwrap();
        let Target::Classes { codes, .. } = &d.target else { panic!() };
        let ones = codes.iter().filter(|&&c| c == 1).count() as f64;
        let minority = ones.min(40.0 - ones) / 40.0;
        assert!(t.err.iter().all(|&e| e == minority));
    }

    #[test]
    fn rejects_bad_requests() {
        let d = data();
        let g = grid();
        let plan = DesignPlan::rcv(1, 8, false, srs()).unwrap();
        assert!(run_design(&d, &g, &plan, &rf(), LossFn::Rmse, None).is_err());
        assert!(run_design(&d, &g, &plan, &LearnerSpec::new("boosting", Default::default()), LossFn::MisclassificationRate, None).is_err());
        let wide = Arc::new(build_grid(&[("mtry".into(), vec![3.into()])], &[]).unwrap());
        assert!(run_design(&d, &wide, &plan, &rf(), LossFn::MisclassificationRate, None).is_err());
        let clash = Arc::new(build_grid(&[("num.trees".into(), vec![3.into()])], &[]).unwrap());
        assert!(run_design(&d, &clash, &plan, &rf(), LossFn::MisclassificationRate, None).is_err());
    }
}
