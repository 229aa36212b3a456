//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use bcv::anova::{estimate_setting_means, fit_anova, ModelSpec, Term};
use bcv::data::{load_csv, Dataset, Feature, Target, Task};
use bcv::design::{build_grid, run_design, DesignPlan, ErrTable, Exclusion, SettingGrid, TableShape};
use bcv::learner::{LearnerSpec, LossFn};
use bcv::params::ParamValue;
use bcv::partition::{partition_folds, PartitionStrategy, Sampling};
use bcv::permtest::{block_residuals, permutation_test, PermutationPlan};
use bcv::report::{self, stderr_curve, RunConfig};
use bcv::rng::{derive_seed, Pcg32};
use bcv::simcheck::{compare_designs, simulate_table, validate_variance_formulas, SyntheticModel};
use bcv::stats::ols_slope;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn bcv(y: usize, z: usize) -> TableShape {
    TableShape::Bcv { n_cv: y, n_learner: z }
}

/// Components used by the variance criteria: σε = 0.2, σπ = 0.173, σρ = 0.1.
fn variance_model(seed: u64) -> SyntheticModel {
    SyntheticModel::new(0.15, SyntheticModel::linear_tau(84, 0.05), 0.173, 0.1, 0.2, seed).unwrap()
}

fn table1_grid() -> Arc<SettingGrid> {
    let grid: serde_json::Map<String, serde_json::Value> = serde_json::from_str(common::TABLE1_GRID).unwrap();
    let params: Vec<(String, Vec<ParamValue>)> = grid
        .into_iter()
        .map(|(k, v)| (k, serde_json::from_value(v).unwrap()))
        .collect();
    let exclusions: Vec<Exclusion> = serde_json::from_str(common::TABLE1_EXCLUSIONS).unwrap();
    Arc::new(build_grid(&params, &exclusions).unwrap())
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let report = validate_variance_formulas(&variance_model(101), &[bcv(4, 4)], 10_000).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let row = &report.rows[0];
    let rel = (row.empirical_var - 0.0025).abs() / 0.0025;
    ensure(rel <= 0.10, format!("empirical {:.6} vs 0.0025 ({:.1}% off)", row.empirical_var, 100.0 * rel))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "BCV 4x4 var {:.6} vs 0.0025 ({:+.1}%), {:.1}s",
        row.empirical_var,
        100.0 * (row.empirical_var / 0.0025 - 1.0),
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Check {
    let report = validate_variance_formulas(&variance_model(202), &[TableShape::Rcv { n_reps: 16 }], 10_000)
        .map_err(|e| e.to_string())?;
    let row = &report.rows[0];
    let rel = (row.empirical_var - 0.005).abs() / 0.005;
    ensure(rel <= 0.10, format!("empirical {:.6} vs 0.005 ({:.1}% off)", row.empirical_var, 100.0 * rel))?;
    ensure(row.pass, format!("ratio to the exact formula {:.4}", row.ratio))?;
    Ok(format!("RCV 16Rep var {:.6} vs 0.005 ({:+.1}%)", row.empirical_var, 100.0 * (row.empirical_var / 0.005 - 1.0)))
}

fn real_data_std_errs() -> Result<(f64, f64, Duration), String> {
    let start = Instant::now();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/breast_cancer_500.csv");
    let data = load_csv(path, "diagnosis", Task::Classification, &BTreeMap::new())
        .map_err(|e| e.to_string())?
        .dataset;
    let grid = table1_grid();
    let spec = LearnerSpec::new("random_forest", [("num.trees".to_string(), ParamValue::from(200))].into());
    let strategy = PartitionStrategy::new(5, Sampling::Srs).unwrap();
    let std_err = |plan: DesignPlan| -> Result<f64, String> {
        let table = run_design(&data, &grid, &plan, &spec, LossFn::MisclassificationRate, None).map_err(|e| e.to_string())?;
        let fit = fit_anova(&table, &ModelSpec::setting_model(table.shape)).map_err(|e| e.to_string())?;
        estimate_setting_means(&table, &fit)
            .map_err(|e| e.to_string())?
            .std_err
            .ok_or_else(|| "std.err undefined".to_string())
    };
    let b = std_err(DesignPlan::bcv_from_master(2, 2, 1, strategy).map_err(|e| e.to_string())?)?;
    let r = std_err(DesignPlan::rcv(4, 1, false, strategy).map_err(|e| e.to_string())?)?;
    Ok((b, r, start.elapsed()))
}

fn criterion_3() -> Check {
    let model = variance_model(303);
    let mut parts = Vec::new();
    for (first, second) in [(bcv(2, 2), TableShape::Rcv { n_reps: 4 }), (bcv(4, 4), TableShape::Rcv { n_reps: 16 })] {
        let c = compare_designs(&model, first, second, 1000).map_err(|e| e.to_string())?;
        ensure(
            c.stderr_wins >= 0.99,
            format!("{} beats {} in only {:.1}% of replications", c.first, c.second, 100.0 * c.stderr_wins),
        )?;
        parts.push(format!("{} < {} in {:.1}%", c.first, c.second, 100.0 * c.stderr_wins));
    }
    let (b, r, elapsed) = real_data_std_errs()?;
    ensure(b < r, format!("real data: BCV 2x2 std.err {b:.5} not below RCV 4Rep {r:.5}"))?;
    ensure(elapsed <= Duration::from_secs(15 * 60), format!("real data took {elapsed:?}"))?;
    parts.push(format!(
        "breast cancer (n=500, 84 settings, 200 trees): BCV 2x2 {b:.5} < RCV 4Rep {r:.5} in {:.0}s",
        elapsed.as_secs_f64()
    ));
    Ok(parts.join("; "))
}

fn additive(fit: &bcv::anova::AnovaResult) -> bool {
    let parts: f64 = fit.terms.iter().map(|t| t.sse).sum::<f64>() + fit.residual.sse;
    (parts - fit.total.sse).abs() <= 1e-9 * fit.total.sse.max(f64::MIN_POSITIVE)
}

/// A table the model reproduces exactly: random main effects, a two-way
/// interaction, and for blocked shapes CV, learner and replace-by-CV effects.
fn model_exact(shape: TableShape, seed: u64) -> (ErrTable, ModelSpec) {
    let grid = table1_grid();
    let mut rng = Pcg32::from_seed(seed);
    let mut draw = |n: usize| (0..n).map(|_| rng.uniform() - 0.5).collect::<Vec<f64>>();
    let mains: Vec<Vec<f64>> = grid.values.iter().map(|v| draw(v.len())).collect();
    let inter = draw(grid.values[0].len() * grid.values[1].len());
    let (na, nb) = shape.axes();
    let pi = draw(na);
    let rho = draw(nb);
    let by_cv = draw(grid.values[2].len() * na);
    let mut err = Vec::new();
    for s in &grid.settings {
        let l = &s.levels;
        let tau: f64 = (0..4).map(|t| mains[t][l[t]]).sum::<f64>() + inter[l[0] * grid.values[1].len() + l[1]];
        for a in 0..na {
            for b in 0..nb {
                let mut v = 0.3 + tau;
                if shape.is_blocked() {
                    v += pi[a] + by_cv[l[2] * na + a];
                }
                if matches!(shape, TableShape::Bcv { .. }) {
                    v += rho[b];
                }
                err.push(v);
            }
        }
    }
    let mut model = ModelSpec::hyperparameter_model(shape, &grid, &[("mtry".into(), "min.node.size".into())]);
    if shape.is_blocked() {
        model.random.push(Term::ParamByCv("replace".into()));
    }
    (ErrTable::from_values(shape, grid, err).unwrap(), model)
}

fn criterion_4() -> Check {
    let mut worst: f64 = 0.0;
    let mut fits = 0;
    for (i, shape) in [bcv(4, 4), bcv(2, 3), TableShape::BcvCvOnly { n_cv: 3 }, TableShape::Rcv { n_reps: 5 }]
        .into_iter()
        .enumerate()
    {
        let (table, model) = model_exact(shape, 40 + i as u64);
        let fit = fit_anova(&table, &model).map_err(|e| e.to_string())?;
        let ratio = fit.residual.sse / fit.total.sse;
        worst = worst.max(ratio);
        ensure(ratio <= 1e-12, format!("{}: residual/total = {ratio:e}", shape.slug()))?;
        ensure(additive(&fit), format!("{}: sums of squares do not add up", shape.slug()))?;
        fits += 1;
    }

    // Cell (a, b, m) = 1 + 4a + 2b + m on a 2x2 design with two settings.
    let mut err = Vec::new();
    for m in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                err.push((1 + 4 * a + 2 * b + m) as f64);
            }
        }
    }
    let grid = Arc::new(build_grid(&[("theta".into(), vec![0.into(), 1.into()])], &[]).unwrap());
    let table = ErrTable::from_values(bcv(2, 2), grid, err).unwrap();
    let fit = fit_anova(&table, &ModelSpec::setting_model(table.shape)).map_err(|e| e.to_string())?;
    let sse: Vec<f64> = fit.terms.iter().map(|t| t.sse).collect();
    ensure(sse == [32.0, 8.0, 2.0], format!("hand example gives {sse:?}"))?;
    ensure(fit.residual.sse == 0.0 && additive(&fit), "hand example residual")?;
    fits += 1;

    let mut rng = Pcg32::from_seed(4);
    for _ in 0..200 {
        let shape = match rng.index(3) {
            0 => bcv(1 + rng.index(4), 1 + rng.index(4)),
            1 => TableShape::BcvCvOnly { n_cv: 1 + rng.index(5) },
            _ => TableShape::Rcv { n_reps: 1 + rng.index(5) },
        };
        let grid = table1_grid();
        let err: Vec<f64> = (0..grid.len() * shape.replicates()).map(|_| rng.uniform()).collect();
        let table = ErrTable::from_values(shape, grid.clone(), err).unwrap();
        for model in [
            ModelSpec::setting_model(shape),
            ModelSpec::hyperparameter_model(shape, &grid, &[("replace".into(), "sample.fraction".into())]),
        ] {
            let fit = fit_anova(&table, &model).map_err(|e| e.to_string())?;
            ensure(additive(&fit), format!("{}: sums of squares do not add up", shape.slug()))?;
            fits += 1;
        }
    }
    Ok(format!("exact tables residual/total <= {worst:.1e}; 2x2x2 SSE [32, 8, 2]; additivity on {fits} fits"))
}

fn criterion_5() -> Check {
    let mut rng = Pcg32::from_seed(5);
    let (mut max_sum, mut max_fit, mut max_block): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let grid = table1_grid();
    for _ in 0..300 {
        let shape = match rng.index(3) {
            0 => bcv(1 + rng.index(4), 1 + rng.index(4)),
            1 => TableShape::BcvCvOnly { n_cv: 1 + rng.index(5) },
            _ => TableShape::Rcv { n_reps: 1 + rng.index(5) },
        };
        let err: Vec<f64> = (0..grid.len() * shape.replicates()).map(|_| rng.uniform()).collect();
        let table = ErrTable::from_values(shape, grid.clone(), err).unwrap();
        let mut full = ModelSpec::hyperparameter_model(shape, &grid, &[("mtry".into(), "replace".into())]);
        if shape.is_blocked() {
            full.random.push(Term::ParamByCv("min.node.size".into()));
        }
        for model in [ModelSpec::setting_model(shape), full] {
            let fit = fit_anova(&table, &model).map_err(|e| e.to_string())?;
            for t in &fit.terms {
                max_sum = max_sum.max(t.effects.weighted_sum().abs());
            }
            for i in 0..fit.observed.len() {
                max_fit = max_fit.max((fit.fitted[i] + fit.residuals[i] - fit.observed[i]).abs());
            }
            if model.fixed == [Term::Setting] {
                let r = block_residuals(&fit);
                let reps = shape.replicates();
                for (i, x) in r.iter().enumerate() {
                    max_block = max_block.max((x - fit.setting_means[i / reps] - fit.residuals[i]).abs());
                }
            }
        }
    }
    ensure(max_sum <= 1e-10, format!("effect sum {max_sum:e}"))?;
    ensure(max_fit <= 1e-12, format!("fitted + residual - observed {max_fit:e}"))?;
    ensure(max_block <= 1e-12, format!("block residual identity {max_block:e}"))?;
    Ok(format!("max |effect sum| {max_sum:.1e}, |fit+res-obs| {max_fit:.1e}, |block identity| {max_block:.1e}"))
}

fn criterion_6() -> Check {
    let shape = bcv(4, 4);
    let null = SyntheticModel::new(0.2, vec![0.0; 20], 0.1, 0.05, 0.1, 606).unwrap();
    let p_values: Vec<f64> = (0..1000u64)
        .into_par_iter()
        .map(|rep| {
            let table = simulate_table(&null, shape, rep).table;
            let fit = fit_anova(&table, &ModelSpec::setting_model(shape)).unwrap();
            let plan = PermutationPlan {
                tests: vec![vec![Term::Setting]],
                permutations: 999,
                seed: derive_seed(66, &[rep]),
            };
            permutation_test(&fit, &plan).unwrap().tests[0].p_value
        })
        .collect();
    let rate = p_values.iter().filter(|&&p| p <= 0.05).count() as f64 / 1000.0;
    ensure((0.03..=0.07).contains(&rate), format!("null rejection rate {rate:.3}"))?;

    let strong = SyntheticModel::new(0.2, SyntheticModel::linear_tau(20, 1.0), 0.1, 0.05, 0.01, 607).unwrap();
    let fit = fit_anova(&simulate_table(&strong, shape, 0).table, &ModelSpec::setting_model(shape)).unwrap();
    let res = permutation_test(&fit, &PermutationPlan { tests: vec![vec![Term::Setting]], permutations: 999, seed: 1 })
        .map_err(|e| e.to_string())?;
    let p = res.tests[0].p_value;
    ensure(p == 1.0 / 1000.0, format!("strong effect p = {p}"))?;
    Ok(format!("null rejection rate {rate:.3} at alpha 0.05; strong effect p = 1/1000"))
}

fn criterion_7() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data_path = tmp.path().join("data.csv");
    std::fs::write(&data_path, common::random_raw(77, 150, 5).to_csv()).map_err(|e| e.to_string())?;
    let config_text = format!(
        r#"{{
            "dataset": {{"path": {:?}, "target": "label", "task": "classification"}},
            "learner_params": {{"num.trees": 15}},
            "grid": {{"mtry": [1, 3], "min.node.size": [1, 5], "replace": [true, false]}},
            "strategy": {{"folds": 5, "sampling": "STS"}},
            "designs": [{{"type": "bcv", "y": 3, "z": 2}}, {{"type": "bcv", "y": 3, "z": 0}}, {{"type": "rcv", "reps": 4}}],
            "interactions": [["mtry", "replace"]],
            "permutations": 499,
            "master_seed": 7,
            "per_setting_curve": true
        }}"#,
        data_path
    );
    let read_all = |out: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![out.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for e in std::fs::read_dir(&dir).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.extension().is_some_and(|x| x == "csv") {
                    files.push((p.strip_prefix(out).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        files
    };
    let mut outputs = Vec::new();
    for threads in [1usize, 4, 8] {
        let mut config = RunConfig::from_json(&config_text).map_err(|e| e.to_string())?;
        config.threads = Some(threads);
        let out = tmp.path().join(format!("out{threads}"));
        report::run(config, &out).map_err(|e| e.to_string())?;
        outputs.push(read_all(&out));
    }
    ensure(outputs[0].len() == 10, format!("{} csv files", outputs[0].len()))?;
    ensure(outputs[0] == outputs[1] && outputs[0] == outputs[2], "outputs differ between thread counts")?;
    let bytes: usize = outputs[0].iter().map(|f| f.1.len()).sum();
    Ok(format!("{} CSVs ({bytes} bytes) identical at 1, 4 and 8 threads", outputs[0].len()))
}

fn criterion_8() -> Check {
    let mut rng = Pcg32::from_seed(8);
    let count = 50;
    for i in 0..count {
        let n = 8 + rng.index(53);
        let p = 1 + rng.index(6);
        let raw = common::random_raw(800 + i, n, p);
        common::single_tree_matches_oracle(&raw, i).map_err(|e| format!("dataset {i} (n={n}, p={p}): {e}"))?;
    }
    Ok(format!("{count} datasets (n <= 60, p <= 6) match exhaustive CART on every row"))
}

fn criterion_9() -> Check {
    let model = variance_model(909);
    let shapes = bcv::report::curve_shapes(bcv(4, 4));
    let reps = 300;
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let table = simulate_table(&model, bcv(4, 4), rep).table;
            let curve = stderr_curve(&[&table], false).unwrap();
            curve.family("BCV YxZ").iter().map(|p| p.std_err).collect()
        })
        .collect();
    let runs: Vec<f64> = shapes.iter().map(|s| (s.replicates() as f64).ln()).collect();
    let mean_se: Vec<f64> = (0..shapes.len())
        .map(|k| (per_rep.iter().map(|r| r[k]).sum::<f64>() / reps as f64).ln())
        .collect();
    let slope = ols_slope(&runs, &mean_se);
    ensure((slope + 0.5).abs() <= 0.05, format!("slope {slope:.4}"))?;
    Ok(format!("log-log slope {slope:.4} over runs [4, 6, 8, 9, 12, 16]"))
}

fn labelled(n: usize, n_labels: usize, rng: &mut Pcg32) -> Dataset {
    let mut labels: Vec<usize> = (0..n).map(|_| rng.index(n_labels)).collect();
    labels[0] = 0;
    labels[n - 1] = 1;
    let labels: Vec<String> = labels.into_iter().map(|l| format!("c{l}")).collect();
    Dataset::new(
        "partition",
        vec!["x".into()],
        vec![Feature::Numeric(vec![0.0; n])],
        Target::classes(&labels),
    )
    .unwrap()
}

fn criterion_10() -> Check {
    let mut rng = Pcg32::from_seed(10);
    for t in 0..10_000u64 {
        let n = 2 + rng.index(400);
        let k = 2 + rng.index(n.min(20) - 1);
        let seed = derive_seed(1000, &[t]);
        let sampling = if rng.index(2) == 0 { Sampling::Srs } else { Sampling::Sts };
        let data = labelled(n, 2 + rng.index(4), &mut rng);
        let p = partition_folds(&data, PartitionStrategy::new(k, sampling).unwrap(), seed).map_err(|e| e.to_string())?;
        let sizes = p.fold_sizes();
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        ensure(
            sizes.iter().sum::<usize>() == n && spread <= 1 && sizes.iter().all(|&s| s > 0),
            format!("triple {t}: n={n} k={k} sizes {sizes:?}"),
        )?;
        if sampling == Sampling::Sts {
            let Target::Classes { codes, labels } = &data.target else { unreachable!() };
            for l in 0..labels.len() as u32 {
                let mut per = vec![0usize; k];
                codes.iter().enumerate().filter(|(_, &c)| c == l).for_each(|(r, _)| per[p.fold_of[r]] += 1);
                let spread = per.iter().max().unwrap() - per.iter().min().unwrap();
                ensure(spread <= 1, format!("triple {t}: label {l} spread {spread}"))?;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (n, k) in [(50, 2), (97, 5), (208, 10)] {
        let data = labelled(n, 2, &mut rng);
        let strategy = PartitionStrategy::new(k, Sampling::Srs).unwrap();
        let hits = (0..10_000u64)
            .filter(|&s| partition_folds(&data, strategy, derive_seed(1010, &[s])).unwrap().fold_of[0] == 0)
            .count();
        let dev = (hits as f64 / 10_000.0 - 1.0 / k as f64).abs();
        worst = worst.max(dev);
        ensure(dev <= 0.02, format!("n={n} k={k}: P(row 0 in fold 0) off by {dev:.4}"))?;
    }
    Ok(format!("10000 triples balanced and stratified; SRS marginal max deviation {worst:.4}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("variance formula, BCV 4x4", criterion_1),
        ("variance formula, RCV 16Rep", criterion_2),
        ("blocking beats randomization", criterion_3),
        ("ANOVA exactness", criterion_4),
        ("zero-sum and identity invariants", criterion_5),
        ("permutation-test calibration", criterion_6),
        ("end-to-end determinism", criterion_7),
        ("single-tree oracle", criterion_8),
        ("square-root decay", criterion_9),
        ("partition invariants", criterion_10),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !filter.is_empty() && !filter.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {number:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {number:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
