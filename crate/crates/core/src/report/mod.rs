//! Configured runs: designs, ANOVA, permutation tests and the files they write.
//!
//! Layout of the output directory:
//!
//! ```text
//! <out>/<design slug>/err_table.csv
//! <out>/<design slug>/anova.csv
//! <out>/<design slug>/best_settings.csv
//! <out>/stderr_curve.csv
//! <out>/run_manifest.json
//! ```

pub mod config;
pub mod curve;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

pub use config::{DatasetConfig, DesignSpec, RunConfig};
pub use curve::{curve_shapes, stderr_curve, CurvePoint, StdErrCurve, AGGREGATION_NOTE};

use crate::anova::{
    estimate_setting_means, fit_anova, rank_settings, write_anova_csv, AnovaResult, ModelSpec, SettingMeans,
    Term,
};
use crate::data::{load_csv, Loaded};
use crate::design::table::format_real;
use crate::design::{build_grid, run_design, setting_specs, DesignPlan, ErrTable, SettingGrid, TableShape};
use crate::error::{Error, Result};
use crate::learner::{LearnerSpec, LossFn};
use crate::permtest::{permutation_test, PermutationPlan, PermutationResult};
use crate::rng::derive_seed;

/// Stream tag of the permutation seed under the master seed.
const TAG_PERMUTATION: u64 = 6;

/// Command-line overrides of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub threads: Option<usize>,
    pub master_seed: Option<u64>,
    pub permutations: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(t) = self.threads {
            config.threads = Some(t);
        }
        if let Some(s) = self.master_seed {
            config.master_seed = s;
        }
        if let Some(b) = self.permutations {
            config.permutations = b;
        }
    }
}

/// A validated run: data loaded, grid built, designs resolved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub data: Loaded,
    pub grid: Arc<SettingGrid>,
    pub learner: LearnerSpec,
    pub loss: LossFn,
    pub plans: Vec<DesignPlan>,
}

impl Prepared {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(build_grid(&config.grid_params()?, &config.exclusions)?);
        let learner = LearnerSpec::new(config.learner.clone(), config.learner_params.clone());
        setting_specs(&grid, &learner)?;
        let d = &config.dataset;
        let data = load_csv(&d.path, &d.target, d.task, &d.schema_overrides)?;
        let loss = config.loss.unwrap_or_else(|| LossFn::default_for(d.task));
        if loss.task() != d.task {
            return Err(Error::Config(format!("loss {loss} does not fit a {:?} task", d.task)));
        }
        let plans: Vec<DesignPlan> = config
            .designs
            .iter()
            .map(|s| s.resolve(config.master_seed, config.strategy))
            .collect::<Result<_>>()?;
        let mut slugs = HashSet::new();
        for p in &plans {
            if !slugs.insert(p.slug()) {
                return Err(Error::Config(format!("design {} is listed twice", p.slug())));
            }
            design_model(&config, p.shape(), &grid)?;
        }
        Ok(Prepared {
            config,
            data,
            grid,
            learner,
            loss,
            plans,
        })
    }

    /// The config with absolute paths and every seed listed.
    pub fn resolved_config(&self) -> RunConfig {
        let mut c = self.config.clone();
        if let Ok(p) = std::path::absolute(&c.dataset.path) {
            c.dataset.path = p;
        }
        c.loss = Some(self.loss);
        c.designs = self.plans.iter().map(DesignSpec::from_plan).collect();
        c
    }

    /// `M`, then runs (cells) and learner fits per design.
    pub fn dry_run_summary(&self) -> String {
        let m = self.grid.len();
        let k = self.config.strategy.folds;
        let mut s = format!(
            "dataset {}: {} rows, {} features, {} dropped\nsettings: {m}\n",
            self.data.dataset.name,
            self.data.dataset.n_rows(),
            self.data.dataset.n_features(),
            self.data.dropped_rows
        );
        for p in &self.plans {
            let runs = m * p.shape().replicates();
            s.push_str(&format!("{}: {runs} runs, {} fits\n", p.notation(), runs * k));
        }
        s
    }
}

/// The config's model for one design, or the default model.
pub fn design_model(config: &RunConfig, shape: TableShape, grid: &SettingGrid) -> Result<ModelSpec> {
    let model = match &config.model {
        Some(m) => {
            let blocks = ModelSpec::block_terms(shape);
            ModelSpec {
                random: m
                    .random
                    .iter()
                    .filter(|t| match t {
                        Term::ParamByCv(_) => blocks.contains(&Term::CvSeeds),
                        t => blocks.contains(t),
                    })
                    .cloned()
                    .collect(),
                fixed: m.fixed.clone(),
            }
        }
        None => ModelSpec::hyperparameter_model(shape, grid, &config.interactions),
    };
    model.validate(shape, grid)?;
    Ok(model)
}

/// Everything computed for one design.
#[derive(Debug, Clone)]
pub struct DesignResult {
    pub plan: DesignPlan,
    pub table: ErrTable,
    pub anova: AnovaResult,
    pub permutations: Option<PermutationResult>,
    /// From the model with blocks and settings only.
    pub means: SettingMeans,
    pub seconds: f64,
}

impl DesignResult {
    pub fn p_values(&self) -> Vec<Option<f64>> {
        self.anova
            .terms
            .iter()
            .map(|t| self.permutations.as_ref().and_then(|p| p.p_value(&t.term)))
            .collect()
    }
}

/// Analyses an error table: fitted model, permutation tests, setting means.
pub fn analyse(
    table: &ErrTable,
    model: &ModelSpec,
    permutations: usize,
    seed: u64,
) -> Result<(AnovaResult, Option<PermutationResult>, SettingMeans)> {
    let fit = fit_anova(table, model)?;
    let perms = if permutations > 0 {
        Some(permutation_test(&fit, &PermutationPlan::all_terms(&fit, permutations, seed))?)
    } else {
        None
    };
    let setting_fit = fit_anova(table, &ModelSpec::setting_model(table.shape))?;
    let means = estimate_setting_means(table, &setting_fit)?;
    Ok((fit, perms, means))
}

pub fn permutation_seed(master: u64) -> u64 {
    derive_seed(master, &[TAG_PERMUTATION])
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub designs: Vec<DesignResult>,
    pub curve: StdErrCurve,
}

/// Runs every design on a pool sized by `config.threads`.
pub fn execute(prep: &Prepared) -> Result<RunOutput> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = prep.config.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    pool.install(|| {
        let mut designs = Vec::with_capacity(prep.plans.len());
        for plan in &prep.plans {
            let start = Instant::now();
            let table = run_design(&prep.data.dataset, &prep.grid, plan, &prep.learner, prep.loss, None)?;
            let model = design_model(&prep.config, plan.shape(), &prep.grid)?;
            let (anova, permutations, means) = analyse(
                &table,
                &model,
                prep.config.permutations,
                permutation_seed(prep.config.master_seed),
            )?;
            designs.push(DesignResult {
                plan: plan.clone(),
                table,
                anova,
                permutations,
                means,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let tables: Vec<&ErrTable> = designs.iter().map(|d| &d.table).collect();
        let curve = stderr_curve(&tables, prep.config.per_setting_curve)?;
        Ok(RunOutput { designs, curve })
    })
}

/// Columns `rank`, `setting_index`, one per hyperparameter, `mean_err`,
/// `std_err`, `runs`: the `top_k` settings with the lowest mean.
pub fn write_best_settings<W: std::io::Write>(
    grid: &SettingGrid,
    means: &SettingMeans,
    top_k: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rank".to_string(), "setting_index".to_string()];
    header.extend(grid.names.iter().cloned());
    header.extend(["mean_err", "std_err", "runs"].map(String::from));
    w.write_record(&header)?;
    let se = means.std_err.map(format_real).unwrap_or_default();
    for (rank, m) in rank_settings(&means.means).into_iter().take(top_k).enumerate() {
        let mut row = vec![(rank + 1).to_string(), m.to_string()];
        row.extend(grid.settings[m].values.iter().map(ToString::to_string));
        row.extend([format_real(means.means[m]), se.clone(), means.replicates.to_string()]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<best settings csv>", e))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ManifestDesign<'a> {
    notation: String,
    slug: String,
    plan: &'a DesignPlan,
    runs: usize,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    data: ManifestData<'a>,
    settings: usize,
    permutation_seed: u64,
    designs: Vec<ManifestDesign<'a>>,
    curve_aggregation: &'static str,
    total_seconds: f64,
    config: RunConfig,
}

#[derive(Debug, Serialize)]
struct ManifestData<'a> {
    name: &'a str,
    rows: usize,
    features: usize,
    dropped_rows: usize,
}

fn create(path: &Path, written: &mut Vec<PathBuf>) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    written.push(path.to_path_buf());
    Ok(std::io::BufWriter::new(f))
}

fn write_all(prep: &Prepared, run: &RunOutput, out: &Path, seconds: f64, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for d in &run.designs {
        let dir = out.join(d.plan.slug());
        if !dir.exists() {
            fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            written.push(dir.clone());
        }
        d.table.write_csv(create(&dir.join("err_table.csv"), written)?)?;
        write_anova_csv(
            &d.anova,
            &d.p_values(),
            prep.config.permutations,
            create(&dir.join("anova.csv"), written)?,
        )?;
        write_best_settings(
            &prep.grid,
            &d.means,
            prep.config.top_k,
            create(&dir.join("best_settings.csv"), written)?,
        )?;
    }
    run.curve.write_csv(create(&out.join("stderr_curve.csv"), written)?)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        data: ManifestData {
            name: &prep.data.dataset.name,
            rows: prep.data.dataset.n_rows(),
            features: prep.data.dataset.n_features(),
            dropped_rows: prep.data.dropped_rows,
        },
        settings: prep.grid.len(),
        permutation_seed: permutation_seed(prep.config.master_seed),
        designs: run
            .designs
            .iter()
            .map(|d| ManifestDesign {
                notation: d.plan.notation(),
                slug: d.plan.slug(),
                plan: &d.plan,
                runs: d.table.len(),
                seconds: d.seconds,
            })
            .collect(),
        curve_aggregation: AGGREGATION_NOTE,
        total_seconds: seconds,
        config: prep.resolved_config(),
    };
    let path = out.join("run_manifest.json");
    let mut f = create(&path, written)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    std::io::Write::write_all(&mut f, b"\n").map_err(|e| Error::io(&path, e))?;
    std::io::Write::flush(&mut f).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Writes every output file; on failure removes what was written.
pub fn write_outputs(prep: &Prepared, run: &RunOutput, out: &Path, seconds: f64) -> Result<()> {
    let created_root = !out.exists();
    let mut written = Vec::new();
    let result = write_all(prep, run, out, seconds, &mut written);
    if result.is_err() {
        for p in written.iter().rev() {
            let _ = if p.is_dir() { fs::remove_dir(p) } else { fs::remove_file(p) };
        }
        if created_root {
            let _ = fs::remove_dir(out);
        }
    }
    result
}

/// Loads, runs and writes; returns the prepared run for reporting.
pub fn run(config: RunConfig, out: &Path) -> Result<(Prepared, RunOutput)> {
    let start = Instant::now();
    let prep = Prepared::new(config)?;
    let output = execute(&prep)?;
    write_outputs(&prep, &output, out, start.elapsed().as_secs_f64())?;
    Ok((prep, output))
}
