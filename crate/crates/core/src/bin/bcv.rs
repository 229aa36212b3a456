use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;

use bcv::report::{self, Overrides, Prepared, RunConfig};

/// Tunes hyperparameters with blocked or repeated cross-validation and writes
/// error tables, ANOVA tables, best settings and std.err curves.
#[derive(Debug, Parser)]
#[command(name = "bcv", version)]
struct Cli {
    /// Run configuration (JSON), or a run manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, env = "BCV_THREADS")]
    threads: Option<usize>,
    /// Print the number of settings and runs, then stop.
    #[arg(long)]
    dry_run: bool,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Permutations per test, overriding the config.
    #[arg(long)]
    perms: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
    Overrides {
        threads: cli.threads,
        master_seed: cli.seed,
        permutations: cli.perms,
    }
    .apply(&mut config);
    let start = Instant::now();
    let prep = Prepared::new(config)?;
    if cli.dry_run {
        print!("{}", prep.dry_run_summary());
        return Ok(());
    }
    let output = report::execute(&prep)?;
    report::write_outputs(&prep, &output, &cli.out, start.elapsed().as_secs_f64())?;
    for d in &output.designs {
        let best = bcv::anova::rank_settings(&d.means.means)[0];
        eprintln!(
            "{}: {} runs in {:.1}s, best setting {best} (mean err {:.4})",
            d.plan.notation(),
            d.table.len(),
            d.seconds,
            d.means.means[best]
        );
    }
    eprintln!("wrote {}", cli.out.display());
    Ok(())
}
