use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rsmd_core::harness::{self, ExperimentSpec, HarnessOptions};
use rsmd_core::SchemeKind;

#[derive(Parser)]
#[command(name = "rsmd", version, about = "Monte Carlo runner for rate-splitting D2D resource allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML experiment spec.
    Run {
        spec: PathBuf,
        /// Overrides the spec's base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (default: the spec's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the spec's num_drops.
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Mean, 95% CI and gains per scheme and sweep value from a rows.csv.
    Summarize {
        rows: PathBuf,
        /// Scheme the gains are measured against, e.g. "TIN/Multicast".
        #[arg(long)]
        reference: String,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match Cli::parse().command {
        Command::Run { spec, seed, workers, out, drops } => {
            let mut s = ExperimentSpec::load(&spec).with_context(|| format!("loading {}", spec.display()))?;
            if let Some(seed) = seed {
                s.base_seed = seed;
            }
            if let Some(d) = drops {
                s.num_drops = d;
            }
            if workers == Some(0) {
                bail!("--workers must be at least 1");
            }
            let dir = out.unwrap_or_else(|| s.output.clone());
            s.output = dir.clone();
            let start = Instant::now();
            let result = harness::run_experiment_to_dir(&s, &HarnessOptions { workers, ..Default::default() }, &dir)?;
            let failed = result.rows.iter().filter(|r| !r.is_ok()).count();
            eprintln!(
                "{} rows ({failed} flagged) in {:.1} s -> {}",
                result.rows.len(),
                start.elapsed().as_secs_f64(),
                dir.display()
            );
            let summary = harness::summarize(&result.rows, s.schemes[0].label())?;
            print!("{}", harness::format_summary(&summary));
        }
        Command::Summarize { rows, reference, out } => {
            if SchemeKind::parse(&reference).is_none() {
                let known: Vec<&str> = SchemeKind::ALL.iter().map(|k| k.label()).collect();
                bail!("unknown reference scheme {reference:?}; expected one of {}", known.join(", "));
            }
            let data = harness::read_rows(&rows).with_context(|| format!("reading {}", rows.display()))?;
            let summary = harness::summarize(&data, &reference)?;
            if let Some(path) = out {
                harness::write_summary(&path, &summary)?;
            }
            print!("{}", harness::format_summary(&summary));
        }
    }
    Ok(())
}
