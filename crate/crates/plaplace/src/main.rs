use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plaplace::config::RunConfig;
use plaplace::pipeline;

/// Barrier certification and nested-annulus runs for the evolutionary
/// p-Laplace equation with a moving gradient singularity.
#[derive(Parser)]
#[command(name = "plaplace", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the exponent hypotheses and print the derived constants.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
        /// Override a config field: --set solver.dt=1e-3 (repeatable).
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Search the barrier constants and certify them on the sample grid.
    Tune {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Run the nested-annulus scheme and archive snapshots.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Tuned constants from a previous `tune`; re-tunes when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Verify growth, blow-up, continuity and tracking on an archive.
    Analyze {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Archive directory; defaults to the output directory.
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Merge all reports into one summary with artifact checksums.
    Report {
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(config: &PathBuf, overrides: &[String]) -> Result<RunConfig, pipeline::PipelineError> {
    RunConfig::from_path(config, overrides).map_err(Into::into)
}

fn run() -> Result<(), pipeline::PipelineError> {
    match Cli::parse().cmd {
        Cmd::Validate { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let summary = pipeline::cmd_validate(&cfg)?;
            println!("{summary}");
        }
        Cmd::Tune {
            config,
            out,
            overrides,
        } => {
            let cfg = load(&config, &overrides)?;
            let arts = pipeline::cmd_tune(&cfg, &out)?;
            println!(
                "tuned: K={:.6} C_xi={:.6} sigma={:.6} A={:.1}",
                arts.params.k_scale, arts.params.c_xi, arts.params.sigma, arts.params.a_time
            );
            for c in &arts.report.checks {
                println!(
                    "  [{}] {} (margin {:.3e})",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.margin
                );
            }
            println!("params written to {}", arts.params_path.display());
        }
        Cmd::Simulate {
            config,
            out,
            params,
            overrides,
        } => {
            let cfg = load(&config, &overrides)?;
            let arts = pipeline::cmd_simulate(&cfg, params.as_deref(), &out)?;
            println!(
                "simulated {} runs up to t={} (dt={:.3e})",
                arts.manifest.runs.len(),
                arts.manifest.horizon,
                arts.manifest.dt
            );
            println!(
                "nested chain worst violation: {:.3e}",
                arts.nested.worst_violation
            );
        }
        Cmd::Analyze {
            config,
            out,
            archive,
            overrides,
        } => {
            let cfg = load(&config, &overrides)?;
            let archive = archive.unwrap_or_else(|| out.clone());
            let report = pipeline::cmd_analyze(&cfg, &archive, &out)?;
            for run in &report.runs {
                println!(
                    "i{}_{}: growth slope {:.4}, gradient slope {:.4} (monotone {}), sandwich gap {:.3e}",
                    run.index,
                    run.side.label(),
                    run.growth_fit.slope,
                    run.gradient.slope,
                    run.gradient.monotone_divergence,
                    run.sandwich.worst_gap
                );
            }
        }
        Cmd::Report { out } => {
            let summary = pipeline::cmd_report(&out)?;
            for e in &summary.entries {
                println!("{}: {}", e.id, e.outcome);
            }
            println!("{} artifacts checksummed", summary.checksums.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
