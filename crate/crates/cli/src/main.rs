use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hypokfem_cli::experiments::run;
use hypokfem_cli::output::Output;
use hypokfem_cli::{Experiment, ExperimentConfig};

/// Hypocoercive finite elements for the Kolmogorov equation and its optimal control.
#[derive(Parser)]
#[command(name = "hypokfem", version)]
struct Args {
    /// primal-convergence, oc-convergence, alpha-sweep, m-sweep, box-control, timedep, decay or check-all
    experiment: String,
    /// Flat `key = value` file applied on top of the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit with a nonzero status if any acceptance check fails.
    #[arg(long)]
    check: bool,
    /// Include the large meshes.
    #[arg(long)]
    expensive: bool,
    /// Output directory (overrides `out` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(args: &Args) -> Result<bool, Box<dyn std::error::Error>> {
    let experiment: Experiment = args.experiment.parse()?;
    let mut cfg = ExperimentConfig::defaults(experiment, args.expensive);
    if let Some(path) = &args.config {
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    let hash = cfg.hash();
    let mut out = Output::new(&cfg.out, &hash)?;
    eprintln!("{experiment}: config-hash {hash}, output {}", cfg.out.display());
    let outcome = run(&cfg, &mut out, &mut |msg| eprintln!("  {msg}"))?;
    for (k, v) in &outcome.summary {
        println!("{k} = {v}");
    }
    for v in &outcome.verdicts {
        println!("{v}");
    }
    let ok = outcome.verdicts.iter().all(|v| v.passed());
    Ok(ok || !(args.check || experiment == Experiment::CheckAll))
}
