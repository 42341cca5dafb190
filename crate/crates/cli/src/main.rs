use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use uthermo_cli::{run, run_all, CliError, Experiment, ExperimentConfig, Outcome, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "uthermo",
    version,
    about = "Unstable entropy and pressure experiments on random toral systems"
)]
struct Args {
    /// Configuration file, or a directory of them for `--experiment all`.
    #[arg(long, env = "UTHERMO_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "UTHERMO_EXPERIMENT")]
    experiment: Option<Experiment>,
    #[arg(long, env = "UTHERMO_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "UTHERMO_SAMPLES")]
    samples: Option<usize>,
    #[arg(long, env = "UTHERMO_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "UTHERMO_WORKERS")]
    workers: Option<usize>,
}

fn print(reports: &[uthermo_cli::Report]) {
    for r in reports {
        for line in r.summary_lines() {
            println!("{line}");
        }
    }
}

fn execute(args: &Args) -> Result<Outcome, CliError> {
    let overrides = Overrides {
        experiment: args.experiment,
        seed: args.seed,
        samples: args.samples,
        out: args.out.clone(),
    };
    let config = args.config.clone();
    let is_dir = config.as_ref().is_some_and(|p| p.is_dir());
    if args.experiment == Some(Experiment::All) || is_dir {
        let dir = config.unwrap_or_else(|| PathBuf::from("configs"));
        return run_all(&dir, &overrides, |path, report| {
            println!("# {}", path.display());
            print(std::slice::from_ref(report));
        });
    }
    let path = config.ok_or_else(|| CliError::Config {
        key: "config".into(),
        message: "no configuration file given".into(),
    })?;
    let mut cfg = ExperimentConfig::from_file(&path)?;
    overrides.apply(&mut cfg)?;
    let outcome = run(&cfg)?;
    print(&outcome.reports);
    Ok(outcome)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        if w == 0 {
            eprintln!("config error in `workers`: must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| execute(&args)) {
        Ok(outcome) => {
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
