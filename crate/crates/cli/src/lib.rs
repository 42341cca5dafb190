//! Configuration-driven experiment runner.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
pub use experiments::run_experiment;
pub use report::{emit_report, Check, Report};

/// Command-line values that take precedence over a configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(e) = self.experiment {
            cfg.experiment = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.samples {
            if n == 0 {
                return Err(CliError::Config {
                    key: "samples".into(),
                    message: "must be at least 1".into(),
                });
            }
            cfg.samples = n;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub reports: Vec<Report>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(Report::all_pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }
}

/// Runs one configuration and writes its artifacts under `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    if cfg.experiment == Experiment::All {
        return Err(CliError::Config {
            key: "experiment".into(),
            message: "`all` runs a directory of configurations".into(),
        });
    }
    let report = run_experiment(cfg)?;
    let files = emit_report(&report, &cfg.out)?;
    Ok(Outcome {
        reports: vec![report],
        files,
    })
}

/// The `*.cfg` files of `dir`, sorted by name.
pub fn config_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Config {
            key: "config".into(),
            message: format!("{}: {e}", dir.display()),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs every configuration in `dir`; artifacts go to `<out>/<config stem>/`.
pub fn run_all(
    dir: &Path,
    overrides: &Overrides,
    mut each: impl FnMut(&Path, &Report),
) -> Result<Outcome, CliError> {
    let files = config_files(dir)?;
    let configs = files
        .iter()
        .map(|p| {
            let mut cfg = ExperimentConfig::from_file(p)?;
            let o = Overrides {
                experiment: None,
                ..overrides.clone()
            };
            o.apply(&mut cfg)?;
            let stem = p.file_stem().expect("cfg file has a stem");
            cfg.out = cfg.out.join(stem);
            Ok((p, cfg))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut outcome = Outcome::default();
    for (path, cfg) in configs {
        let one = run(&cfg)?;
        each(path, &one.reports[0]);
        outcome.reports.extend(one.reports);
        outcome.files.extend(one.files);
    }
    Ok(outcome)
}
