//! Experiment configuration files.
//!
//! ```text
//! system = systems/cat.sys
//! experiment = pressure
//! delta = 0.1
//! n_grid = 2..14
//! eps_grid = 0.02 0.04
//! expect = 0.9624
//! tolerance = 0.0481
//! ```
//!
//! Paths are relative to the configuration file. Integer grids accept
//! `a..b` and `a..b:step` ranges as well as explicit lists.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use uthermo::measures::EntropyMethod;
use uthermo::sysfile::key_values;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Certify,
    Pressure,
    Entropy,
    Smb,
    Gibbs,
    VpScan,
    PropertySuite,
    InfoIdentities,
    All,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Spectrum,
        Experiment::Certify,
        Experiment::Pressure,
        Experiment::Entropy,
        Experiment::Smb,
        Experiment::Gibbs,
        Experiment::VpScan,
        Experiment::PropertySuite,
        Experiment::InfoIdentities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Certify => "certify",
            Experiment::Pressure => "pressure",
            Experiment::Entropy => "entropy",
            Experiment::Smb => "smb",
            Experiment::Gibbs => "gibbs",
            Experiment::VpScan => "vp-scan",
            Experiment::PropertySuite => "property-suite",
            Experiment::InfoIdentities => "info-identities",
            Experiment::All => "all",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .chain([Experiment::All])
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub system: Option<PathBuf>,
    pub experiment: Experiment,
    pub seed: u64,
    pub samples: usize,
    pub out: PathBuf,
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub base_grid: usize,
    pub omega_samples: usize,
    pub entropy_method: EntropyMethod,
    pub entropy_delta: f64,
    pub entropy_n_grid: Vec<usize>,
    pub entropy_eps: f64,
    pub grid_k: usize,
    pub orbit_length: usize,
    pub spectrum_length: usize,
    pub potentials: Vec<String>,
    pub sigma: String,
    pub measures: Vec<String>,
    pub expect: Option<f64>,
    pub tolerance: f64,
    pub max_gap: Option<f64>,
    pub max_spread: Option<f64>,
    pub robustness: bool,
    pub spaces: usize,
    pub max_points: usize,
    pub mixing_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: None,
            experiment: Experiment::Pressure,
            seed: 1,
            samples: 200,
            out: PathBuf::from("out"),
            delta: 0.1,
            n_grid: (2..=14).collect(),
            eps_grid: vec![0.02, 0.04],
            base_grid: 3,
            omega_samples: 1,
            entropy_method: EntropyMethod::BowenBall,
            entropy_delta: 0.25,
            entropy_n_grid: (4..=32).step_by(4).collect(),
            entropy_eps: 0.05,
            grid_k: 6,
            orbit_length: 200,
            spectrum_length: 10_000,
            potentials: vec!["zero".into()],
            sigma: "sin:0:1".into(),
            measures: vec!["haar".into()],
            expect: None,
            tolerance: 0.05,
            max_gap: None,
            max_spread: None,
            robustness: false,
            spaces: 100,
            max_points: 8,
            mixing_samples: 10_000,
        }
    }
}

const KEYS: [&str; 28] = [
    "system",
    "experiment",
    "seed",
    "samples",
    "out",
    "delta",
    "n_grid",
    "eps_grid",
    "base_grid",
    "omega_samples",
    "entropy.method",
    "entropy.delta",
    "entropy.n_grid",
    "entropy.eps",
    "entropy.grid_k",
    "orbit_length",
    "spectrum_length",
    "potentials",
    "sigma",
    "measures",
    "expect",
    "tolerance",
    "max_gap",
    "max_spread",
    "robustness",
    "spaces",
    "max_points",
    "mixing_samples",
];

fn bad(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn number<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse::<T>()
        .map_err(|_| bad(key, format!("`{v}` is not a valid value")))
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("{v} must be positive")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize, CliError> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(bad(key, "must be at least 1"))
    }
}

fn words(v: &str) -> Vec<String> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn specs(v: &str) -> Vec<String> {
    v.split_whitespace().map(str::to_string).collect()
}

fn strictly_increasing<T: PartialOrd>(key: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(bad(key, "grid is empty"));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad(key, "grid must be strictly increasing"));
    }
    Ok(())
}

/// Parses `1 2 3`, `2..14` or `20..200:20`.
pub fn parse_usize_grid(key: &str, v: &str) -> Result<Vec<usize>, CliError> {
    let grid = if let Some((lo, rest)) = v.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, number::<usize>(key, step.trim())?),
            None => (rest, 1),
        };
        if step == 0 {
            return Err(bad(key, "range step must be positive"));
        }
        let lo = number::<usize>(key, lo.trim())?;
        let hi = number::<usize>(key, hi.trim())?;
        (lo..=hi).step_by(step).collect()
    } else {
        words(v)
            .iter()
            .map(|s| number::<usize>(key, s))
            .collect::<Result<Vec<_>, _>>()?
    };
    strictly_increasing(key, &grid)?;
    Ok(grid)
}

pub fn parse_f64_grid(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    let grid = words(v)
        .iter()
        .map(|s| number::<f64>(key, s).and_then(|x| positive(key, x)))
        .collect::<Result<Vec<_>, _>>()?;
    strictly_increasing(key, &grid)?;
    Ok(grid)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses configuration text; relative paths are joined to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let kvs = key_values(text).map_err(|e| bad("config", e.to_string()))?;
        let mut seen = BTreeMap::new();
        let mut cfg = Self::default();
        for (line, key, v) in kvs {
            if !KEYS.contains(&key.as_str()) {
                return Err(bad(&key, format!("unknown key at line {line}")));
            }
            if let Some(prev) = seen.insert(key.clone(), line) {
                return Err(bad(
                    &key,
                    format!("duplicate key at line {line} (first at line {prev})"),
                ));
            }
            let k = key.as_str();
            match k {
                "system" => cfg.system = Some(base.join(&v)),
                "experiment" => cfg.experiment = v.parse().map_err(|e: String| bad(k, e))?,
                "seed" => cfg.seed = number(k, &v)?,
                "samples" => cfg.samples = at_least_one(k, number(k, &v)?)?,
                "out" => cfg.out = PathBuf::from(&v),
                "delta" => cfg.delta = positive(k, number(k, &v)?)?,
                "n_grid" => cfg.n_grid = parse_usize_grid(k, &v)?,
                "eps_grid" => cfg.eps_grid = parse_f64_grid(k, &v)?,
                "base_grid" => cfg.base_grid = at_least_one(k, number(k, &v)?)?,
                "omega_samples" => cfg.omega_samples = at_least_one(k, number(k, &v)?)?,
                "entropy.method" => {
                    cfg.entropy_method = match v.as_str() {
                        "bowen" => EntropyMethod::BowenBall,
                        "partition" => EntropyMethod::PartitionRate,
                        other => {
                            return Err(bad(k, format!("`{other}` is not bowen or partition")))
                        }
                    }
                }
                "entropy.delta" => cfg.entropy_delta = positive(k, number(k, &v)?)?,
                "entropy.n_grid" => cfg.entropy_n_grid = parse_usize_grid(k, &v)?,
                "entropy.eps" => cfg.entropy_eps = positive(k, number(k, &v)?)?,
                "entropy.grid_k" => cfg.grid_k = at_least_one(k, number(k, &v)?)?,
                "orbit_length" => cfg.orbit_length = at_least_one(k, number(k, &v)?)?,
                "spectrum_length" => cfg.spectrum_length = at_least_one(k, number(k, &v)?)?,
                "potentials" => cfg.potentials = specs(&v),
                "sigma" => cfg.sigma = v,
                "measures" => cfg.measures = specs(&v),
                "expect" => cfg.expect = Some(number(k, &v)?),
                "tolerance" => cfg.tolerance = positive(k, number(k, &v)?)?,
                "max_gap" => cfg.max_gap = Some(positive(k, number(k, &v)?)?),
                "max_spread" => cfg.max_spread = Some(positive(k, number(k, &v)?)?),
                "robustness" => cfg.robustness = number(k, &v)?,
                "spaces" => cfg.spaces = at_least_one(k, number(k, &v)?)?,
                "max_points" => cfg.max_points = at_least_one(k, number(k, &v)?)?,
                "mixing_samples" => cfg.mixing_samples = at_least_one(k, number(k, &v)?)?,
                _ => unreachable!("key list and match agree"),
            }
        }
        if cfg.potentials.is_empty() {
            return Err(bad("potentials", "list is empty"));
        }
        if cfg.measures.is_empty() {
            return Err(bad("measures", "list is empty"));
        }
        let needs_system = !matches!(cfg.experiment, Experiment::InfoIdentities | Experiment::All);
        if needs_system && cfg.system.is_none() {
            return Err(bad("system", "missing required key"));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::parse(text, Path::new("/cfg"))
    }

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_usize_grid("n", "2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(
            parse_usize_grid("n", "20..60:20").unwrap(),
            vec![20, 40, 60]
        );
        assert_eq!(parse_usize_grid("n", "1, 4 9").unwrap(), vec![1, 4, 9]);
        assert_eq!(parse_f64_grid("e", "0.02 0.04").unwrap(), vec![0.02, 0.04]);
    }

    #[test]
    fn decreasing_eps_grid_names_the_key() {
        let err = parse("system = a.sys\neps_grid = 0.04 0.02\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("eps_grid"), "{err}");
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        let err = parse("system = a.sys\nfoo = 1\n").unwrap_err();
        assert!(err.to_string().contains("foo"));
        let err = parse("system = a.sys\nseed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn relative_system_path_and_defaults() {
        let c = parse(
            "system = systems/cat.sys\nexperiment = vp-scan\nmeasures = haar periodic:0.2,0.4\n",
        )
        .unwrap();
        assert_eq!(c.system.unwrap(), PathBuf::from("/cfg/systems/cat.sys"));
        assert_eq!(c.experiment, Experiment::VpScan);
        assert_eq!(c.measures, vec!["haar", "periodic:0.2,0.4"]);
        assert_eq!(c.samples, 200);
    }

    #[test]
    fn samples_must_be_positive_and_system_required() {
        assert!(parse("system = a.sys\nsamples = 0\n")
            .unwrap_err()
            .to_string()
            .contains("samples"));
        assert!(parse("experiment = pressure\n")
            .unwrap_err()
            .to_string()
            .contains("system"));
        assert!(parse("experiment = info-identities\n").is_ok());
    }
}
