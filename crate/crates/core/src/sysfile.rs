//! Plain-text system definitions.
//!
//! ```text
//! # cat map with a trivial base
//! base.kind = deterministic-trivial
//! fiber.dim = 2
//! map.0.matrix = 2 1 1 1
//! seed = 7
//! ```
//!
//! Recognised keys: `base.kind`, `base.symbols`, `base.dist`,
//! `base.transition` (rows separated by `;`), `fiber.dim`,
//! `map.<k>.matrix` (row-major integers), `map.<k>.perturbation` and `seed`.
//! A perturbation is a `;`-separated list of terms
//! `component : amplitude : k1,k2[,k3] : phase`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rds::{Cocycle, DrivingSystem, MapDescriptor, PerturbationTerm};

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDefinition {
    pub base: DrivingSystem,
    pub cocycle: Cocycle,
    pub seed: u64,
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Splits `key = value` lines, dropping blank lines and `#` comments.
/// Returns `(line_number, key, value)` triples.
pub fn key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| perr(line_no, format!("expected `key = value`, got `{line}`")))?;
        out.push((line_no, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_f64_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| perr(line, format!("{key}: `{s}` is not a number")))
        })
        .collect()
}

fn parse_i64_list(line: usize, key: &str, v: &str) -> Result<Vec<i64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<i64>()
                .map_err(|_| perr(line, format!("{key}: `{s}` is not an integer")))
        })
        .collect()
}

fn parse_perturbation(
    line: usize,
    key: &str,
    v: &str,
    dim: usize,
) -> Result<Vec<PerturbationTerm>> {
    let mut terms = Vec::new();
    for item in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(perr(
                line,
                format!("{key}: term `{item}` must be component:amplitude:frequency:phase"),
            ));
        }
        let component = parts[0]
            .parse::<usize>()
            .map_err(|_| perr(line, format!("{key}: bad component `{}`", parts[0])))?;
        let amplitude = parts[1]
            .parse::<f64>()
            .map_err(|_| perr(line, format!("{key}: bad amplitude `{}`", parts[1])))?;
        let freq = parse_i64_list(line, key, parts[2])?;
        if freq.len() != dim {
            return Err(perr(
                line,
                format!("{key}: frequency needs {dim} entries, got {}", freq.len()),
            ));
        }
        let phase = parts[3]
            .parse::<f64>()
            .map_err(|_| perr(line, format!("{key}: bad phase `{}`", parts[3])))?;
        let mut frequency = [0i64; 3];
        frequency[..dim].copy_from_slice(&freq);
        terms.push(PerturbationTerm {
            component,
            amplitude,
            frequency,
            phase,
        });
    }
    Ok(terms)
}

pub fn parse_system(text: &str) -> Result<SystemDefinition> {
    let kvs = key_values(text)?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut get: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (line, k, v) in kvs {
        if let Some(prev) = seen.insert(k.clone(), line) {
            return Err(perr(
                line,
                format!("duplicate key `{k}` (first at line {prev})"),
            ));
        }
        let known = matches!(
            k.as_str(),
            "base.kind" | "base.symbols" | "base.dist" | "base.transition" | "fiber.dim" | "seed"
        ) || is_map_key(&k);
        if !known {
            return Err(perr(line, format!("unknown key `{k}`")));
        }
        get.insert(k, (line, v));
    }
    let need = |k: &str| -> Result<&(usize, String)> {
        get.get(k)
            .ok_or_else(|| perr(0, format!("missing required key `{k}`")))
    };

    let seed = match get.get("seed") {
        Some((line, v)) => v
            .parse::<u64>()
            .map_err(|_| perr(*line, format!("seed: `{v}` is not a 64-bit integer")))?,
        None => 0,
    };
    let (dim_line, dim_v) = need("fiber.dim")?;
    let dim = dim_v
        .parse::<usize>()
        .map_err(|_| perr(*dim_line, "fiber.dim must be 2 or 3"))?;
    if !(2..=3).contains(&dim) {
        return Err(perr(*dim_line, "fiber.dim must be 2 or 3"));
    }

    let (kind_line, kind) = need("base.kind")?;
    let base = match kind.as_str() {
        "deterministic-trivial" => DrivingSystem::trivial(seed),
        "iid" => {
            let (l, v) = need("base.dist")?;
            DrivingSystem::iid(parse_f64_list(*l, "base.dist", v)?, seed)
                .map_err(|e| perr(*l, e.to_string()))?
        }
        "markov" => {
            let (l, v) = need("base.transition")?;
            let rows = v
                .split(';')
                .map(str::trim)
                .filter(|r| !r.is_empty())
                .map(|r| parse_f64_list(*l, "base.transition", r))
                .collect::<Result<Vec<_>>>()?;
            DrivingSystem::markov(rows, None, seed).map_err(|e| perr(*l, e.to_string()))?
        }
        other => {
            return Err(perr(
                *kind_line,
                format!("base.kind `{other}` is not iid, markov or deterministic-trivial"),
            ))
        }
    };
    if let Some((l, v)) = get.get("base.symbols") {
        let n = v
            .parse::<usize>()
            .map_err(|_| perr(*l, "base.symbols must be a positive integer"))?;
        if n != base.symbol_count() {
            return Err(perr(
                *l,
                format!(
                    "base.symbols = {n} disagrees with the law over {} symbols",
                    base.symbol_count()
                ),
            ));
        }
    }

    let mut maps = Vec::new();
    for k in 0..base.symbol_count() {
        let key = format!("map.{k}.matrix");
        let (l, v) = need(&key)?;
        let entries = parse_i64_list(*l, &key, v)?;
        if entries.len() != dim * dim {
            return Err(perr(
                *l,
                format!("{key} needs {} integers, got {}", dim * dim, entries.len()),
            ));
        }
        let matrix: Vec<Vec<i64>> = entries.chunks(dim).map(<[i64]>::to_vec).collect();
        let pkey = format!("map.{k}.perturbation");
        let pert = match get.get(&pkey) {
            Some((pl, pv)) => parse_perturbation(*pl, &pkey, pv, dim)?,
            None => Vec::new(),
        };
        maps.push(MapDescriptor::new(matrix, pert).map_err(|e| perr(*l, e.to_string()))?);
    }
    for key in get.keys().filter(|k| is_map_key(k)) {
        let idx: usize = key
            .split('.')
            .nth(1)
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        if idx >= base.symbol_count() {
            return Err(perr(
                get[key].0,
                format!("`{key}` refers to a symbol the base does not emit"),
            ));
        }
    }
    let cocycle = Cocycle::new(maps)?;
    Ok(SystemDefinition {
        base,
        cocycle,
        seed,
    })
}

fn is_map_key(k: &str) -> bool {
    let parts: Vec<&str> = k.split('.').collect();
    parts.len() == 3
        && parts[0] == "map"
        && parts[1].parse::<usize>().is_ok()
        && matches!(parts[2], "matrix" | "perturbation")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::BaseKind;

    #[test]
    fn parses_switching_system() {
        let text = "
            base.kind = iid
            base.symbols = 2
            base.dist = 0.5, 0.5
            fiber.dim = 2
            map.0.matrix = 2 1 1 1
            map.1.matrix = 5 3 3 2   # A squared
            seed = 11
        ";
        let def = parse_system(text).unwrap();
        assert_eq!(def.base.kind(), BaseKind::Iid);
        assert_eq!(def.cocycle.maps().len(), 2);
        assert_eq!(def.seed, 11);
    }

    #[test]
    fn parses_perturbation_terms() {
        let text = "
            base.kind = deterministic-trivial
            fiber.dim = 2
            map.0.matrix = 2 1 1 1
            map.0.perturbation = 0:0.01:1,0:0.0; 1:0.005:0,1:1.5
        ";
        let def = parse_system(text).unwrap();
        let p = def.cocycle.map(0).perturbation();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].frequency, [0, 1, 0]);
        assert!(!def.cocycle.is_affine());
    }

    #[test]
    fn rejects_unknown_and_bad_keys() {
        let base = "base.kind = deterministic-trivial\nfiber.dim = 2\nmap.0.matrix = 2 1 1 1\n";
        assert!(parse_system(&format!("{base}colour = blue\n")).is_err());
        assert!(parse_system("base.kind = iid\nbase.dist = 0.4, 0.4\nfiber.dim = 2\n").is_err());
        assert!(parse_system(
            "base.kind = deterministic-trivial\nfiber.dim = 2\nmap.0.matrix = 2 0 0 1\n"
        )
        .is_err());
        assert!(parse_system(&format!("{base}map.3.matrix = 1 0 0 1\n")).is_err());
        let err = parse_system("base.kind = deterministic-trivial\nfiber.dim = 4\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
