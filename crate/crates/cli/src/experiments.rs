//! One runner per experiment; each returns a report with its checks.

use std::collections::BTreeMap;
use std::fs;

use rand::Rng;
use serde_json::{json, Value};
use uthermo::equilibria::*;
use uthermo::measures::*;
use uthermo::oseledets::*;
use uthermo::rds::*;
use uthermo::sysfile::{parse_system, SystemDefinition};
use uthermo::thermo::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::report::{Check, Report};

const PERIODIC_MAX: usize = 64;
const SPECTRUM_POINT: f64 = 0.3141;

fn f(v: f64) -> String {
    format!("{v}")
}

fn config_err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

pub fn load_system(cfg: &ExperimentConfig) -> Result<SystemDefinition, CliError> {
    let path = cfg
        .system
        .as_ref()
        .ok_or_else(|| config_err("system", "missing required key"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| config_err("system", format!("{}: {e}", path.display())))?;
    parse_system(&text).map_err(|e| config_err("system", format!("{}: {e}", path.display())))
}

fn parse_number(key: &str, spec: &str, v: &str) -> Result<f64, CliError> {
    v.parse::<f64>()
        .map_err(|_| config_err(key, format!("`{spec}`: `{v}` is not a number")))
}

/// `zero`, `const:c`, `cos:i:a`, `sin:i:a`, `sym:v0,v1,…` or `phiu`.
pub fn parse_potential(
    spec: &str,
    def: &SystemDefinition,
    seed: u64,
) -> Result<Potential, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let key = "potentials";
    let coord = |parts: &[&str]| -> Result<(usize, f64), CliError> {
        if parts.len() != 3 {
            return Err(config_err(
                key,
                format!("`{spec}` needs component:amplitude"),
            ));
        }
        let i = parts[1]
            .parse::<usize>()
            .map_err(|_| config_err(key, format!("`{spec}`: bad component")))?;
        if i >= def.cocycle.dim() {
            return Err(config_err(
                key,
                format!("`{spec}`: component outside the fiber"),
            ));
        }
        Ok((i, parse_number(key, spec, parts[2])?))
    };
    let phi = match parts[0] {
        "zero" if parts.len() == 1 => Potential::zero(),
        "phiu" if parts.len() == 1 => geometric_potential_for(&def.cocycle, &def.base, seed)?,
        "const" if parts.len() == 2 => Potential::constant(parse_number(key, spec, parts[1])?),
        "cos" => {
            let (i, a) = coord(&parts)?;
            Potential::coordinate_cos(i, a)
        }
        "sin" => {
            let (i, a) = coord(&parts)?;
            Potential::coordinate_sin(i, a)
        }
        "sym" if parts.len() == 2 => {
            let values = parts[1]
                .split(',')
                .map(|v| parse_number(key, spec, v.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != def.base.symbol_count() {
                return Err(config_err(
                    key,
                    format!("`{spec}` needs one value per symbol"),
                ));
            }
            Potential::per_symbol(values)
        }
        _ => {
            return Err(config_err(
                key,
                format!("`{spec}` is not a known potential"),
            ))
        }
    };
    Ok(phi.with_id(spec))
}

/// `haar`, `fixed`, `periodic:x0,x1[,x2]` or `combo:w` (w·haar + (1−w)·fixed).
pub fn parse_measure(spec: &str, def: &SystemDefinition) -> Result<MeasureSampler, CliError> {
    let key = "measures";
    let dim = def.cocycle.dim();
    let parts: Vec<&str> = spec.split(':').collect();
    let m = match (parts[0], parts.len()) {
        ("haar", 1) => MeasureSampler::haar(),
        ("fixed", 1) => MeasureSampler::fixed_point(dim),
        ("periodic", 2) => {
            let x = parts[1]
                .split(',')
                .map(|v| parse_number(key, spec, v.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            if x.len() != dim {
                return Err(config_err(key, format!("`{spec}` needs {dim} coordinates")));
            }
            MeasureSampler::periodic_orbit(&def.cocycle, 0, &TorusPoint::new(&x), PERIODIC_MAX)?
        }
        ("combo", 2) => {
            let w = parse_number(key, spec, parts[1])?;
            if !(0.0..=1.0).contains(&w) {
                return Err(config_err(key, format!("`{spec}`: weight outside [0, 1]")));
            }
            MeasureSampler::convex_combo(
                spec,
                vec![
                    (w, MeasureSampler::haar()),
                    (1.0 - w, MeasureSampler::fixed_point(dim)),
                ],
            )?
        }
        _ => return Err(config_err(key, format!("`{spec}` is not a known measure"))),
    };
    Ok(m)
}

fn grids(cfg: &ExperimentConfig) -> PressureGrids {
    PressureGrids {
        delta: cfg.delta,
        n_grid: cfg.n_grid.clone(),
        eps_grid: cfg.eps_grid.clone(),
        omega_samples: cfg.omega_samples,
        base_grid: cfg.base_grid,
    }
}

fn settings(cfg: &ExperimentConfig) -> EntropySettings {
    EntropySettings {
        method: cfg.entropy_method,
        delta: cfg.entropy_delta,
        n_grid: cfg.entropy_n_grid.clone(),
        eps: cfg.entropy_eps,
        grid_k: cfg.grid_k,
        samples: cfg.samples,
        orbit_length: cfg.orbit_length,
    }
}

fn potentials(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Vec<Potential>, CliError> {
    cfg.potentials
        .iter()
        .map(|s| parse_potential(s, def, cfg.seed))
        .collect()
}

fn measures(
    cfg: &ExperimentConfig,
    def: &SystemDefinition,
) -> Result<Vec<MeasureSampler>, CliError> {
    cfg.measures.iter().map(|s| parse_measure(s, def)).collect()
}

/// Runs a single (non-`all`) experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    if cfg.experiment == Experiment::InfoIdentities {
        return info_identities(cfg);
    }
    let def = load_system(cfg)?;
    match cfg.experiment {
        Experiment::Spectrum => spectrum(cfg, &def),
        Experiment::Certify => certify(cfg, &def),
        Experiment::Pressure => pressure(cfg, &def),
        Experiment::Entropy => entropy(cfg, &def),
        Experiment::Smb => smb(cfg, &def),
        Experiment::Gibbs => gibbs(cfg, &def),
        Experiment::VpScan => vp_scan(cfg, &def),
        Experiment::PropertySuite => property_suite(cfg, &def),
        Experiment::InfoIdentities | Experiment::All => unreachable!("handled by the caller"),
    }
}

fn spectrum(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Report, CliError> {
    let n = cfg.spectrum_length;
    let path = sample_path(&def.base, n + 500, cfg.seed)?;
    let x = TorusPoint::new(&vec![SPECTRUM_POINT; def.cocycle.dim()]);
    let rep = lyapunov_spectrum(&def.cocycle, &path, &x, n)?;
    let mut r = Report::new("spectrum", cfg.seed, &["index", "exponent"]);
    for (i, v) in rep.raw_exponents.iter().enumerate() {
        r.push_row(vec![i.to_string(), f(*v)]);
    }
    let sum: f64 = rep.raw_exponents.iter().sum();
    r.check(Check::near(
        "exponent sum equals log-det rate",
        sum,
        rep.log_det_rate,
        1e-6,
    ));
    if let Some(e) = cfg.expect {
        r.check(Check::near(
            "top exponent",
            rep.raw_exponents[0],
            e,
            cfg.tolerance,
        ));
    }
    r.summary = json!({
        "exponents": rep.exponents,
        "multiplicities": rep.multiplicities,
        "unstable_dim": rep.unstable_dim(),
        "log_det_rate": rep.log_det_rate,
        "orbit_length": n,
    });
    Ok(r)
}

fn certify(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Report, CliError> {
    let cert = certify_partial_hyperbolicity(
        &def.cocycle,
        &def.base,
        cfg.samples,
        cfg.orbit_length,
        cfg.seed,
    )?;
    let mut r = Report::new(
        "certify",
        cfg.seed,
        &["sample", "seed", "exponents", "unstable_index", "verdict"],
    );
    for s in &cert.per_sample {
        r.push_row(vec![
            s.sample.to_string(),
            s.seed.to_string(),
            s.exponents
                .iter()
                .map(|v| f(*v))
                .collect::<Vec<_>>()
                .join(";"),
            s.unstable_index.to_string(),
            format!("{:?}", s.verdict),
        ]);
    }
    r.check(Check::new(
        "partially hyperbolic",
        cert.verdict == Verdict::Certified,
        format!(
            "{:?}, expansion {:.6}, domination {:.6}",
            cert.verdict, cert.expansion_lower, cert.domination_ratio_log
        ),
    ));
    if let Some(e) = cfg.expect {
        r.check(Check::near(
            "expansion lower bound",
            cert.expansion_lower,
            e,
            cfg.tolerance,
        ));
    }
    let mut summary = serde_json::to_value(&cert).expect("certificate serializes");
    strip(&mut summary, "per_sample");
    r.summary = summary;
    Ok(r)
}

fn strip(v: &mut Value, key: &str) {
    if let Value::Object(m) = v {
        m.remove(key);
    }
}

fn estimate_summary(e: &PressureEstimate) -> Value {
    let mut v = serde_json::to_value(e).expect("estimate serializes");
    strip(&mut v, "cells");
    v
}

fn pressure(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Report, CliError> {
    let family = potentials(cfg, def)?;
    let g = grids(cfg);
    let estimates = pressure_estimates(&def.cocycle, &def.base, &family, &g, cfg.seed)?;
    let mut r = Report::new(
        "pressure",
        cfg.seed,
        &[
            "potential",
            "omega_seed",
            "x_index",
            "delta",
            "n",
            "epsilon",
            "log_lower",
            "log_upper",
        ],
    );
    let mut ordered = true;
    for e in &estimates {
        for c in &e.cells {
            ordered &= c.log_lower <= c.log_upper + 1e-12;
            r.push_row(vec![
                c.potential_id.clone(),
                c.omega_seed.to_string(),
                c.x_index.to_string(),
                f(c.delta),
                c.n.to_string(),
                f(c.epsilon),
                f(c.log_lower),
                f(c.log_upper),
            ]);
        }
    }
    r.check(Check::new(
        "packing lower bound <= covering upper bound",
        ordered,
        format!("{} cells", r.rows.len()),
    ));
    let first = &estimates[0];
    if let Some(e) = cfg.expect {
        r.check(Check::near(
            format!("P({})", first.potential_id),
            first.value,
            e,
            cfg.tolerance,
        ));
    }
    if let Some(s) = cfg.max_spread {
        r.check(Check::new(
            "per-omega spread",
            first.relative_spread <= s,
            format!(
                "{:.6} over {} samples, limit {s}",
                first.relative_spread,
                first.per_omega.len()
            ),
        ));
    }
    let mut robustness = Vec::new();
    if cfg.robustness {
        let eps_half: Vec<f64> = g.eps_grid.iter().map(|e| e / 2.0).collect();
        for (name, other) in [
            ("delta-halving", g.with_delta(g.delta / 2.0)),
            ("eps-halving", g.with_eps(eps_half)),
        ] {
            let e = pressure_estimate(&def.cocycle, &def.base, &family[0], &other, cfg.seed)?;
            let diff = (e.value - first.value).abs();
            let ci = e.slope_ci.hypot(first.slope_ci);
            r.check(Check::new(
                name,
                diff <= 2.0 * ci,
                format!(
                    "|{:.6} - {:.6}| = {diff:.2e}, 2 CI = {:.2e}",
                    e.value,
                    first.value,
                    2.0 * ci
                ),
            ));
            robustness.push(json!({ "variant": name, "estimate": estimate_summary(&e) }));
        }
    }
    r.summary = json!({
        "estimates": estimates.iter().map(estimate_summary).collect::<Vec<_>>(),
        "robustness": robustness,
    });
    Ok(r)
}

fn entropy(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Report, CliError> {
    let m = parse_measure(&cfg.measures[0], def)?;
    let (c, s) = (&def.cocycle, &def.base);
    let b = bowen_ball_entropy(
        c,
        s,
        &m,
        cfg.entropy_delta,
        &cfg.entropy_n_grid,
        cfg.entropy_eps,
        cfg.samples,
        cfg.seed,
    )?;
    let pair = build_partition_pair(s, c.dim(), cfg.entropy_delta, cfg.grid_k, cfg.seed)?;
    let p = partition_entropy_rate(c, s, &m, &pair, &cfg.entropy_n_grid, cfg.samples, cfg.seed)?;
    let gap = entropy_gap(&b, &p);
    let mut r = Report::new("entropy", cfg.seed, &["method", "n", "mean_information"]);
    for e in [&b, &p] {
        for (n, v) in &e.per_n {
            r.push_row(vec![format!("{:?}", e.method), n.to_string(), f(*v)]);
        }
    }
    r.check(Check::new(
        "bowen and partition entropies agree within CI",
        gap.pass,
        format!("gap {:.6}, combined CI {:.6}", gap.gap, gap.combined_ci),
    ));
    if let Some(g) = cfg.max_gap {
        r.check(Check::new(
            "entropy gap bound",
            gap.gap <= g,
            format!("gap {:.6}, limit {g}", gap.gap),
        ));
    }
    if let Some(e) = cfg.expect {
        r.check(Check::near("bowen-ball entropy", b.value, e, cfg.tolerance));
        r.check(Check::near("partition entropy", p.value, e, cfg.tolerance));
    }
    r.summary = json!({ "bowen": b, "partition": p, "gap": gap });
    Ok(r)
}

fn smb(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Report, CliError> {
    let m = parse_measure(&cfg.measures[0], def)?;
    let pair = build_partition_pair(
        &def.base,
        def.cocycle.dim(),
        cfg.entropy_delta,
        cfg.grid_k,
        cfg.seed,
    )?;
    let t = smb_trace(
        &def.cocycle,
        &def.base,
        &m,
        &pair,
        &cfg.entropy_n_grid,
        cfg.samples,
        cfg.seed,
    )?;
    let mut r = Report::new("smb", cfg.seed, &["sample_id", "n", "information_value"]);
    for row in &t.rows {
        r.push_row(vec![
            row.sample_id.to_string(),
            row.n.to_string(),
            f(row.information_value),
        ]);
    }
    let terminal = t.mean_by_n.last().map(|x| x.1).unwrap_or(f64::NAN);
    match m.kind() {
        MeasureKind::PeriodicAtomic => {
            let worst = t
                .rows
                .iter()
                .map(|x| x.information_value.abs())
                .fold(0.0, f64::max);
            r.check(Check::new(
                "atomic traces vanish",
                worst <= cfg.tolerance,
                format!("max |trace| {worst:.2e}, limit {}", cfg.tolerance),
            ));
        }
        _ => {
            let first = t.sd_by_n.first().map(|x| x.1).unwrap_or(f64::NAN);
            let last = t.sd_by_n.last().map(|x| x.1).unwrap_or(f64::NAN);
            r.check(Check::new(
                "cross-sample sd decreases in n",
                last < first,
                format!("{first:.4} -> {last:.4}"),
            ));
            if let Some(e) = cfg.expect {
                r.check(Check::near(
                    "terminal mean trace",
                    terminal,
                    e,
                    cfg.tolerance,
                ));
            }
        }
    }
    r.summary = json!({
        "measure": m.id,
        "estimate": t.estimate,
        "terminal_mean": terminal,
        "mean_by_n": t.mean_by_n,
        "sd_by_n": t.sd_by_n,
    });
    Ok(r)
}

fn gibbs(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Report, CliError> {
    let g = grids(cfg);
    let st = settings(cfg);
    let mut r = Report::new(
        "gibbs",
        cfg.seed,
        &[
            "measure",
            "pressure_at_phiu",
            "pressure_ci",
            "entropy",
            "integral_neg_phiu",
            "pesin_gap",
            "pesin_ci",
        ],
    );
    let mut defects = Vec::new();
    for m in measures(cfg, def)? {
        let d = gibbs_defect(&def.cocycle, &def.base, &m, &g, &st, cfg.seed)?;
        r.push_row(vec![
            d.measure_id.clone(),
            f(d.pressure_at_phiu),
            f(d.pressure_ci),
            f(d.entropy),
            f(d.integral_neg_phiu),
            f(d.pesin_gap),
            f(d.pesin_ci),
        ]);
        if defects.is_empty() {
            r.check(Check::near(
                "P(phi_u)",
                d.pressure_at_phiu,
                0.0,
                cfg.tolerance,
            ));
        }
        if m.kind() == MeasureKind::Haar {
            r.check(Check::near(
                "haar pesin gap",
                d.pesin_gap,
                0.0,
                cfg.tolerance,
            ));
        }
        defects.push(d);
    }
    r.summary = json!({ "defects": defects });
    Ok(r)
}

fn vp_scan(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Report, CliError> {
    let family = potentials(cfg, def)?;
    let ms = measures(cfg, def)?;
    let reports = equilibrium_scans(
        &def.cocycle,
        &def.base,
        &family,
        &ms,
        &grids(cfg),
        &settings(cfg),
        cfg.seed,
    )?;
    let mut r = Report::new(
        "vp-scan",
        cfg.seed,
        &[
            "potential",
            "measure",
            "entropy",
            "entropy_ci",
            "integral",
            "integral_ci",
            "pressure",
            "pressure_ci",
            "defect",
            "defect_ci",
            "near_equilibrium",
        ],
    );
    for rep in &reports {
        for c in &rep.candidates {
            r.push_row(vec![
                rep.potential_id.clone(),
                c.measure_id.clone(),
                f(c.entropy),
                f(c.entropy_ci),
                f(c.integral),
                f(c.integral_ci),
                f(rep.pressure.value),
                f(rep.pressure.slope_ci),
                f(c.defect),
                f(c.defect_ci),
                c.near_equilibrium.to_string(),
            ]);
        }
        let worst = rep
            .candidates
            .iter()
            .map(|c| c.defect + c.defect_ci)
            .fold(f64::INFINITY, f64::min);
        r.check(Check::new(
            format!("variational inequality for {}", rep.potential_id),
            rep.variational_inequality_holds(),
            format!("min defect + CI {worst:.2e}, best {}", rep.best),
        ));
        if rep.potential_id == "zero" {
            let best = rep
                .candidate(&rep.best)
                .expect("best is a candidate")
                .defect;
            if let Some(h) = rep.candidate("haar") {
                r.check(Check::new(
                    "haar attains the sup for zero",
                    h.defect - best <= h.defect_ci && h.near_equilibrium,
                    format!("defect {:.2e} ± {:.2e}", h.defect, h.defect_ci),
                ));
            }
            if let (Some(e), Some(a)) = (cfg.expect, rep.candidate("atomic-fixed")) {
                r.check(Check::near(
                    "fixed-point defect for zero",
                    a.defect,
                    e,
                    cfg.tolerance,
                ));
            }
        }
    }
    r.summary = json!({
        "scans": reports.iter().map(|rep| json!({
            "potential": rep.potential_id,
            "pressure": estimate_summary(&rep.pressure),
            "best": rep.best,
            "candidates": rep.candidates,
        })).collect::<Vec<_>>(),
    });
    Ok(r)
}

fn property_suite(cfg: &ExperimentConfig, def: &SystemDefinition) -> Result<Report, CliError> {
    let family = potentials(cfg, def)?;
    let sigma = parse_potential(&cfg.sigma, def, cfg.seed)?;
    let rep = pressure_property_suite(
        &def.cocycle,
        &def.base,
        &family,
        &sigma,
        &grids(cfg),
        cfg.seed,
    )?;
    let mut r = Report::new(
        "property-suite",
        cfg.seed,
        &["item", "detail", "slack", "tolerance", "pass"],
    );
    let mut groups: BTreeMap<String, (bool, f64, usize)> = BTreeMap::new();
    for c in &rep.checks {
        r.push_row(vec![
            c.item.clone(),
            c.detail.clone(),
            f(c.slack),
            f(c.tolerance),
            c.pass.to_string(),
        ]);
        let g = groups
            .entry(c.item.clone())
            .or_insert((true, f64::INFINITY, 0));
        g.0 &= c.pass;
        g.1 = g.1.min(c.slack + c.tolerance);
        g.2 += 1;
    }
    for (item, (pass, margin, count)) in groups {
        r.check(Check::new(
            item,
            pass,
            format!("{count} checks, min slack + tolerance {margin:.2e}"),
        ));
    }
    r.summary = json!({ "h_top": rep.h_top, "checks": rep.checks.len() });
    Ok(r)
}

fn info_identities(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let rep = information_identities(cfg.spaces, cfg.max_points, cfg.seed)?;
    let mut r = Report::new("info-identities", cfg.seed, &["identity", "worst", "pass"]);
    for c in &rep.checks {
        r.push_row(vec![c.name.clone(), f(c.worst), c.pass.to_string()]);
        r.check(Check::new(
            c.name.clone(),
            c.pass,
            format!(
                "worst {:.2e} over {} spaces, tolerance {:.0e}",
                c.worst, rep.spaces, rep.tolerance
            ),
        ));
    }
    let (worst, above_one) = mixing_sweep(cfg.mixing_samples, cfg.seed);
    let pass = worst >= -MIXING_TOL && above_one > 0;
    r.push_row(vec!["mixing-inequality".into(), f(worst), pass.to_string()]);
    r.check(Check::new(
        "mixing-inequality",
        pass,
        format!(
            "min slack {worst:.2e} over {} samples, {above_one} with sum p > 1",
            cfg.mixing_samples
        ),
    ));
    r.summary =
        json!({ "identities": rep, "mixing_min_slack": worst, "mixing_sum_above_one": above_one });
    Ok(r)
}

/// Minimum slack over random `(p, a)`, `p_i ∈ [0, min(1, 2/k)]`, and the
/// number of draws with `Σ p > 1`.
pub fn mixing_sweep(samples: usize, seed: u64) -> (f64, usize) {
    let mut rng = rng_from_seed(derive_seed(seed, 61));
    let mut worst = f64::INFINITY;
    let mut above_one = 0;
    for _ in 0..samples {
        let k = rng.random_range(1..=6usize);
        let p: Vec<f64> = (0..k)
            .map(|_| rng.random::<f64>() * (2.0 / k as f64).min(1.0))
            .collect();
        let a: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        if p.iter().sum::<f64>() > 1.0 {
            above_one += 1;
        }
        let check = mixing_inequality_check(&p, &a).expect("p lies in [0, 1]");
        worst = worst.min(check.slack);
    }
    (worst, above_one)
}
