use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use serde_json::Value;
use uthermo_cli::{run_experiment, ExperimentConfig, Report};

const LOG_LAMBDA: f64 = 0.9624236501192069;
const SWITCHING: f64 = 1.5 * LOG_LAMBDA;

struct Outcome {
    pass: bool,
    detail: String,
}

fn load(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn report(name: &str) -> Result<Report, String> {
    run_experiment(&load(name)).map_err(|e| format!("{name}: {e}"))
}

fn check_passed(r: &Report, name: &str) -> bool {
    r.checks.iter().any(|c| c.name == name && c.pass)
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn cat_entropy_value() -> Result<(f64, Report, f64), String> {
    let t = Instant::now();
    let r = report("cat_pressure.cfg")?;
    let secs = t.elapsed().as_secs_f64();
    let v = num(&r.summary["estimates"][0]["value"]);
    Ok((v, r, secs))
}

fn criterion_1() -> Result<Outcome, String> {
    let (v, _, secs) = cat_entropy_value()?;
    Ok(Outcome {
        pass: within(v, LOG_LAMBDA, 0.05) && secs <= 120.0,
        detail: format!("h_top = {v:.6} (target 0.9624 ± 5%), {secs:.1} s (limit 120 s)"),
    })
}

fn criterion_2() -> Result<Outcome, String> {
    let r = report("switching_pressure.cfg")?;
    let e = &r.summary["estimates"][0];
    let v = num(&e["value"]);
    let spread = num(&e["relative_spread"]);
    let omegas = e["per_omega"].as_array().map_or(0, Vec::len);
    Ok(Outcome {
        pass: within(v, SWITCHING, 0.07) && spread <= 0.10 && omegas >= 8,
        detail: format!("h_top = {v:.6} (target 1.4436 ± 7%), spread {spread:.4} over {omegas} samples (limit 10%)"),
    })
}

fn criterion_3() -> Result<Outcome, String> {
    let cert = report("cat_rotation_certify.cfg")?;
    let certified =
        cert.summary["verdict"] == "certified" && check_passed(&cert, "partially hyperbolic");
    let p = report("cat_rotation_pressure.cfg")?;
    let v = num(&p.summary["estimates"][0]["value"]);
    Ok(Outcome {
        pass: certified && within(v, LOG_LAMBDA, 0.05),
        detail: format!(
            "verdict {}, h_top = {v:.6} (target 0.9624 ± 5%)",
            cert.summary["verdict"]
        ),
    })
}

fn criterion_4() -> Result<Outcome, String> {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["cat_gibbs.cfg", "switching_gibbs.cfg"] {
        let r = report(name)?;
        for d in r.summary["defects"].as_array().into_iter().flatten() {
            let p = num(&d["pressure_at_phiu"]);
            pass &= p.abs() <= 0.05;
            if d["measure_id"] == "haar" {
                let g = num(&d["pesin_gap"]);
                pass &= g.abs() <= 0.05;
                parts.push(format!(
                    "{name}: P(phi_u) = {p:.5}, haar pesin gap = {g:.5}"
                ));
            }
        }
    }
    Ok(Outcome {
        pass,
        detail: format!("{} (limit ±0.05)", parts.join("; ")),
    })
}

fn criterion_5() -> Result<Outcome, String> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, limit) in [("cat_entropy.cfg", 0.05), ("switching_entropy.cfg", 0.1)] {
        let r = report(name)?;
        let gap = &r.summary["gap"];
        let (g, ci) = (num(&gap["gap"]), num(&gap["combined_ci"]));
        pass &= g <= ci && g <= limit;
        parts.push(format!("{name}: gap {g:.5}, CI {ci:.5}, limit {limit}"));
    }
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

fn criterion_6(h_top: f64) -> Result<Outcome, String> {
    let r = report("cat_smb.cfg")?;
    let sd = r.summary["sd_by_n"].as_array().cloned().unwrap_or_default();
    let first = num(&sd[0][1]);
    let last = num(&sd[sd.len() - 1][1]);
    let terminal = num(&r.summary["terminal_mean"]);
    let periodic = report("cat_smb_periodic.cfg")?;
    let worst = periodic
        .rows
        .iter()
        .map(|row| row[2].parse::<f64>().unwrap_or(f64::NAN).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        pass: last < first && within(terminal, h_top, 0.05) && worst <= 0.02,
        detail: format!(
            "sd {first:.4} -> {last:.4}, terminal mean {terminal:.5} vs {h_top:.5} ± 5%, periodic max trace {worst:.1e} (limit 0.02)"
        ),
    })
}

fn criterion_7() -> Result<Outcome, String> {
    let r = report("cat_vp_scan.cfg")?;
    let mut pass = true;
    let mut pairs = 0;
    let mut fixed = f64::NAN;
    for scan in r.summary["scans"].as_array().into_iter().flatten() {
        for c in scan["candidates"].as_array().into_iter().flatten() {
            let defect = num(&c["defect"]);
            let ci = num(&c["defect_ci"]);
            pass &= defect >= -ci;
            pairs += 1;
            if scan["potential"] == "zero" && c["measure_id"] == "atomic-fixed" {
                fixed = defect;
            }
        }
    }
    let haar_sup = check_passed(&r, "haar attains the sup for zero");
    pass &= haar_sup && within(fixed, LOG_LAMBDA, 0.10);
    Ok(Outcome {
        pass,
        detail: format!("{pairs} pairs within CI, haar attains sup for zero: {haar_sup}, fixed-point defect {fixed:.5} (target 0.9624 ± 10%)"),
    })
}

fn criterion_8() -> Result<Outcome, String> {
    let cfg = load("cat_property_suite.cfg");
    let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let family = cfg.potentials.len();
    let mut shift_worst: f64 = 0.0;
    let mut pass = family >= 5;
    for row in &r.rows {
        let slack: f64 = row[2].parse().unwrap_or(f64::NAN);
        let tol: f64 = row[3].parse().unwrap_or(f64::NAN);
        pass &= row[4] == "true";
        if row[0] == "ii-shift" {
            shift_worst = shift_worst.max(slack.abs());
            pass &= slack.abs() <= 1e-9;
        } else {
            pass &= slack >= -tol;
        }
    }
    Ok(Outcome {
        pass,
        detail: format!(
            "{} checks on {family} potentials, worst shift defect {shift_worst:.1e} (limit 1e-9)",
            r.rows.len()
        ),
    })
}

fn identities() -> Result<Report, String> {
    report("info_identities.cfg")
}

fn criterion_9(r: &Report) -> Outcome {
    let ids = &r.summary["identities"];
    let spaces = ids["spaces"].as_u64().unwrap_or(0);
    let checks = ids["checks"].as_array().cloned().unwrap_or_default();
    let worst = checks
        .iter()
        .map(|c| num(&c["worst"]).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: spaces >= 100
            && checks.len() == 6
            && checks.iter().all(|c| c["pass"] == true)
            && worst <= 1e-12,
        detail: format!(
            "{} identities on {spaces} spaces, worst {worst:.1e} (limit 1e-12)",
            checks.len()
        ),
    }
}

fn criterion_10(r: &Report) -> Outcome {
    let slack = num(&r.summary["mixing_min_slack"]);
    let above = r.summary["mixing_sum_above_one"].as_u64().unwrap_or(0);
    Outcome {
        pass: slack >= -1e-12 && above > 0,
        detail: format!("min slack {slack:.1e} over 10^4 draws, {above} with sum p > 1"),
    }
}

fn criterion_11(r: &Report) -> Outcome {
    let base = &r.summary["estimates"][0];
    let (v, ci) = (num(&base["value"]), num(&base["slope_ci"]));
    let mut pass = check_passed(r, "packing lower bound <= covering upper bound");
    let mut parts = Vec::new();
    for variant in r.summary["robustness"].as_array().into_iter().flatten() {
        let e = &variant["estimate"];
        let (w, wci) = (num(&e["value"]), num(&e["slope_ci"]));
        let diff = (w - v).abs();
        pass &= diff <= 2.0 * ci.hypot(wci);
        parts.push(format!(
            "{}: diff {diff:.1e} (2 CI {:.1e})",
            variant["variant"].as_str().unwrap_or("?"),
            2.0 * ci.hypot(wci)
        ));
    }
    pass &= parts.len() == 2;
    Outcome {
        pass,
        detail: format!(
            "{}; lower <= upper in all {} cells",
            parts.join(", "),
            r.rows.len()
        ),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Result<Outcome, String>)> = Vec::new();
    let cat = cat_entropy_value();
    let h_top = cat.as_ref().map(|c| c.0).unwrap_or(LOG_LAMBDA);
    results.push((1, "cat unstable topological entropy", criterion_1()));
    results.push((2, "random switching entropy", criterion_2()));
    results.push((3, "partial hyperbolicity on T^3", criterion_3()));
    results.push((4, "Gibbs u-state identity", criterion_4()));
    results.push((5, "Bowen-ball and partition entropies agree", criterion_5()));
    results.push((6, "SMB traces", criterion_6(h_top)));
    results.push((7, "variational principle", criterion_7()));
    results.push((8, "pressure axioms", criterion_8()));
    let ids = identities();
    results.push((
        9,
        "exact information calculus",
        ids.as_ref().map(criterion_9).map_err(Clone::clone),
    ));
    results.push((
        10,
        "mixing inequality",
        ids.as_ref().map(criterion_10).map_err(Clone::clone),
    ));
    results.push((
        11,
        "estimator robustness",
        cat.as_ref()
            .map(|c| criterion_11(&c.1))
            .map_err(Clone::clone),
    ));

    let mut failed = 0;
    for (k, name, r) in &results {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {k:>2} {}: {name}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
