//! Checks of the structural properties of `P^u(F, ·)` at estimator level:
//! monotonicity, constant shifts, entropy bounds, the Lipschitz bound,
//! convexity, invariance under coboundaries and subadditivity.

use serde::Serialize;

use super::potential::Potential;
use super::pressure::{pressure_estimates, PressureEstimate, PressureGrids};
use crate::error::{Error, Result};
use crate::rds::{Cocycle, DrivingSystem};

/// Constant added for the monotonicity and shift checks.
pub const SHIFT: f64 = 0.3;
/// Exactness demanded of the constant shift on shared separated sets.
pub const SHIFT_TOL: f64 = 1e-9;
/// Interior points of each convexity segment.
const CONVEX_T: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub item: String,
    pub detail: String,
    /// `rhs − lhs` of the inequality (or minus the defect of an equality).
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub h_top: f64,
    pub checks: Vec<PropertyCheck>,
    #[serde(skip)]
    pub estimates: Vec<PressureEstimate>,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn item(&self, prefix: &str) -> impl Iterator<Item = &PropertyCheck> {
        let prefix = prefix.to_string();
        self.checks
            .iter()
            .filter(move |c| c.item.starts_with(&prefix))
    }
}

fn check(item: &str, detail: String, slack: f64, tolerance: f64) -> PropertyCheck {
    PropertyCheck {
        item: item.to_string(),
        detail,
        slack,
        tolerance,
        pass: slack >= -tolerance,
    }
}

fn combined(cis: &[f64]) -> f64 {
    cis.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Runs every property on the family `potentials` (consecutive members are
/// paired for the two-potential items); `sigma` generates the coboundary.
pub fn pressure_property_suite(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    potentials: &[Potential],
    sigma: &Potential,
    grids: &PressureGrids,
    seed: u64,
) -> Result<PropertyReport> {
    if potentials.len() < 2 {
        return Err(Error::InvalidArgument(
            "the property suite needs at least two potentials".into(),
        ));
    }
    let m = potentials.len();
    let cob = Potential::coboundary(sigma);
    let mut all = vec![Potential::zero().with_id("h_top")];
    all.extend(potentials.iter().cloned());
    let shifted0 = all.len();
    all.extend(potentials.iter().map(|p| p.shifted(SHIFT)));
    let cob0 = all.len();
    all.extend(
        potentials
            .iter()
            .map(|p| p.plus(&cob).with_id(format!("{}+cob", p.id))),
    );
    let convex0 = all.len();
    for i in 0..m - 1 {
        for t in CONVEX_T {
            let mix = potentials[i]
                .scaled(t)
                .plus(&potentials[i + 1].scaled(1.0 - t));
            all.push(mix.with_id(format!(
                "{t}*{}+{}*{}",
                potentials[i].id,
                1.0 - t,
                potentials[i + 1].id
            )));
        }
    }
    let sum0 = all.len();
    for i in 0..m - 1 {
        let s = potentials[i].plus(&potentials[i + 1]);
        all.push(s.with_id(format!("{}+{}", potentials[i].id, potentials[i + 1].id)));
    }
    let est = pressure_estimates(cocycle, system, &all, grids, seed)?;
    let p = |i: usize| est[i].value;
    let ci = |i: usize| est[i].slope_ci;
    let h = p(0);
    let mut checks = Vec::new();

    for (i, pot) in potentials.iter().enumerate() {
        let (a, b) = (1 + i, shifted0 + i);
        checks.push(check(
            "i-monotone",
            format!("P({}) <= P({}+{SHIFT})", pot.id, pot.id),
            p(b) - p(a),
            2.0 * combined(&[ci(a), ci(b)]),
        ));
        checks.push(check(
            "ii-shift",
            format!("P({}+{SHIFT}) - P({}) = {SHIFT}", pot.id, pot.id),
            -(p(b) - p(a) - SHIFT).abs(),
            SHIFT_TOL,
        ));
        let bounds = pot.fiber_bounds(cocycle, system, seed)?;
        let tol = 2.0 * combined(&[ci(0), ci(a)]);
        checks.push(check(
            "iii-lower",
            format!("h_top + inf {} <= P", pot.id),
            p(a) - (h + bounds.inf),
            tol,
        ));
        checks.push(check(
            "iii-upper",
            format!("P <= h_top + sup {}", pot.id),
            h + bounds.sup - p(a),
            tol,
        ));
        let c = cob0 + i;
        checks.push(check(
            "vi-coboundary",
            format!("P({}+cob) = P({})", pot.id, pot.id),
            -(p(c) - p(a)).abs(),
            2.0 * combined(&[ci(a), ci(c)]),
        ));
    }
    for i in 0..m - 1 {
        let (a, b) = (1 + i, 2 + i);
        let norm = potentials[i]
            .minus(&potentials[i + 1])
            .fiber_bounds(cocycle, system, seed)?
            .norm;
        checks.push(check(
            "iv-lipschitz",
            format!(
                "|P({}) - P({})| <= {norm:.4}",
                potentials[i].id,
                potentials[i + 1].id
            ),
            norm - (p(a) - p(b)).abs(),
            2.0 * combined(&[ci(a), ci(b)]),
        ));
        for (k, t) in CONVEX_T.iter().enumerate() {
            let idx = convex0 + 3 * i + k;
            checks.push(check(
                "v-convex",
                format!(
                    "t = {t} on ({}, {})",
                    potentials[i].id,
                    potentials[i + 1].id
                ),
                t * p(a) + (1.0 - t) * p(b) - p(idx),
                2.0 * combined(&[ci(a), ci(b), ci(idx)]),
            ));
        }
        let s = sum0 + i;
        checks.push(check(
            "vii-subadditive",
            format!("P({}+{}) <= P + P", potentials[i].id, potentials[i + 1].id),
            p(a) + p(b) - p(s),
            2.0 * combined(&[ci(a), ci(b), ci(s)]),
        ));
    }
    Ok(PropertyReport {
        h_top: h,
        checks,
        estimates: est,
    })
}
