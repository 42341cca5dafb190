//! Maximal `(ω, n, ε)` W^u-separated sets on one-dimensional disks.
//!
//! The Bowen metric on a sampled disk is monotone along the grid
//! (`d(a, b) ≤ d(a, c)` for `a < b < c`), so a set of grid points is
//! ε-separated iff consecutive selected points are. That makes the best
//! weighted packing a longest-path problem solved exactly by a prefix-max
//! recursion, and a greedy sweep of Bowen balls of radius ε/2 gives the
//! covering upper bound.

use std::collections::BTreeSet;

use serde::Serialize;

use super::potential::Potential;
use crate::error::{Error, Result};
use crate::leafgeom::{base_stretches, leaf_grid, LeafGrid, OrbitWeight, UnstableDisk};
use crate::rds::{Cocycle, TorusPoint};
use crate::stats::log_sum_exp;

/// Grid points allowed on one disk.
pub const MAX_GRID_POINTS: usize = 4_000_000;
/// Neighbouring grid points are at most `ε / GRID_REFINEMENT` apart in the
/// finest Bowen metric.
pub const GRID_REFINEMENT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparationMethod {
    GreedyMax,
    GridExhaustive,
    /// Flat leaf with a fiber-constant potential: counts in closed form.
    ClosedForm,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparatedSetResult {
    /// Chart parameters of the selected points (empty for closed form).
    pub points: Vec<f64>,
    pub n: usize,
    pub epsilon: f64,
    /// `log Σ_{y∈E} exp(S_n φ(y))`.
    pub log_weighted_sum: f64,
    pub weighted_sum: f64,
    /// `log` of the covering upper bound.
    pub log_upper: f64,
    pub method: SeparationMethod,
}

/// `log(e^a + e^b)`.
#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Best weighted ε-separated subset of the grid under `d_{n_k}`; returns the
/// log weighted sum and, on request, the selected indices.
pub fn dp_packing(
    grid: &LeafGrid,
    k: usize,
    eps: f64,
    logw: &[f64],
    keep_points: bool,
) -> (f64, Option<Vec<usize>>) {
    let n = grid.len();
    let mut prefmax = vec![f64::NEG_INFINITY; n];
    let mut prefarg = vec![usize::MAX; n];
    let mut pred = if keep_points {
        vec![usize::MAX; n]
    } else {
        Vec::new()
    };
    let mut m = 0;
    for i in 0..n {
        while m < i && grid.distance(k, m, i) > eps {
            m += 1;
        }
        let best = if m > 0 {
            if keep_points {
                pred[i] = prefarg[m - 1];
            }
            log_add(logw[i], prefmax[m - 1])
        } else {
            logw[i]
        };
        let (pm, pa) = if i > 0 {
            (prefmax[i - 1], prefarg[i - 1])
        } else {
            (f64::NEG_INFINITY, usize::MAX)
        };
        if best > pm {
            prefmax[i] = best;
            prefarg[i] = i;
        } else {
            prefmax[i] = pm;
            prefarg[i] = pa;
        }
    }
    let total = prefmax[n - 1];
    let points = keep_points.then(|| {
        let mut out = Vec::new();
        let mut cur = prefarg[n - 1];
        while cur != usize::MAX {
            out.push(cur);
            cur = pred[cur];
        }
        out.reverse();
        out
    });
    (total, points)
}

/// Greedy packing: candidates in decreasing weight, accepted when separated
/// from their selected neighbours.
pub fn greedy_packing(grid: &LeafGrid, k: usize, eps: f64, logw: &[f64]) -> (f64, Vec<usize>) {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| logw[b].total_cmp(&logw[a]).then(a.cmp(&b)));
    let mut chosen = BTreeSet::new();
    for i in order {
        let left_ok = chosen
            .range(..i)
            .next_back()
            .is_none_or(|&j| grid.distance(k, j, i) > eps);
        let right_ok = chosen
            .range(i + 1..)
            .next()
            .is_none_or(|&j| grid.distance(k, i, j) > eps);
        if left_ok && right_ok {
            chosen.insert(i);
        }
    }
    let pts: Vec<usize> = chosen.into_iter().collect();
    let vals: Vec<f64> = pts.iter().map(|&i| logw[i]).collect();
    (log_sum_exp(&vals), pts)
}

/// `log Σ_balls sup_ball exp(S_n φ)` over a sweep of closed Bowen balls of
/// radius ε/2 covering the disk. Each ball holds at most one point of any
/// ε-separated set, so this bounds every packing from above.
pub fn covering_upper(grid: &LeafGrid, k: usize, eps: f64, logw: &[f64]) -> f64 {
    let n = grid.len();
    let r = 0.5 * eps;
    let mut terms = Vec::new();
    let mut a = 0;
    let mut c = 0;
    while a < n {
        c = c.max(a);
        while c + 1 < n && grid.distance(k, a, c + 1) <= r {
            c += 1;
        }
        let mut b = c;
        while b + 1 < n && grid.distance(k, c, b + 1) <= r {
            b += 1;
        }
        // one grid step of slack on each side for the continuum in between
        let lo = a.saturating_sub(1);
        let hi = (b + 1).min(n - 1);
        terms.push(
            logw[lo..=hi]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        );
        a = b + 1;
    }
    log_sum_exp(&terms)
}

/// Largest number of points in `[-δ, δ]` pairwise more than ε apart under
/// the flat metric `Λ·|s − t|`.
pub fn closed_form_count(delta: f64, stretch: f64, eps: f64) -> f64 {
    (2.0 * delta * stretch / eps).ceil().max(1.0)
}

/// Grid on a u = 1 disk fine enough for `eps_min` at every horizon.
pub fn build_grid(
    cocycle: &Cocycle,
    disk: &UnstableDisk,
    n_values: &[usize],
    eps_min: f64,
    weight: Option<&OrbitWeight<'_>>,
) -> Result<LeafGrid> {
    let n_max = *n_values
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty horizon list".into()))?;
    let stretch = base_stretches(cocycle, disk, n_max)?
        .into_iter()
        .fold(0.0, f64::max);
    let target = eps_min / GRID_REFINEMENT;
    let slack = if disk.is_affine() { 1.0 } else { 1.25 };
    let mut h = target / (stretch * slack);
    for _ in 0..4 {
        let points = (2.0 * disk.radius() / h).ceil() + 1.0;
        if points > MAX_GRID_POINTS as f64 {
            return Err(Error::GridTooCoarse(format!(
                "ε = {eps_min} at n = {n_max} needs {points:.0} grid points (limit {MAX_GRID_POINTS})"
            )));
        }
        let grid = leaf_grid(cocycle, disk, n_values, h, weight)?;
        if grid.max_gap(n_values.len() - 1) <= target * (1.0 + 1e-9) {
            return Ok(grid);
        }
        h *= 0.5;
    }
    Err(Error::GridTooCoarse(format!(
        "grid refinement did not reach Bowen gap ε/{GRID_REFINEMENT} for ε = {eps_min}"
    )))
}

/// Maximal weighted `(ω, n, ε)`-separated set on a u = 1 disk, by exact
/// packing over the grid.
pub fn maximal_separated_set(
    cocycle: &Cocycle,
    disk: &UnstableDisk,
    potential: &Potential,
    n: usize,
    eps: f64,
) -> Result<SeparatedSetResult> {
    maximal_separated_set_with(
        cocycle,
        disk,
        potential,
        n,
        eps,
        SeparationMethod::GridExhaustive,
    )
}

pub fn maximal_separated_set_with(
    cocycle: &Cocycle,
    disk: &UnstableDisk,
    potential: &Potential,
    n: usize,
    eps: f64,
    method: SeparationMethod,
) -> Result<SeparatedSetResult> {
    if n < 1 || !(eps > 0.0) {
        return Err(Error::InvalidArgument(
            "separated sets need n ≥ 1 and ε > 0".into(),
        ));
    }
    let base = disk.base();
    let prepared = potential.prepare(cocycle, &base.path, &base.point, n)?;
    if method == SeparationMethod::ClosedForm {
        if !disk.is_affine() || !prepared.is_fiber_constant() {
            return Err(Error::Unsupported(
                "closed-form counts need a flat leaf and a fiber-constant potential".into(),
            ));
        }
        let stretch = base_stretches(cocycle, disk, n)?
            .into_iter()
            .fold(0.0, f64::max);
        let count = closed_form_count(disk.radius(), stretch, eps);
        let s = prepared.birkhoff(&base.point, n)?;
        let log = count.ln() + s;
        return Ok(SeparatedSetResult {
            points: Vec::new(),
            n,
            epsilon: eps,
            log_weighted_sum: log,
            weighted_sum: log.exp(),
            log_upper: log,
            method,
        });
    }
    let weight = |j: i64, y: &TorusPoint| prepared.eval(j as usize, y);
    let grid = build_grid(cocycle, disk, &[n], eps, Some(&weight))?;
    let logw = &grid.sums[0];
    if logw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "potential is not finite along the disk".into(),
        ));
    }
    let (log_sum, idx) = match method {
        SeparationMethod::GreedyMax => {
            let (l, p) = greedy_packing(&grid, 0, eps, logw);
            (l, p)
        }
        _ => {
            let (l, p) = dp_packing(&grid, 0, eps, logw, true);
            (l, p.expect("points requested"))
        }
    };
    let log_upper = covering_upper(&grid, 0, eps, logw);
    Ok(SeparatedSetResult {
        points: idx.iter().map(|&i| grid.params[i]).collect(),
        n,
        epsilon: eps,
        log_weighted_sum: log_sum,
        weighted_sum: log_sum.exp(),
        log_upper,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leafgeom::{bowen_distance_params, unstable_disk};
    use crate::oseledets::lyapunov_spectrum;
    use crate::rds::{cat_cocycle, cat_lambda, SkewState, SymbolPath};

    fn cat_disk(delta: f64) -> (Cocycle, UnstableDisk) {
        let c = cat_cocycle();
        let path = SymbolPath::constant(0, 600);
        let x = TorusPoint::new(&[0.23, 0.61]);
        let rep = lyapunov_spectrum(&c, &path, &x, 200).unwrap();
        let d = unstable_disk(&c, &SkewState::new(path, x), delta, &rep).unwrap();
        (c, d)
    }

    #[test]
    fn one_step_count_matches_packing_oracle() {
        let (c, disk) = cat_disk(0.1);
        for eps in [0.013, 0.02, 0.035, 0.05] {
            let r = maximal_separated_set(&c, &disk, &Potential::zero(), 1, eps).unwrap();
            let oracle = (0.2 / eps).floor() + 1.0;
            let count = r.points.len() as f64;
            assert!(
                (count - oracle).abs() <= 1.0,
                "eps={eps}: {count} vs {oracle}"
            );
            assert!((r.log_weighted_sum - count.ln()).abs() < 1e-12);
            assert!(r.log_upper >= r.log_weighted_sum);
        }
    }

    #[test]
    fn constant_potential_scales_sum_and_keeps_points() {
        let (c, disk) = cat_disk(0.1);
        let base = maximal_separated_set(&c, &disk, &Potential::zero(), 4, 0.02).unwrap();
        let shifted = maximal_separated_set(&c, &disk, &Potential::constant(0.3), 4, 0.02).unwrap();
        assert_eq!(base.points, shifted.points);
        assert!((shifted.log_weighted_sum - base.log_weighted_sum - 1.2).abs() < 1e-12);
    }

    #[test]
    fn selected_points_are_separated() {
        let (c, disk) = cat_disk(0.1);
        let pot = Potential::coordinate_cos(0, 1.0);
        for method in [
            SeparationMethod::GridExhaustive,
            SeparationMethod::GreedyMax,
        ] {
            let r = maximal_separated_set_with(&c, &disk, &pot, 3, 0.03, method).unwrap();
            for i in 0..r.points.len() {
                for j in i + 1..r.points.len() {
                    let d = bowen_distance_params(&c, &disk, 3, &[r.points[i]], &[r.points[j]])
                        .unwrap();
                    assert!(d > 0.03, "{method:?}: {d}");
                }
            }
        }
        let exact = maximal_separated_set(&c, &disk, &pot, 3, 0.03).unwrap();
        let greedy =
            maximal_separated_set_with(&c, &disk, &pot, 3, 0.03, SeparationMethod::GreedyMax)
                .unwrap();
        assert!(greedy.log_weighted_sum <= exact.log_weighted_sum + 1e-12);
        assert!(exact.log_weighted_sum <= exact.log_upper);
    }

    #[test]
    fn cat_count_grows_like_leaf_length() {
        // packing oracle: ceil(2δ λ^{n-1} / ε) points
        let (c, disk) = cat_disk(0.1);
        let n = 8;
        let r = maximal_separated_set(&c, &disk, &Potential::zero(), n, 0.02).unwrap();
        let oracle = (0.2 * cat_lambda().powi(n as i32 - 1) / 0.02).ceil();
        let count = r.points.len() as f64;
        // grid spacing between selected points exceeds ε by at most one grid gap ε/8
        assert!(count <= oracle + 1.0, "{count} vs {oracle}");
        assert!(
            count >= oracle / (1.0 + 1.0 / GRID_REFINEMENT) - 1.0,
            "{count} vs {oracle}"
        );
        let closed = maximal_separated_set_with(
            &c,
            &disk,
            &Potential::zero(),
            n,
            0.02,
            SeparationMethod::ClosedForm,
        )
        .unwrap();
        assert!((closed.weighted_sum - oracle).abs() < 1e-6);
        // log(count)/n approaches log λ only slowly: the slope between n and n+1 is exact
        let r9 = maximal_separated_set_with(
            &c,
            &disk,
            &Potential::zero(),
            n + 1,
            0.02,
            SeparationMethod::ClosedForm,
        )
        .unwrap();
        let slope = r9.log_weighted_sum - closed.log_weighted_sum;
        assert!((slope - cat_lambda().ln()).abs() < 0.01 * cat_lambda().ln());
    }

    #[test]
    fn covering_never_below_packing() {
        let (c, disk) = cat_disk(0.08);
        let pot = Potential::coordinate_sin(1, 0.5);
        for n in [1, 2, 4] {
            for eps in [0.01, 0.04] {
                let r = maximal_separated_set(&c, &disk, &pot, n, eps).unwrap();
                assert!(r.log_weighted_sum <= r.log_upper + 1e-12);
            }
        }
    }
}
