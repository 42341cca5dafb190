//! Unstable pressure `P^u(F, φ)` from separated-set sums.
//!
//! For every ω-sample and base point the log weighted sums
//! `log P^u(F, φ, ω, x, δ, n, ε)` are tabulated over the `(n, ε)` grids.
//! Per ω the sup over base points is taken at each `(n, ε)`, the growth rate
//! is the least-squares slope over the upper half of the `n` grid, and the
//! ω-values are averaged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::potential::Potential;
use super::separated::{build_grid, closed_form_count, covering_upper, dp_packing};
use crate::error::{Error, Result};
use crate::leafgeom::{base_stretches, prefix_max_at, unstable_disk, LeafGrid};
use crate::oseledets::{lyapunov_spectrum, FRAME_SETTLE_STEPS};
use crate::rds::{
    derive_seed, sample_path, Cocycle, DrivingSystem, SkewState, SymbolPath, TorusPoint,
};
use crate::stats::{mean, relative_spread, std_dev, upper_half, upper_half_slope};

/// Orbit length used for the spectrum at each base point.
const SPECTRUM_STEPS: usize = 200;
/// Irrational offset keeping base points off rational (periodic) points.
const BASE_OFFSET: f64 = 0.013_71;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureGrids {
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub omega_samples: usize,
    /// Base points per torus axis.
    pub base_grid: usize,
}

impl PressureGrids {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= crate::leafgeom::MAX_RADIUS) {
            return Err(Error::InvalidArgument(format!(
                "delta = {} outside (0, 0.25]",
                self.delta
            )));
        }
        if self.n_grid.is_empty()
            || self.n_grid[0] < 1
            || self.n_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidArgument(
                "n_grid must be nonempty, positive and strictly increasing".into(),
            ));
        }
        if self.eps_grid.is_empty()
            || self.eps_grid[0] <= 0.0
            || self.eps_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidArgument(
                "eps_grid must be nonempty, positive and strictly increasing".into(),
            ));
        }
        if self.omega_samples < 1 || self.base_grid < 1 {
            return Err(Error::InvalidArgument(
                "omega_samples and base_grid must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    pub fn with_eps(&self, eps_grid: Vec<f64>) -> Self {
        Self {
            eps_grid,
            ..self.clone()
        }
    }

    fn n_max(&self) -> usize {
        *self.n_grid.last().expect("validated")
    }
}

/// One `(ω, x, n, ε)` entry; logs of the packing lower and covering upper
/// weighted sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureCell {
    pub omega_seed: u64,
    pub x_index: usize,
    pub delta: f64,
    pub n: usize,
    pub epsilon: f64,
    pub log_lower: f64,
    pub log_upper: f64,
    pub potential_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsValue {
    pub epsilon: f64,
    pub value: f64,
    pub upper_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureEstimate {
    pub potential_id: String,
    /// Slope estimate at the smallest ε.
    pub value: f64,
    /// Same pipeline on the covering upper bounds.
    pub upper_value: f64,
    /// Half-width combining the 95% ω-spread and fit standard errors with
    /// the count resolution.
    pub slope_ci: f64,
    /// Slope change bound from adding or removing one point of the
    /// maximizing separated sets.
    pub count_resolution: f64,
    /// Mean over ω of `max_x log P(n, ε_min)`.
    pub per_n_log: Vec<(usize, f64)>,
    pub value_by_eps: Vec<EpsValue>,
    pub per_omega: Vec<f64>,
    /// `sd / |mean|` of the per-ω values.
    pub relative_spread: f64,
    /// Mean RMS residual of the per-ω slope fits.
    pub fit_residual: f64,
    /// `log P(n, ε)` nonincreasing in ε in every (ω, n).
    pub eps_monotone: bool,
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub omega_samples: usize,
    #[serde(skip)]
    pub cells: Vec<PressureCell>,
}

/// Base points `((i + ½)/k + offset)` on the torus.
pub fn base_points(dim: usize, k: usize) -> Vec<TorusPoint> {
    let total = k.pow(dim as u32);
    (0..total)
        .map(|idx| {
            let mut c = [0.0; 3];
            let mut r = idx;
            for ci in c.iter_mut().take(dim) {
                *ci = ((r % k) as f64 + 0.5) / k as f64 + BASE_OFFSET;
                r /= k;
            }
            TorusPoint::new(&c[..dim])
        })
        .collect()
}

/// `[potential][n_idx][eps_idx] -> (log_lower, log_upper, log_max_weight)`.
type CellLogs = Vec<Vec<Vec<(f64, f64, f64)>>>;

fn cell_logs(
    cocycle: &Cocycle,
    path: &SymbolPath,
    x: &TorusPoint,
    grids: &PressureGrids,
    potentials: &[Potential],
) -> Result<CellLogs> {
    let nk = grids.n_grid.len();
    let ne = grids.eps_grid.len();
    let rep = lyapunov_spectrum(cocycle, path, x, SPECTRUM_STEPS)?;
    if rep.unstable_dim() == 0 {
        // the count is set to 1 off the unstable set
        return Ok(vec![
            vec![vec![(0.0, 0.0, f64::NEG_INFINITY); ne]; nk];
            potentials.len()
        ]);
    }
    if rep.unstable_dim() > 1 {
        return Err(Error::Unsupported(format!(
            "pressure needs one-dimensional leaves, found u = {}",
            rep.unstable_dim()
        )));
    }
    let disk = unstable_disk(
        cocycle,
        &SkewState::new(path.clone(), *x),
        grids.delta,
        &rep,
    )?;
    let n_max = grids.n_max();
    let eps_min = grids.eps_grid[0];
    let mut shared: Option<LeafGrid> = None;
    let mut out = Vec::with_capacity(potentials.len());
    for pot in potentials {
        let prepared = pot.prepare(cocycle, path, x, n_max)?;
        let mut table = vec![vec![(0.0, 0.0, f64::NEG_INFINITY); ne]; nk];
        if prepared.is_fiber_constant() {
            let mut sums = Vec::with_capacity(nk);
            let mut total = 0.0;
            let mut next = 0;
            for j in 0..n_max {
                total += prepared.eval(j, x);
                if j + 1 == grids.n_grid[next] {
                    sums.push(total);
                    next += 1;
                }
            }
            if disk.is_affine() {
                let stretch = base_stretches(cocycle, &disk, n_max)?;
                let lam = prefix_max_at(&stretch, &grids.n_grid);
                for k in 0..nk {
                    for (e, &eps) in grids.eps_grid.iter().enumerate() {
                        let l = closed_form_count(grids.delta, lam[k], eps).ln() + sums[k];
                        table[k][e] = (l, l, sums[k]);
                    }
                }
            } else {
                if shared.is_none() {
                    shared = Some(build_grid(cocycle, &disk, &grids.n_grid, eps_min, None)?);
                }
                let grid = shared.as_ref().expect("built above");
                for k in 0..nk {
                    let logw = vec![sums[k]; grid.len()];
                    for (e, &eps) in grids.eps_grid.iter().enumerate() {
                        table[k][e] = (
                            dp_packing(grid, k, eps, &logw, false).0,
                            covering_upper(grid, k, eps, &logw),
                            sums[k],
                        );
                    }
                }
            }
        } else {
            let weight = |j: i64, y: &TorusPoint| prepared.eval(j as usize, y);
            let grid = build_grid(cocycle, &disk, &grids.n_grid, eps_min, Some(&weight))?;
            for k in 0..nk {
                let logw = &grid.sums[k];
                if logw.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain(format!(
                        "potential {} is not finite along the disk",
                        pot.id
                    )));
                }
                let max_w = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for (e, &eps) in grids.eps_grid.iter().enumerate() {
                    table[k][e] = (
                        dp_packing(&grid, k, eps, logw, false).0,
                        covering_upper(&grid, k, eps, logw),
                        max_w,
                    );
                }
            }
        }
        out.push(table);
    }
    Ok(out)
}

/// Pressure estimates for several potentials over shared ω-samples, base
/// points and grids.
pub fn pressure_estimates(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    potentials: &[Potential],
    grids: &PressureGrids,
    seed: u64,
) -> Result<Vec<PressureEstimate>> {
    grids.validate()?;
    cocycle.check_compatible(system)?;
    let dim = cocycle.dim();
    let bases = base_points(dim, grids.base_grid);
    let half = grids.n_max().max(SPECTRUM_STEPS) + FRAME_SETTLE_STEPS as usize + 16;
    let omega_seeds: Vec<u64> = (0..grids.omega_samples)
        .map(|s| derive_seed(seed, s as u64))
        .collect();
    let paths: Vec<SymbolPath> = omega_seeds
        .iter()
        .map(|&s| sample_path(system, half, s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..paths.len())
        .flat_map(|s| (0..bases.len()).map(move |b| (s, b)))
        .collect();
    let results: Vec<CellLogs> = jobs
        .par_iter()
        .map(|&(s, b)| cell_logs(cocycle, &paths[s], &bases[b], grids, potentials))
        .collect::<Result<_>>()?;

    let nk = grids.n_grid.len();
    let ne = grids.eps_grid.len();
    let nb = bases.len();
    let mut estimates = Vec::with_capacity(potentials.len());
    for (p, pot) in potentials.iter().enumerate() {
        let mut cells = Vec::with_capacity(jobs.len() * nk * ne);
        for (job, &(s, b)) in jobs.iter().enumerate() {
            for k in 0..nk {
                for e in 0..ne {
                    let (lo, hi, _) = results[job][p][k][e];
                    cells.push(PressureCell {
                        omega_seed: omega_seeds[s],
                        x_index: b,
                        delta: grids.delta,
                        n: grids.n_grid[k],
                        epsilon: grids.eps_grid[e],
                        log_lower: lo,
                        log_upper: hi,
                        potential_id: pot.id.clone(),
                    });
                }
            }
        }
        // sup over base points for each (ω, n, ε)
        let sup = |s: usize, k: usize, e: usize, upper: bool| -> f64 {
            (0..nb)
                .map(|b| {
                    let (lo, hi, _) = results[s * nb + b][p][k][e];
                    if upper {
                        hi
                    } else {
                        lo
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        // relative change of the maximizing sum when one point is added or removed
        let resolution = |s: usize, k: usize| -> f64 {
            (0..nb)
                .map(|b| results[s * nb + b][p][k][0])
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .map_or(0.0, |(lo, _, w)| (w - lo).exp().min(1.0))
        };
        let window = upper_half(nk);
        let xs: Vec<f64> = grids.n_grid[window.clone()]
            .iter()
            .map(|&n| n as f64)
            .collect();
        let x_mean = mean(&xs);
        let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
        let mut eps_monotone = true;
        for s in 0..paths.len() {
            for k in 0..nk {
                for e in 1..ne {
                    if sup(s, k, e, false) > sup(s, k, e - 1, false) + 1e-12 {
                        eps_monotone = false;
                    }
                }
            }
        }
        let mut value_by_eps = Vec::with_capacity(ne);
        let mut per_omega = Vec::new();
        let mut ses = Vec::new();
        let mut residuals = Vec::new();
        let mut quantization = Vec::new();
        for e in 0..ne {
            let mut lows = Vec::with_capacity(paths.len());
            let mut highs = Vec::with_capacity(paths.len());
            for s in 0..paths.len() {
                let lo: Vec<f64> = (0..nk).map(|k| sup(s, k, e, false)).collect();
                let hi: Vec<f64> = (0..nk).map(|k| sup(s, k, e, true)).collect();
                let fit = upper_half_slope(&grids.n_grid, &lo);
                lows.push(fit.slope);
                highs.push(upper_half_slope(&grids.n_grid, &hi).slope);
                if e == 0 {
                    ses.push(fit.slope_se);
                    residuals.push(fit.residual_rms);
                    let q: f64 = if sxx > 0.0 {
                        window
                            .clone()
                            .zip(&xs)
                            .map(|(k, x)| (x - x_mean).abs() / sxx * resolution(s, k))
                            .sum()
                    } else {
                        resolution(s, window.start) / xs[0]
                    };
                    quantization.push(q);
                }
            }
            if e == 0 {
                per_omega = lows.clone();
            }
            value_by_eps.push(EpsValue {
                epsilon: grids.eps_grid[e],
                value: mean(&lows),
                upper_value: mean(&highs),
            });
        }
        let count = per_omega.len() as f64;
        let sd = std_dev(&per_omega);
        let mean_se2 = ses.iter().map(|s| s * s).sum::<f64>() / count;
        let count_resolution = mean(&quantization);
        let slope_ci = (1.96 * ((sd * sd + mean_se2) / count).sqrt()).hypot(count_resolution);
        let per_n_log = (0..nk)
            .map(|k| {
                let v: Vec<f64> = (0..paths.len()).map(|s| sup(s, k, 0, false)).collect();
                (grids.n_grid[k], mean(&v))
            })
            .collect();
        estimates.push(PressureEstimate {
            potential_id: pot.id.clone(),
            value: value_by_eps[0].value,
            upper_value: value_by_eps[0].upper_value,
            slope_ci,
            count_resolution,
            per_n_log,
            relative_spread: relative_spread(&per_omega),
            fit_residual: mean(&residuals),
            per_omega,
            value_by_eps,
            eps_monotone,
            delta: grids.delta,
            n_grid: grids.n_grid.clone(),
            eps_grid: grids.eps_grid.clone(),
            omega_samples: grids.omega_samples,
            cells,
        });
    }
    Ok(estimates)
}

pub fn pressure_estimate(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    potential: &Potential,
    grids: &PressureGrids,
    seed: u64,
) -> Result<PressureEstimate> {
    Ok(pressure_estimates(
        cocycle,
        system,
        std::slice::from_ref(potential),
        grids,
        seed,
    )?
    .pop()
    .expect("one potential"))
}

/// Unstable topological entropy `P^u(F, 0)`.
pub fn topological_entropy(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    grids: &PressureGrids,
    seed: u64,
) -> Result<PressureEstimate> {
    pressure_estimate(cocycle, system, &Potential::zero(), grids, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::{cat_cocycle, cat_lambda};

    fn small_grids() -> PressureGrids {
        PressureGrids {
            delta: 0.1,
            n_grid: vec![2, 4, 6, 8, 10, 12, 14],
            eps_grid: vec![0.02, 0.04],
            omega_samples: 1,
            base_grid: 2,
        }
    }

    #[test]
    fn cat_entropy_is_log_lambda() {
        let c = cat_cocycle();
        let sys = DrivingSystem::trivial(3);
        let est = topological_entropy(&c, &sys, &small_grids(), 3).unwrap();
        let l = cat_lambda().ln();
        assert!((est.value - l).abs() < 0.05 * l, "{}", est.value);
        assert!(est.eps_monotone);
        assert_eq!(est.cells.len(), 4 * 7 * 2);
        assert!(est.cells.iter().all(|c| c.log_lower <= c.log_upper));
    }

    #[test]
    fn constant_shift_is_exact() {
        let c = cat_cocycle();
        let sys = DrivingSystem::trivial(3);
        let ests = pressure_estimates(
            &c,
            &sys,
            &[Potential::zero(), Potential::constant(0.3)],
            &small_grids(),
            3,
        )
        .unwrap();
        assert!((ests[1].value - ests[0].value - 0.3).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut g = small_grids();
        g.eps_grid = vec![0.04, 0.02];
        assert!(g.validate().is_err());
        let mut g = small_grids();
        g.n_grid = vec![];
        assert!(g.validate().is_err());
    }
}
