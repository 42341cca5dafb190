//! Lyapunov spectra by QR accumulation, unstable and complementary bundles,
//! and sampled certificates of partial hyperbolicity.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rds::{
    derive_seed, jac_det, jac_to_dmatrix, rng_from_seed, sample_path, Cocycle, DrivingSystem,
    SymbolPath, TorusPoint,
};

/// Exponents closer than this are merged into one Lyapunov block.
pub const CLUSTER_GAP: f64 = 0.02;
/// Clustered exponents within this distance of zero count as zero when
/// deciding the unstable index.
pub const ZERO_EXPONENT_TOL: f64 = CLUSTER_GAP / 2.0;
/// Steps used to pull a frame onto E^u(ω,x) (or F^u) from the past (future).
pub const FRAME_SETTLE_STEPS: i64 = 400;
/// Seed of the fixed generic frame the settling iterations start from, so
/// that no leading span is an invariant coordinate subspace.
const SETTLE_FRAME_SEED: u64 = 0x5eed_f4a3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OseledetsReport {
    /// Distinct exponents after clustering, decreasing (nats per step).
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Unclustered QR exponents, one per tangent direction.
    pub raw_exponents: Vec<f64>,
    pub unstable_index: usize,
    /// Orthonormal basis of the estimated E^u(ω,x), one column per entry.
    pub eu_frame: Vec<Vec<f64>>,
    /// Orthonormal basis of the estimated F^u(ω,x).
    pub fu_frame: Vec<Vec<f64>>,
    pub orbit_length: usize,
    /// (1/n)·log|det D_x f^n_ω| along the same orbit.
    pub log_det_rate: f64,
}

impl OseledetsReport {
    /// Number of tangent directions in E^u.
    pub fn unstable_dim(&self) -> usize {
        self.multiplicities[..self.unstable_index].iter().sum()
    }

    pub fn eu_matrix(&self, dim: usize) -> DMatrix<f64> {
        frame_to_matrix(&self.eu_frame, dim)
    }

    pub fn fu_matrix(&self, dim: usize) -> DMatrix<f64> {
        frame_to_matrix(&self.fu_frame, dim)
    }
}

pub(crate) fn frame_to_matrix(frame: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, frame.len(), |r, c| frame[c][r])
}

fn matrix_to_frame(m: &DMatrix<f64>, cols: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    cols.map(|c| m.column(c).iter().copied().collect())
        .collect()
}

/// Merges exponents (sorted decreasing) whose neighbours are closer than
/// [`CLUSTER_GAP`]; returns block means and multiplicities.
pub fn cluster_exponents(sorted_desc: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    for &v in sorted_desc {
        match blocks.last_mut() {
            Some(b) if b.last().is_some_and(|last| last - v < CLUSTER_GAP) => b.push(v),
            _ => blocks.push(vec![v]),
        }
    }
    let exps = blocks
        .iter()
        .map(|b| b.iter().sum::<f64>() / b.len() as f64)
        .collect();
    let mults = blocks.iter().map(Vec::len).collect();
    (exps, mults)
}

/// `u = max{j : λ_j > 0}`, with exponents inside [`ZERO_EXPONENT_TOL`] of
/// zero treated as zero.
pub fn unstable_dimension(report: &OseledetsReport) -> usize {
    unstable_index_of(&report.exponents)
}

fn unstable_index_of(exponents: &[f64]) -> usize {
    exponents
        .iter()
        .take_while(|l| **l > ZERO_EXPONENT_TOL)
        .count()
}

fn qr_step(m: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    let mut logs = Vec::with_capacity(r.nrows());
    for i in 0..r.nrows() {
        let d = r[(i, i)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::DegenerateJacobian(
                "zero diagonal in QR accumulation".into(),
            ));
        }
        // keep R's diagonal positive so Q is continuous along the orbit
        if d < 0.0 {
            let mut col = q.column_mut(i);
            col *= -1.0;
        }
        logs.push(d.abs().ln());
    }
    Ok((q, logs))
}

fn initial_frame(dim: usize, frame_seed: Option<u64>) -> DMatrix<f64> {
    match frame_seed {
        None => DMatrix::identity(dim, dim),
        Some(seed) => {
            let mut rng = rng_from_seed(seed);
            let m = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
            m.qr().q()
        }
    }
}

/// Lyapunov spectrum along the forward orbit of `(ω, x)` by QR accumulation.
pub fn lyapunov_spectrum(
    cocycle: &Cocycle,
    path: &SymbolPath,
    x: &TorusPoint,
    n: usize,
) -> Result<OseledetsReport> {
    lyapunov_spectrum_with_frame(cocycle, path, x, n, None)
}

/// As [`lyapunov_spectrum`], starting the QR accumulation from a random
/// orthonormal frame drawn from `frame_seed`.
pub fn lyapunov_spectrum_with_frame(
    cocycle: &Cocycle,
    path: &SymbolPath,
    x: &TorusPoint,
    n: usize,
    frame_seed: Option<u64>,
) -> Result<OseledetsReport> {
    if n < 100 {
        return Err(Error::InvalidArgument(format!(
            "orbit length {n} too short for a spectrum (need at least 100)"
        )));
    }
    let dim = cocycle.dim();
    cocycle.check_path(path)?;
    path.require(0, n as i64 - 1)?;
    let mut q = initial_frame(dim, frame_seed);
    let mut sums = vec![0.0; dim];
    let mut log_det = 0.0;
    let mut y = *x;
    for j in 0..n as i64 {
        let map = cocycle.map(path.symbol(j)?);
        let jac = map.jacobian_raw(y.raw());
        let det = jac_det(&jac, dim);
        if det.abs() < 1e-12 {
            return Err(Error::DegenerateJacobian(format!(
                "|det Df| = {det:e} at step {j}"
            )));
        }
        log_det += det.abs().ln();
        let (nq, logs) = qr_step(jac_to_dmatrix(&jac, dim) * q)?;
        q = nq;
        for (s, l) in sums.iter_mut().zip(logs) {
            *s += l;
        }
        y = map.apply(&y);
    }
    let mut raw: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    raw.sort_by(|a, b| b.total_cmp(a));
    let (exponents, multiplicities) = cluster_exponents(&raw);
    let unstable_index = unstable_index_of(&exponents);
    let k: usize = multiplicities[..unstable_index].iter().sum();

    let eu_frame = if k == 0 {
        Vec::new()
    } else {
        let m = (n as i64)
            .min(FRAME_SETTLE_STEPS)
            .min(path.backward_reach());
        if m < 1 {
            return Err(Error::WindowExhausted {
                index: -1,
                half_window: path.half_window(),
            });
        }
        let f = push_frame_forward(cocycle, path, x, m)?;
        matrix_to_frame(&f, 0..k)
    };
    let fu_frame = if k == dim {
        Vec::new()
    } else {
        let m = (n as i64).min(FRAME_SETTLE_STEPS).min(path.forward_reach());
        let f = pull_frame_backward(cocycle, path, x, m)?;
        matrix_to_frame(&f, 0..dim - k)
    };

    Ok(OseledetsReport {
        exponents,
        multiplicities,
        raw_exponents: raw,
        unstable_index,
        eu_frame,
        fu_frame,
        orbit_length: n,
        log_det_rate: log_det / n as f64,
    })
}

/// Orthonormal frame at `(ω,x)` obtained by pushing the identity frame from
/// `Θ^{-m}(ω,x)`; its leading columns approximate the fastest directions,
/// i.e. E^u.
pub(crate) fn push_frame_forward(
    cocycle: &Cocycle,
    path: &SymbolPath,
    x: &TorusPoint,
    m: i64,
) -> Result<DMatrix<f64>> {
    let dim = cocycle.dim();
    let start = cocycle.compose(path, -m, x)?;
    let mut y = start;
    let mut q = initial_frame(dim, Some(SETTLE_FRAME_SEED));
    for j in -m..0 {
        let map = cocycle.map(path.symbol(j)?);
        let (nq, _) = qr_step(map.jacobian(&y) * q)?;
        q = nq;
        y = map.apply(&y);
    }
    Ok(q)
}

/// Orthonormal frame at `(ω,x)` obtained by pulling the identity frame back
/// from `Θ^{m}(ω,x)` with inverse Jacobians; its leading columns approximate
/// the directions least expanded forward, i.e. F^u.
pub(crate) fn pull_frame_backward(
    cocycle: &Cocycle,
    path: &SymbolPath,
    x: &TorusPoint,
    m: i64,
) -> Result<DMatrix<f64>> {
    let dim = cocycle.dim();
    let mut orbit = Vec::with_capacity(m as usize + 1);
    let mut y = *x;
    for j in 0..m {
        orbit.push(y);
        y = cocycle.step(path, j, &y)?;
    }
    let mut q = initial_frame(dim, Some(SETTLE_FRAME_SEED));
    for j in (0..m).rev() {
        let map = cocycle.map(path.symbol(j)?);
        let jinv = map
            .jacobian(&orbit[j as usize])
            .try_inverse()
            .ok_or_else(|| Error::DegenerateJacobian("singular Jacobian".into()))?;
        let (nq, _) = qr_step(jinv * q)?;
        q = nq;
    }
    Ok(q)
}

/// Estimated E^u frame at `(ω,x)` given the unstable dimension, without
/// recomputing the spectrum.
pub fn unstable_frame(
    cocycle: &Cocycle,
    path: &SymbolPath,
    x: &TorusPoint,
    unstable_dim: usize,
    settle_steps: i64,
) -> Result<DMatrix<f64>> {
    let m = settle_steps.min(path.backward_reach());
    let f = push_frame_forward(cocycle, path, x, m)?;
    Ok(f.columns(0, unstable_dim).into_owned())
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityCertificate {
    /// Worst (largest) per-step log of the F^u-to-E^u growth ratio.
    pub domination_ratio_log: f64,
    /// λ̃: smallest co-norm of `Df¹` on E^u over all samples.
    pub expansion_lower: f64,
    /// C in the domination inequality with `λ = exp(domination_ratio_log)`.
    pub constant_c: f64,
    pub lambda: f64,
    pub samples: usize,
    pub verdict: Verdict,
    pub per_sample: Vec<SampleRecord>,
}

/// One line of the JSON-lines spectrum report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub sample: usize,
    pub exponents: Vec<f64>,
    pub unstable_index: usize,
    pub verdict: Verdict,
}

impl SampleRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("sample record serializes")
    }
}

/// Horizon used for the domination ratio; long enough for the rate, short
/// enough that products stay in range.
const DOMINATION_HORIZON: usize = 20;

fn extreme_singular_values(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// Samples `(ω, x)` and checks the domination and uniform-expansion
/// conditions along each orbit. Verdict is `certified` when every sample
/// passes, `violated` when none does, `inconclusive` otherwise.
pub fn certify_partial_hyperbolicity(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    samples: usize,
    n: usize,
    seed: u64,
) -> Result<HyperbolicityCertificate> {
    if samples < 10 {
        return Err(Error::InvalidArgument(format!(
            "certification needs at least 10 samples, got {samples}"
        )));
    }
    cocycle.check_compatible(system)?;
    let dim = cocycle.dim();
    let half = n + FRAME_SETTLE_STEPS as usize + 8;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut min_expansion = f64::INFINITY;
    let mut per_sample = Vec::with_capacity(samples);
    let mut passes = 0usize;
    let mut ratios: Vec<Vec<f64>> = Vec::new();

    for s in 0..samples {
        let sseed = derive_seed(seed, s as u64);
        let path = sample_path(system, half, sseed)?;
        let mut rng = rng_from_seed(derive_seed(sseed, 1));
        let coords: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let x = TorusPoint::new(&coords);
        let report = lyapunov_spectrum(cocycle, &path, &x, n)?;
        let k = report.unstable_dim();
        let mut ok = k > 0;
        if k > 0 {
            let e = report.eu_matrix(dim);
            let f = report.fu_matrix(dim);
            let j1 = cocycle.derivative(&path, 1, &x)?;
            let (co_norm, _) = extreme_singular_values(&(&j1 * &e));
            min_expansion = min_expansion.min(co_norm);
            let horizon = DOMINATION_HORIZON.min(n);
            let mut y = x;
            let mut acc = DMatrix::<f64>::identity(dim, dim);
            let mut sample_ratios = Vec::with_capacity(horizon);
            for j in 0..horizon as i64 {
                let map = cocycle.map(path.symbol(j)?);
                acc = map.jacobian(&y) * acc;
                y = map.apply(&y);
                let (emin, _) = extreme_singular_values(&(&acc * &e));
                let fmax = if f.ncols() > 0 {
                    extreme_singular_values(&(&acc * &f)).1
                } else {
                    0.0
                };
                sample_ratios.push(fmax.ln() - emin.ln());
            }
            let gap = sample_ratios.last().copied().unwrap_or(0.0) / horizon as f64;
            worst_gap = worst_gap.max(gap);
            ok &= co_norm > 1.0 && gap < 0.0;
            ratios.push(sample_ratios);
        } else {
            min_expansion = min_expansion.min(1.0);
            worst_gap = worst_gap.max(0.0);
        }
        if ok {
            passes += 1;
        }
        per_sample.push(SampleRecord {
            seed: sseed,
            sample: s,
            exponents: report.exponents.clone(),
            unstable_index: report.unstable_index,
            verdict: if ok {
                Verdict::Certified
            } else {
                Verdict::Violated
            },
        });
    }

    let constant_c = ratios
        .iter()
        .flat_map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, lr)| (lr - (j + 1) as f64 * worst_gap).exp())
        })
        .fold(1.0, f64::max);
    let verdict = if passes == samples {
        Verdict::Certified
    } else if passes == 0 {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    };
    Ok(HyperbolicityCertificate {
        domination_ratio_log: worst_gap,
        expansion_lower: min_expansion,
        constant_c,
        lambda: worst_gap.exp(),
        samples,
        verdict,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::{cat_cocycle, cat_lambda, MapDescriptor};

    fn report_with(exps: &[f64]) -> OseledetsReport {
        OseledetsReport {
            exponents: exps.to_vec(),
            multiplicities: vec![1; exps.len()],
            raw_exponents: exps.to_vec(),
            unstable_index: 0,
            eu_frame: vec![],
            fu_frame: vec![],
            orbit_length: 100,
            log_det_rate: 0.0,
        }
    }

    #[test]
    fn unstable_dimension_examples() {
        assert_eq!(unstable_dimension(&report_with(&[0.96, -0.96])), 1);
        assert_eq!(unstable_dimension(&report_with(&[-0.1, -0.5])), 0);
        assert_eq!(unstable_dimension(&report_with(&[0.96, 0.0, -0.96])), 1);
    }

    #[test]
    fn clustering_merges_close_exponents() {
        let (e, m) = cluster_exponents(&[0.5, 0.49, 0.0, -0.3]);
        assert_eq!(m, vec![2, 1, 1]);
        assert!((e[0] - 0.495).abs() < 1e-12);
    }

    #[test]
    fn short_orbit_rejected() {
        let c = cat_cocycle();
        let p = SymbolPath::constant(0, 200);
        assert!(lyapunov_spectrum(&c, &p, &TorusPoint::new(&[0.1, 0.2]), 50).is_err());
    }

    #[test]
    fn cat_eu_frame_is_golden_direction() {
        let c = cat_cocycle();
        let p = SymbolPath::constant(0, 1200);
        let r = lyapunov_spectrum(&c, &p, &TorusPoint::new(&[0.1, 0.2]), 1000).unwrap();
        let v = &r.eu_frame[0];
        let slope = v[1] / v[0];
        assert!(
            (slope - (cat_lambda() - 2.0)).abs() < 1e-10,
            "slope {slope}"
        );
        let w = &r.fu_frame[0];
        assert!((v[0] * w[0] + v[1] * w[1]).abs() < 1e-10);
    }

    #[test]
    fn identity_map_is_violated() {
        let id = Cocycle::new(vec![
            MapDescriptor::linear(vec![vec![1, 0], vec![0, 1]]).unwrap()
        ])
        .unwrap();
        let cert =
            certify_partial_hyperbolicity(&id, &DrivingSystem::trivial(0), 10, 100, 3).unwrap();
        assert_eq!(cert.verdict, Verdict::Violated);
    }
}
