//! The geometric potential, cohomology transforms, variational checks
//! between pressure, entropy and integrals, Gibbs u-state defects, and the
//! finite mixing inequality.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{
    bowen_ball_entropy, build_partition_pair, partition_entropy_rate, EntropyEstimate,
    EntropyMethod, MeasureSampler,
};
use crate::oseledets::{lyapunov_spectrum, OseledetsReport, FRAME_SETTLE_STEPS};
use crate::rds::{derive_seed, Cocycle, DrivingSystem};
use crate::stats::{log_sum_exp, mean, std_dev};
use crate::thermo::{birkhoff_sum, pressure_estimates, Potential, PressureEstimate, PressureGrids};

const Z95: f64 = 1.96;
/// Tolerance for the mixing inequality.
pub const MIXING_TOL: f64 = 1e-12;

/// `φ^u = −log |det Df_ω|E^u(ω, x)|` for the unstable dimension in `report`.
pub fn geometric_potential(report: &OseledetsReport) -> Result<Potential> {
    match report.unstable_dim() {
        0 => Err(Error::TrivialLeaf),
        u => Ok(Potential::geometric_u(u)),
    }
}

/// `φ^u` with the unstable dimension read off the spectrum at one sampled
/// point of the system.
pub fn geometric_potential_for(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    seed: u64,
) -> Result<Potential> {
    let sample =
        MeasureSampler::haar().sample(cocycle, system, FRAME_SETTLE_STEPS as usize + 216, seed)?;
    let report = lyapunov_spectrum(cocycle, &sample.path, &sample.point, 200)?;
    geometric_potential(&report)
}

/// `φ + σ∘Θ − σ − c(ω_0)`.
pub fn cohomologous_transform(phi: &Potential, sigma: &Potential, c: &[f64]) -> Potential {
    let mut out = if sigma.terms().is_empty() {
        phi.clone()
    } else {
        phi.plus(&Potential::coboundary(sigma))
    };
    if c.iter().any(|v| *v != 0.0) {
        out = out.minus(&Potential::per_symbol(c.to_vec()));
    }
    out.with_id(format!("{}~{}", phi.id, sigma.id))
}

/// How `h^u_μ` and `∫φ dμ` are estimated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySettings {
    pub method: EntropyMethod,
    pub delta: f64,
    pub n_grid: Vec<usize>,
    /// Bowen ball radius.
    pub eps: f64,
    /// Grid side of `α` for the partition rate.
    pub grid_k: usize,
    pub samples: usize,
    /// Orbit length of the Birkhoff averages.
    pub orbit_length: usize,
}

impl EntropySettings {
    pub fn entropy(
        &self,
        cocycle: &Cocycle,
        system: &DrivingSystem,
        sampler: &MeasureSampler,
        seed: u64,
    ) -> Result<EntropyEstimate> {
        match self.method {
            EntropyMethod::BowenBall => bowen_ball_entropy(
                cocycle,
                system,
                sampler,
                self.delta,
                &self.n_grid,
                self.eps,
                self.samples,
                seed,
            ),
            _ => {
                let pair =
                    build_partition_pair(system, cocycle.dim(), self.delta, self.grid_k, seed)?;
                partition_entropy_rate(
                    cocycle,
                    system,
                    sampler,
                    &pair,
                    &self.n_grid,
                    self.samples,
                    seed,
                )
            }
        }
    }
}

/// `∫φ dμ` with a 95% half-width, from Birkhoff averages along one orbit
/// per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub ci: f64,
}

pub fn measure_integral(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    potential: &Potential,
    orbit_length: usize,
    samples: usize,
    seed: u64,
) -> Result<Integral> {
    if orbit_length < 1 || samples < 1 {
        return Err(Error::InvalidArgument(
            "orbit_length and samples must be positive".into(),
        ));
    }
    sampler.validate(cocycle, system)?;
    let half = orbit_length + FRAME_SETTLE_STEPS as usize + 16;
    let averages: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let s = sampler.sample(cocycle, system, half, derive_seed(seed, i as u64))?;
            Ok(
                birkhoff_sum(cocycle, potential, &s.path, &s.point, orbit_length)?
                    / orbit_length as f64,
            )
        })
        .collect::<Result<_>>()?;
    Ok(Integral {
        value: mean(&averages),
        ci: Z95 * std_dev(&averages) / (samples as f64).sqrt(),
    })
}

/// `h^u_μ` and `∫φ dμ` per extremal component, combined affinely.
fn candidate_terms(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    potentials: &[Potential],
    settings: &EntropySettings,
    seed: u64,
) -> Result<(Integral, Vec<Integral>)> {
    let mut h = Integral {
        value: 0.0,
        ci: 0.0,
    };
    let mut ints = vec![
        Integral {
            value: 0.0,
            ci: 0.0
        };
        potentials.len()
    ];
    for (w, part) in sampler.components() {
        let e = settings.entropy(cocycle, system, part, seed)?;
        h.value += w * e.value;
        h.ci = h.ci.hypot(w * e.ci);
        for (slot, pot) in ints.iter_mut().zip(potentials) {
            let i = measure_integral(
                cocycle,
                system,
                part,
                pot,
                settings.orbit_length,
                settings.samples,
                seed,
            )?;
            slot.value += w * i.value;
            slot.ci = slot.ci.hypot(w * i.ci);
        }
    }
    Ok((h, ints))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsDefect {
    pub measure_id: String,
    pub pressure_at_phiu: f64,
    pub pressure_ci: f64,
    pub entropy: f64,
    pub integral_neg_phiu: f64,
    /// `∫(−φ^u) dμ − h^u_μ`.
    pub pesin_gap: f64,
    pub pesin_ci: f64,
}

/// `P^u(F, φ^u)` and the Pesin-type gap of `sampler`.
pub fn gibbs_defect(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    grids: &PressureGrids,
    settings: &EntropySettings,
    seed: u64,
) -> Result<GibbsDefect> {
    let phi = geometric_potential_for(cocycle, system, seed)?;
    let p = pressure_estimates(cocycle, system, std::slice::from_ref(&phi), grids, seed)?
        .pop()
        .expect("one potential");
    let (h, ints) = candidate_terms(
        cocycle,
        system,
        sampler,
        std::slice::from_ref(&phi),
        settings,
        seed,
    )?;
    let neg = -ints[0].value;
    Ok(GibbsDefect {
        measure_id: sampler.id.clone(),
        pressure_at_phiu: p.value,
        pressure_ci: p.slope_ci,
        entropy: h.value,
        integral_neg_phiu: neg,
        pesin_gap: neg - h.value,
        pesin_ci: h.ci.hypot(ints[0].ci),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub measure_id: String,
    pub entropy: f64,
    pub entropy_ci: f64,
    pub integral: f64,
    pub integral_ci: f64,
    /// `P^u(F, φ) − h^u_μ − ∫φ dμ`.
    pub defect: f64,
    pub defect_ci: f64,
    /// Defect within its half-width of zero.
    pub near_equilibrium: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub potential_id: String,
    pub pressure: PressureEstimate,
    pub candidates: Vec<Candidate>,
    /// Candidate with the smallest defect.
    pub best: String,
}

impl EquilibriumReport {
    /// Every defect is at least minus its half-width.
    pub fn variational_inequality_holds(&self) -> bool {
        self.candidates.iter().all(|c| c.defect >= -c.defect_ci)
    }

    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.measure_id == id)
    }
}

/// Defects of each candidate measure against `P^u(F, φ)`.
pub fn equilibrium_scan(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    phi: &Potential,
    measures: &[MeasureSampler],
    grids: &PressureGrids,
    settings: &EntropySettings,
    seed: u64,
) -> Result<EquilibriumReport> {
    Ok(equilibrium_scans(
        cocycle,
        system,
        std::slice::from_ref(phi),
        measures,
        grids,
        settings,
        seed,
    )?
    .pop()
    .expect("one potential"))
}

/// [`equilibrium_scan`] for several potentials sharing the entropy
/// estimates and the pressure samples.
pub fn equilibrium_scans(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    potentials: &[Potential],
    measures: &[MeasureSampler],
    grids: &PressureGrids,
    settings: &EntropySettings,
    seed: u64,
) -> Result<Vec<EquilibriumReport>> {
    if measures.len() < 2 {
        return Err(Error::InvalidArgument(
            "an equilibrium scan needs two or more candidates".into(),
        ));
    }
    let pressures = pressure_estimates(cocycle, system, potentials, grids, seed)?;
    let terms: Vec<(Integral, Vec<Integral>)> = measures
        .iter()
        .map(|m| candidate_terms(cocycle, system, m, potentials, settings, seed))
        .collect::<Result<_>>()?;
    Ok(potentials
        .iter()
        .zip(pressures)
        .enumerate()
        .map(|(k, (phi, pressure))| {
            let candidates: Vec<Candidate> = measures
                .iter()
                .zip(&terms)
                .map(|(m, (h, ints))| {
                    let defect = pressure.value - h.value - ints[k].value;
                    let defect_ci = pressure.slope_ci.hypot(h.ci).hypot(ints[k].ci);
                    Candidate {
                        measure_id: m.id.clone(),
                        entropy: h.value,
                        entropy_ci: h.ci,
                        integral: ints[k].value,
                        integral_ci: ints[k].ci,
                        defect,
                        defect_ci,
                        near_equilibrium: defect.abs() <= defect_ci.max(f64::EPSILON),
                    }
                })
                .collect();
            let best = candidates
                .iter()
                .min_by(|a, b| a.defect.total_cmp(&b.defect))
                .map(|c| c.measure_id.clone())
                .expect("two or more candidates");
            EquilibriumReport {
                potential_id: phi.id.clone(),
                pressure,
                candidates,
                best,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualVpReport {
    pub measure_id: String,
    pub entropy: f64,
    /// `(potential_id, P^u(F, φ) − ∫φ dμ − h^u_μ)`.
    pub gaps: Vec<(String, f64)>,
    pub min_gap: f64,
    pub argmin: String,
    pub ci: f64,
}

/// `inf_φ (P^u(F, φ) − ∫φ dμ) − h^u_μ` over a finite family.
pub fn dual_vp_check(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    family: &[Potential],
    grids: &PressureGrids,
    settings: &EntropySettings,
    seed: u64,
) -> Result<DualVpReport> {
    if family.is_empty() {
        return Err(Error::InvalidArgument(
            "the potential family is empty".into(),
        ));
    }
    let pressures = pressure_estimates(cocycle, system, family, grids, seed)?;
    let (h, ints) = candidate_terms(cocycle, system, sampler, family, settings, seed)?;
    let gaps: Vec<(String, f64, f64)> = family
        .iter()
        .zip(&pressures)
        .zip(&ints)
        .map(|((phi, p), i)| {
            (
                phi.id.clone(),
                p.value - i.value - h.value,
                p.slope_ci.hypot(i.ci).hypot(h.ci),
            )
        })
        .collect();
    let best = gaps
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty family");
    Ok(DualVpReport {
        measure_id: sampler.id.clone(),
        entropy: h.value,
        min_gap: best.1,
        argmin: best.0.clone(),
        ci: best.2,
        gaps: gaps.iter().map(|(id, g, _)| (id.clone(), *g)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

/// `Σ p_i (a_i − log p_i) ≤ s (log Σ e^{a_i} − log s)` with `s = Σ p_i`
/// and `0·log 0 = 0`.
pub fn mixing_inequality_check(p: &[f64], a: &[f64]) -> Result<MixingCheck> {
    if p.len() != a.len() || p.is_empty() {
        return Err(Error::Domain(
            "p and a must be nonempty and of equal length".into(),
        ));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain("every p_i must lie in [0, 1]".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("every a_i must be finite".into()));
    }
    let s: f64 = p.iter().sum();
    if s <= 0.0 {
        return Err(Error::Domain("Σ p_i must be positive".into()));
    }
    let lhs: f64 = p
        .iter()
        .zip(a)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, ai)| pi * (ai - pi.ln()))
        .sum();
    let rhs = s * (log_sum_exp(a) - s.ln());
    let slack = rhs - lhs;
    Ok(MixingCheck {
        lhs,
        rhs,
        slack,
        holds: slack >= -MIXING_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::{
        cat_cocycle, cat_lambda, cat_squared_matrix, MapDescriptor, SymbolPath, TorusPoint,
    };
    use crate::thermo::birkhoff_sum;
    use rand::Rng;

    #[test]
    fn mixing_examples() {
        let c = mixing_inequality_check(&[0.5, 0.5], &[0.0, 0.0]).unwrap();
        assert!((c.lhs - 2f64.ln()).abs() < 1e-15 && (c.rhs - 2f64.ln()).abs() < 1e-15);
        let c = mixing_inequality_check(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(c.lhs, 1.0);
        assert!((c.rhs - (1f64.exp() + 1.0).ln()).abs() < 1e-15);
        assert!((c.rhs - 1.313).abs() < 1e-3);
        assert!(matches!(
            mixing_inequality_check(&[1.2], &[0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            mixing_inequality_check(&[0.0, 0.0], &[0.0, 1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mixing_random_sweep() {
        let mut rng = crate::rds::rng_from_seed(10);
        let mut worst = f64::INFINITY;
        let mut above_one = 0;
        for _ in 0..10_000 {
            let k = rng.random_range(1..=6);
            let p: Vec<f64> = (0..k)
                .map(|_| rng.random::<f64>() * (2.0 / k as f64).min(1.0))
                .collect();
            let a: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            if p.iter().sum::<f64>() > 1.0 {
                above_one += 1;
            }
            worst = worst.min(mixing_inequality_check(&p, &a).unwrap().slack);
        }
        assert!(worst >= -MIXING_TOL);
        assert!(above_one > 1000);
    }

    #[test]
    fn geometric_potential_values() {
        let path = SymbolPath::constant(0, 800);
        let x = TorusPoint::new(&[0.3, 0.7]);
        let cat = cat_cocycle();
        let rep = lyapunov_spectrum(&cat, &path, &x, 200).unwrap();
        let phi = geometric_potential(&rep).unwrap();
        let l = cat_lambda().ln();
        assert!((birkhoff_sum(&cat, &phi, &path, &x, 1).unwrap() + l).abs() < 1e-10);
        let sq = Cocycle::new(vec![MapDescriptor::linear(cat_squared_matrix()).unwrap()]).unwrap();
        assert!((birkhoff_sum(&sq, &phi, &path, &x, 1).unwrap() + 2.0 * l).abs() < 1e-10);
    }

    #[test]
    fn trivial_transform_is_identity() {
        let phi = Potential::coordinate_cos(0, 1.0);
        let out = cohomologous_transform(&phi, &Potential::zero(), &[0.0]);
        assert_eq!(out.terms(), phi.terms());
    }

    #[test]
    fn transformed_sums_telescope() {
        let cat = cat_cocycle();
        let sigma = Potential::coordinate_cos(0, 1.0);
        let psi = cohomologous_transform(&Potential::zero(), &sigma, &[0.0]);
        let path = SymbolPath::constant(0, 200);
        let x = TorusPoint::new(&[0.123, 0.456]);
        for n in [1, 5, 17, 40] {
            let s = birkhoff_sum(&cat, &psi, &path, &x, n).unwrap();
            assert!(s.abs() <= 2.0 + 1e-9);
            let y = cat.compose(&path, n as i64, &x).unwrap();
            let tel = (std::f64::consts::TAU * y.coords()[0]).cos()
                - (std::f64::consts::TAU * x.coords()[0]).cos();
            assert!((s - tel).abs() < 1e-6, "n = {n}");
        }
    }
}
