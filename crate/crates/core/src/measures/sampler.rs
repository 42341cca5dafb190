//! Invariant sample measures: Haar (`P × Leb`), uniform measures on finite
//! invariant sets, and finite convex combinations of these.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rds::{
    derive_seed, rng_from_seed, sample_path, Cocycle, DrivingSystem, SymbolPath, TorusPoint,
};

/// Tolerance for closing a periodic orbit and for invariance of atom sets.
pub const PERIODIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Haar,
    PeriodicAtomic,
    ConvexCombo,
}

#[derive(Debug, Clone, PartialEq)]
enum Spec {
    Haar,
    Atomic(Vec<TorusPoint>),
    Combo(Vec<(f64, MeasureSampler)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSampler {
    pub id: String,
    spec: Spec,
}

/// One draw `(ω, x)` and the index of the extremal component it came from.
#[derive(Debug, Clone)]
pub struct MeasureSample {
    pub path: SymbolPath,
    pub point: TorusPoint,
    pub component: usize,
}

impl MeasureSampler {
    pub fn haar() -> Self {
        Self {
            id: "haar".into(),
            spec: Spec::Haar,
        }
    }

    /// Uniform measure on a finite set invariant under every fiber map.
    pub fn atomic(id: impl Into<String>, atoms: Vec<TorusPoint>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument(
                "an atomic measure needs atoms".into(),
            ));
        }
        Ok(Self {
            id: id.into(),
            spec: Spec::Atomic(atoms),
        })
    }

    /// Point mass at the origin, fixed by every linear toral map.
    pub fn fixed_point(dim: usize) -> Self {
        Self {
            id: "atomic-fixed".into(),
            spec: Spec::Atomic(vec![TorusPoint::origin(dim)]),
        }
    }

    /// Uniform measure on the orbit of `x` under the map of `symbol`, which
    /// must close within [`PERIODIC_TOL`] after at most `max_period` steps.
    pub fn periodic_orbit(
        cocycle: &Cocycle,
        symbol: usize,
        x: &TorusPoint,
        max_period: usize,
    ) -> Result<Self> {
        let map = cocycle.map(symbol);
        let mut orbit = vec![*x];
        let mut y = map.apply(x);
        while y.distance(x) > PERIODIC_TOL {
            if orbit.len() >= max_period {
                return Err(Error::InvalidArgument(format!(
                    "orbit does not close within {max_period} steps"
                )));
            }
            orbit.push(y);
            y = map.apply(&y);
        }
        Self::atomic(format!("atomic-p{}", orbit.len()), orbit)
    }

    pub fn convex_combo(id: impl Into<String>, parts: Vec<(f64, MeasureSampler)>) -> Result<Self> {
        if parts.is_empty() || parts.iter().any(|(w, _)| !(*w >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "combo weights must be nonnegative".into(),
            ));
        }
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "combo weights sum to {total}"
            )));
        }
        if parts
            .iter()
            .any(|(_, m)| m.kind() == MeasureKind::ConvexCombo)
        {
            return Err(Error::InvalidArgument(
                "combos must be built from extremal samplers".into(),
            ));
        }
        Ok(Self {
            id: id.into(),
            spec: Spec::Combo(parts),
        })
    }

    pub fn kind(&self) -> MeasureKind {
        match self.spec {
            Spec::Haar => MeasureKind::Haar,
            Spec::Atomic(_) => MeasureKind::PeriodicAtomic,
            Spec::Combo(_) => MeasureKind::ConvexCombo,
        }
    }

    pub fn atoms(&self) -> Option<&[TorusPoint]> {
        match &self.spec {
            Spec::Atomic(a) => Some(a),
            _ => None,
        }
    }

    /// `(weight, sampler)` components; an extremal sampler is its own
    /// single component.
    pub fn components(&self) -> Vec<(f64, &MeasureSampler)> {
        match &self.spec {
            Spec::Combo(parts) => parts.iter().map(|(w, m)| (*w, m)).collect(),
            _ => vec![(1.0, self)],
        }
    }

    /// Checks invariance of atom sets and that leaf conditionals are
    /// available (normalized leaf volume needs affine maps).
    pub fn validate(&self, cocycle: &Cocycle, system: &DrivingSystem) -> Result<()> {
        cocycle.check_compatible(system)?;
        match &self.spec {
            Spec::Haar => {
                if !cocycle.is_affine() {
                    return Err(Error::UnsupportedMeasure(
                        "Haar conditionals on leaves are known only for affine maps".into(),
                    ));
                }
            }
            Spec::Atomic(atoms) => {
                for (s, p) in system.marginal().iter().enumerate() {
                    if *p <= 0.0 {
                        continue;
                    }
                    let map = cocycle.map(s);
                    for a in atoms {
                        let image = map.apply(a);
                        if atoms.iter().all(|b| b.distance(&image) > PERIODIC_TOL) {
                            return Err(Error::UnsupportedMeasure(format!(
                                "atom set of {} is not invariant under symbol {s}",
                                self.id
                            )));
                        }
                    }
                }
            }
            Spec::Combo(parts) => {
                for (_, m) in parts {
                    m.validate(cocycle, system)?;
                }
            }
        }
        Ok(())
    }

    /// Draws `(ω, x)` with a symbol window of the given half-width.
    pub fn sample(
        &self,
        cocycle: &Cocycle,
        system: &DrivingSystem,
        half_window: usize,
        seed: u64,
    ) -> Result<MeasureSample> {
        let (component, sampler) = match &self.spec {
            Spec::Combo(parts) => {
                let mut rng = rng_from_seed(derive_seed(seed, 2));
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = parts.len() - 1;
                for (i, (w, _)) in parts.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                (pick, &parts[pick].1)
            }
            _ => (0, self),
        };
        let path = sample_path(system, half_window, derive_seed(seed, 0))?;
        let mut rng = rng_from_seed(derive_seed(seed, 1));
        let point = match &sampler.spec {
            Spec::Haar => {
                let c: Vec<f64> = (0..cocycle.dim()).map(|_| rng.random::<f64>()).collect();
                TorusPoint::new(&c)
            }
            Spec::Atomic(atoms) => atoms[rng.random_range(0..atoms.len())],
            Spec::Combo(_) => unreachable!("combos hold extremal samplers"),
        };
        Ok(MeasureSample {
            path,
            point,
            component,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::{cat_cocycle, cat_switching_cocycle};

    #[test]
    fn haar_marginals_pass_ks() {
        let cocycle = cat_cocycle();
        let system = DrivingSystem::trivial(1);
        let n = 10_000;
        let mut cols = vec![Vec::with_capacity(n); 2];
        for i in 0..n {
            let s = MeasureSampler::haar()
                .sample(&cocycle, &system, 1, i as u64)
                .unwrap();
            for (c, v) in cols.iter_mut().zip(s.point.coords()) {
                c.push(*v);
            }
        }
        // Kolmogorov critical value at the 0.999 level
        let crit = 1.949 / (n as f64).sqrt();
        for mut c in cols {
            c.sort_by(f64::total_cmp);
            let d = c
                .iter()
                .enumerate()
                .map(|(i, v)| ((i + 1) as f64 / n as f64 - v).max(v - i as f64 / n as f64))
                .fold(0.0, f64::max);
            assert!(d < crit, "KS statistic {d} ≥ {crit}");
        }
    }

    #[test]
    fn cat_orbits_close() {
        let cocycle = cat_cocycle();
        let m =
            MeasureSampler::periodic_orbit(&cocycle, 0, &TorusPoint::new(&[0.2, 0.4]), 50).unwrap();
        let atoms = m.atoms().unwrap();
        assert!(atoms.len() > 1);
        m.validate(&cocycle, &DrivingSystem::trivial(0)).unwrap();
        let back = cocycle.map(0).apply(atoms.last().unwrap());
        assert!(back.distance(&atoms[0]) < PERIODIC_TOL);
    }

    #[test]
    fn fixed_point_is_invariant_under_switching() {
        let system = DrivingSystem::iid(vec![0.5, 0.5], 0).unwrap();
        MeasureSampler::fixed_point(2)
            .validate(&cat_switching_cocycle(), &system)
            .unwrap();
        let bad = MeasureSampler::atomic("off", vec![TorusPoint::new(&[0.3, 0.1])]).unwrap();
        assert!(bad.validate(&cat_switching_cocycle(), &system).is_err());
    }

    #[test]
    fn combo_weights_must_sum_to_one() {
        let parts = vec![
            (0.5, MeasureSampler::haar()),
            (0.4, MeasureSampler::fixed_point(2)),
        ];
        assert!(MeasureSampler::convex_combo("c", parts).is_err());
        let parts = vec![
            (0.5, MeasureSampler::haar()),
            (0.5, MeasureSampler::fixed_point(2)),
        ];
        let c = MeasureSampler::convex_combo("c", parts).unwrap();
        assert_eq!(c.components().len(), 2);
    }
}
