//! Potentials `φ(ω, x)` in `L¹(Ω, C(M))` and Birkhoff sums.
//!
//! A potential is a finite weighted sum of terms. Terms that only depend on
//! the symbol path are folded into a per-time table when a potential is
//! prepared along a path, so evaluating on a leaf grid only touches the
//! genuinely `x`-dependent terms.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oseledets::{unstable_frame, FRAME_SETTLE_STEPS};
use crate::rds::{
    derive_seed, sample_path, BaseKind, Cocycle, DrivingSystem, SymbolPath, TorusPoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Zero,
    ConstantPerSymbol,
    CoordinateObservable,
    GeometricU,
    CustomSum,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Constant(f64),
    /// `values[ω₀]`.
    PerSymbol(Vec<f64>),
    /// `cos(2π⟨k, x⟩ + phase)`.
    Fourier {
        frequency: [i64; 3],
        phase: f64,
    },
    /// `−log |det Df_ω|E^u(ω,x)|` for an unstable bundle of the given dimension.
    GeometricU {
        unstable_dim: usize,
    },
    /// `σ∘Θ − σ`.
    Coboundary(Box<Potential>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub id: String,
    kind: PotentialKind,
    terms: Vec<(f64, Term)>,
}

impl Potential {
    fn single(id: &str, kind: PotentialKind, term: Term) -> Self {
        Self {
            id: id.to_string(),
            kind,
            terms: vec![(1.0, term)],
        }
    }

    pub fn zero() -> Self {
        Self {
            id: "zero".into(),
            kind: PotentialKind::Zero,
            terms: Vec::new(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::single(
            &format!("const({c})"),
            PotentialKind::ConstantPerSymbol,
            Term::Constant(c),
        )
    }

    pub fn per_symbol(values: Vec<f64>) -> Self {
        Self::single(
            "per-symbol",
            PotentialKind::ConstantPerSymbol,
            Term::PerSymbol(values),
        )
    }

    /// `amplitude · cos(2π x_component)`.
    pub fn coordinate_cos(component: usize, amplitude: f64) -> Self {
        let mut frequency = [0; 3];
        frequency[component] = 1;
        Self {
            id: format!("cos(2pi x{})", component + 1),
            kind: PotentialKind::CoordinateObservable,
            terms: vec![(
                amplitude,
                Term::Fourier {
                    frequency,
                    phase: 0.0,
                },
            )],
        }
    }

    /// `amplitude · sin(2π x_component)`.
    pub fn coordinate_sin(component: usize, amplitude: f64) -> Self {
        let mut frequency = [0; 3];
        frequency[component] = 1;
        Self {
            id: format!("sin(2pi x{})", component + 1),
            kind: PotentialKind::CoordinateObservable,
            terms: vec![(
                amplitude,
                Term::Fourier {
                    frequency,
                    phase: -std::f64::consts::FRAC_PI_2,
                },
            )],
        }
    }

    pub fn fourier(coefficient: f64, frequency: [i64; 3], phase: f64) -> Self {
        Self {
            id: "fourier".into(),
            kind: PotentialKind::CoordinateObservable,
            terms: vec![(coefficient, Term::Fourier { frequency, phase })],
        }
    }

    /// `φ^u = −log |det Df|E^u|`.
    pub fn geometric_u(unstable_dim: usize) -> Self {
        Self::single(
            "phi_u",
            PotentialKind::GeometricU,
            Term::GeometricU { unstable_dim },
        )
    }

    /// `σ∘Θ − σ`.
    pub fn coboundary(sigma: &Potential) -> Self {
        Self::single(
            &format!("cob({})", sigma.id),
            PotentialKind::CustomSum,
            Term::Coboundary(Box::new(sigma.clone())),
        )
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn terms(&self) -> &[(f64, Term)] {
        &self.terms
    }

    pub fn plus(&self, other: &Potential) -> Potential {
        let kind = match (self.kind, other.kind) {
            (PotentialKind::Zero, k) | (k, PotentialKind::Zero) => k,
            (a, b) if a == b => a,
            _ => PotentialKind::CustomSum,
        };
        let mut out = Potential {
            id: format!("{}+{}", self.id, other.id),
            kind,
            terms: self.terms.iter().chain(&other.terms).cloned().collect(),
        };
        out.merge_terms();
        out
    }

    pub fn scaled(&self, t: f64) -> Potential {
        let mut out = Potential {
            id: format!("{t}*{}", self.id),
            kind: if t == 0.0 {
                PotentialKind::Zero
            } else {
                self.kind
            },
            terms: self
                .terms
                .iter()
                .map(|(w, term)| (w * t, term.clone()))
                .collect(),
        };
        out.merge_terms();
        out
    }

    /// `φ + c`.
    pub fn shifted(&self, c: f64) -> Potential {
        self.plus(&Potential::constant(c))
            .with_id(format!("{}+{c}", self.id))
    }

    /// `φ − ψ`.
    pub fn minus(&self, other: &Potential) -> Potential {
        self.plus(&other.scaled(-1.0))
            .with_id(format!("{}-{}", self.id, other.id))
    }

    /// Collects like terms so that, e.g., `φ − φ` has no terms left.
    fn merge_terms(&mut self) {
        let mut merged: Vec<(f64, Term)> = Vec::new();
        let mut constant = 0.0;
        for (w, term) in self.terms.drain(..) {
            match term {
                Term::Constant(c) => constant += w * c,
                Term::PerSymbol(v) => {
                    let scaled: Vec<f64> = v.iter().map(|x| w * x).collect();
                    if let Some((_, Term::PerSymbol(acc))) = merged
                        .iter_mut()
                        .find(|(_, t)| matches!(t, Term::PerSymbol(_)))
                    {
                        let len = acc.len().max(scaled.len());
                        acc.resize(len, 0.0);
                        for (a, s) in acc.iter_mut().zip(&scaled) {
                            *a += s;
                        }
                    } else {
                        merged.push((1.0, Term::PerSymbol(scaled)));
                    }
                }
                other => {
                    if let Some(entry) = merged.iter_mut().find(|(_, t)| *t == other) {
                        entry.0 += w;
                    } else {
                        merged.push((w, other));
                    }
                }
            }
        }
        merged.retain(|(w, t)| match t {
            Term::PerSymbol(v) => v.iter().any(|x| *x != 0.0),
            _ => *w != 0.0,
        });
        if constant != 0.0 {
            merged.insert(0, (1.0, Term::Constant(constant)));
        }
        self.terms = merged;
    }

    /// True when `φ(ω, ·)` is constant on every fiber.
    pub fn is_fiber_constant(&self, cocycle: &Cocycle) -> bool {
        self.terms.iter().all(|(_, t)| match t {
            Term::Constant(_) | Term::PerSymbol(_) => true,
            Term::Fourier { .. } => false,
            Term::GeometricU { .. } => cocycle.is_affine(),
            Term::Coboundary(s) => s.is_fiber_constant(cocycle),
        })
    }

    /// Lipschitz modulus in `x`, when one is known in closed form.
    pub fn lipschitz_bound(&self, cocycle: &Cocycle) -> Option<f64> {
        let lip_f = cocycle
            .maps()
            .iter()
            .map(|m| m.computed_c2_bound().forward)
            .fold(0.0, f64::max);
        self.terms.iter().try_fold(0.0, |acc, (w, t)| {
            let l = match t {
                Term::Constant(_) | Term::PerSymbol(_) => 0.0,
                Term::Fourier { frequency, .. } => {
                    TAU * frequency.iter().map(|k| k.abs() as f64).sum::<f64>()
                }
                Term::GeometricU { .. } if cocycle.is_affine() => 0.0,
                Term::GeometricU { .. } => return None,
                Term::Coboundary(s) => s.lipschitz_bound(cocycle)? * (1.0 + lip_f),
            };
            Some(acc + w.abs() * l)
        })
    }

    /// Time horizon past `n` that evaluation needs (coboundaries look ahead).
    fn lookahead(&self) -> i64 {
        self.terms
            .iter()
            .map(|(_, t)| match t {
                Term::Coboundary(s) => 1 + s.lookahead(),
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    fn needs_frame(&self) -> bool {
        self.terms.iter().any(|(_, t)| match t {
            Term::GeometricU { .. } => true,
            Term::Coboundary(s) => s.needs_frame(),
            _ => false,
        })
    }

    /// Prepares evaluation along `path` for times `0..n`. `x` fixes the
    /// unstable frame used by the geometric term on affine cocycles (where
    /// E^u does not depend on the fiber point).
    pub fn prepare<'a>(
        &self,
        cocycle: &'a Cocycle,
        path: &SymbolPath,
        x: &TorusPoint,
        n: usize,
    ) -> Result<PreparedPotential<'a>> {
        let horizon = n as i64 + self.lookahead();
        path.require(0, horizon.max(1) - 1)?;
        let frames = if self.needs_frame() && cocycle.is_affine() {
            Some(affine_unstable_factors(
                cocycle,
                path,
                x,
                horizon.max(1) as usize,
                self,
            )?)
        } else {
            None
        };
        self.prepare_inner(cocycle, path, horizon.max(1) as usize, frames.as_ref())
    }

    fn prepare_inner<'a>(
        &self,
        cocycle: &'a Cocycle,
        path: &SymbolPath,
        n: usize,
        geometric: Option<&Vec<f64>>,
    ) -> Result<PreparedPotential<'a>> {
        let mut offsets = vec![0.0; n];
        let mut xterms = Vec::new();
        for (w, term) in &self.terms {
            match term {
                Term::Constant(c) => offsets.iter_mut().for_each(|o| *o += w * c),
                Term::PerSymbol(v) => {
                    for (j, o) in offsets.iter_mut().enumerate() {
                        let sym = path.symbol(j as i64)?;
                        *o += w * v.get(sym).copied().unwrap_or(0.0);
                    }
                }
                Term::Fourier { frequency, phase } => xterms.push((
                    *w,
                    XTerm::Fourier {
                        frequency: *frequency,
                        phase: *phase,
                    },
                )),
                Term::GeometricU { unstable_dim } => match geometric {
                    Some(g) if cocycle.is_affine() => {
                        for (o, gj) in offsets.iter_mut().zip(g) {
                            *o += w * gj;
                        }
                    }
                    _ => xterms.push((
                        *w,
                        XTerm::Geometric {
                            unstable_dim: *unstable_dim,
                        },
                    )),
                },
                Term::Coboundary(sigma) => {
                    let inner = sigma.prepare_inner(cocycle, path, n + 1, geometric)?;
                    if inner.xterms.is_empty() {
                        for (j, o) in offsets.iter_mut().enumerate() {
                            *o += w * (inner.offsets[j + 1] - inner.offsets[j]);
                        }
                    } else {
                        xterms.push((*w, XTerm::Coboundary(Box::new(inner))));
                    }
                }
            }
        }
        Ok(PreparedPotential {
            cocycle,
            path: path.clone(),
            offsets,
            xterms,
        })
    }

    /// Numerical `(∫ inf_x φ dP, ∫ sup_x φ dP, ‖φ‖ = ∫ sup_x |φ| dP)` from a
    /// fiber grid, widened by the Lipschitz slack when one is known.
    pub fn fiber_bounds(
        &self,
        cocycle: &Cocycle,
        system: &DrivingSystem,
        seed: u64,
    ) -> Result<FiberBounds> {
        let dim = cocycle.dim();
        let side: usize = if dim == 2 { 48 } else { 12 };
        let samples = if system.kind() == BaseKind::DeterministicTrivial {
            1
        } else {
            64
        };
        let slack = self
            .lipschitz_bound(cocycle)
            .map(|l| l * (dim as f64).sqrt() / (2.0 * side as f64))
            .unwrap_or(0.0);
        let half = FRAME_SETTLE_STEPS as usize + self.lookahead() as usize + 4;
        let mut lo = 0.0;
        let mut hi = 0.0;
        let mut norm = 0.0;
        for s in 0..samples {
            let path = sample_path(system, half, derive_seed(seed, s as u64))?;
            let origin = TorusPoint::origin(dim);
            let prepared = self.prepare(cocycle, &path, &origin, 1)?;
            let (mut mn, mut mx, mut ab) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
            let total = side.pow(dim as u32);
            for idx in 0..total {
                let mut c = [0.0; 3];
                let mut r = idx;
                for ci in c.iter_mut().take(dim) {
                    *ci = ((r % side) as f64 + 0.5) / side as f64;
                    r /= side;
                }
                let v = prepared.eval(0, &TorusPoint::new(&c[..dim]));
                mn = mn.min(v);
                mx = mx.max(v);
                ab = ab.max(v.abs());
            }
            lo += mn - slack;
            hi += mx + slack;
            norm += ab + slack;
        }
        let k = samples as f64;
        Ok(FiberBounds {
            inf: lo / k,
            sup: hi / k,
            norm: norm / k,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberBounds {
    pub inf: f64,
    pub sup: f64,
    pub norm: f64,
}

/// `−log |det Df|E^u|` along the base orbit of an affine cocycle.
fn affine_unstable_factors(
    cocycle: &Cocycle,
    path: &SymbolPath,
    x: &TorusPoint,
    n: usize,
    potential: &Potential,
) -> Result<Vec<f64>> {
    let u = geometric_dim(potential).unwrap_or(0);
    if u == 0 {
        return Ok(vec![0.0; n]);
    }
    let mut frame = unstable_frame(cocycle, path, x, u, FRAME_SETTLE_STEPS)?;
    let mut y = *x;
    let mut out = Vec::with_capacity(n);
    for j in 0..n as i64 {
        let map = cocycle.map(path.symbol(j)?);
        let image = map.jacobian(&y) * &frame;
        let qr = image.clone().qr();
        let r = qr.r();
        let log_vol: f64 = (0..u).map(|i| r[(i, i)].abs().ln()).sum();
        out.push(-log_vol);
        frame = qr.q().columns(0, u).into_owned();
        y = map.apply(&y);
    }
    Ok(out)
}

fn geometric_dim(p: &Potential) -> Option<usize> {
    p.terms.iter().find_map(|(_, t)| match t {
        Term::GeometricU { unstable_dim } => Some(*unstable_dim),
        Term::Coboundary(s) => geometric_dim(s),
        _ => None,
    })
}

#[derive(Debug, Clone)]
enum XTerm<'a> {
    Fourier { frequency: [i64; 3], phase: f64 },
    Geometric { unstable_dim: usize },
    Coboundary(Box<PreparedPotential<'a>>),
}

/// A potential bound to one symbol path.
#[derive(Debug, Clone)]
pub struct PreparedPotential<'a> {
    cocycle: &'a Cocycle,
    path: SymbolPath,
    offsets: Vec<f64>,
    xterms: Vec<(f64, XTerm<'a>)>,
}

impl PreparedPotential<'_> {
    pub fn horizon(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_fiber_constant(&self) -> bool {
        self.xterms.is_empty()
    }

    /// `φ(θ^j ω, x)` for `0 ≤ j < horizon`.
    pub fn eval(&self, j: usize, x: &TorusPoint) -> f64 {
        let mut v = self.offsets[j];
        for (w, t) in &self.xterms {
            v += w * match t {
                XTerm::Fourier { frequency, phase } => {
                    let arg: f64 = x
                        .coords()
                        .iter()
                        .zip(frequency)
                        .map(|(c, k)| c * *k as f64)
                        .sum();
                    (TAU * arg + phase).cos()
                }
                XTerm::Geometric { unstable_dim } => {
                    geometric_at(self.cocycle, &self.path, j as i64, x, *unstable_dim)
                        .unwrap_or(f64::NAN)
                }
                XTerm::Coboundary(inner) => match self.cocycle.step(&self.path, j as i64, x) {
                    Ok(fx) => inner.eval(j + 1, &fx) - inner.eval(j, x),
                    Err(_) => f64::NAN,
                },
            };
        }
        v
    }

    /// `S_n φ(y) = Σ_{j<n} φ(θ^j ω, f^j_ω y)`.
    pub fn birkhoff(&self, y: &TorusPoint, n: usize) -> Result<f64> {
        if n > self.horizon() {
            return Err(Error::InvalidArgument(format!(
                "Birkhoff sum of length {n} past prepared horizon {}",
                self.horizon()
            )));
        }
        let mut total = 0.0;
        let mut p = *y;
        for j in 0..n {
            total += self.eval(j, &p);
            if j + 1 < n {
                p = self.cocycle.step(&self.path, j as i64, &p)?;
            }
        }
        Ok(total)
    }
}

fn geometric_at(
    cocycle: &Cocycle,
    path: &SymbolPath,
    j: i64,
    x: &TorusPoint,
    u: usize,
) -> Result<f64> {
    if u == 0 {
        return Ok(0.0);
    }
    let shifted = path.shift(j);
    let frame = unstable_frame(cocycle, &shifted, x, u, 40)?;
    let map = cocycle.map(shifted.symbol(0)?);
    let image = map.jacobian(x) * frame;
    let r = image.qr().r();
    Ok(-(0..u).map(|i| r[(i, i)].abs().ln()).sum::<f64>())
}

/// `S_n φ(ω, x) = Σ_{j=0}^{n-1} φ(θ^j ω, f^j_ω x)`.
pub fn birkhoff_sum(
    cocycle: &Cocycle,
    potential: &Potential,
    path: &SymbolPath,
    x: &TorusPoint,
    n: usize,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("Birkhoff sums need n ≥ 1".into()));
    }
    potential.prepare(cocycle, path, x, n)?.birkhoff(x, n)
}
