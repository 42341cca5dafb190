//! Random dynamical systems on T² and T³ driven by a finite-symbol shift.
//!
//! The base `(Ω, P, θ)` is a stationary symbol process (iid, irreducible Markov
//! or the one-symbol deterministic embedding). A sampled ω is a finite window
//! of symbols; θ moves the origin. Each symbol selects a fiber map
//! `x ↦ A x + p(x) mod 1` with `A` unimodular and `p` a finite trigonometric
//! sum, so derivatives and C² bounds are available in closed form.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-size coordinate storage; only the first `dim` entries are used.
pub type Coords = [f64; 3];
/// Row-major 3×3 storage for Jacobians; only the leading `dim × dim` block is used.
pub type Jac = [[f64; 3]; 3];

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a parent seed and an index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Driving system
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    Iid,
    Markov,
    DeterministicTrivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingSystem {
    kind: BaseKind,
    symbol_count: usize,
    /// iid law, or the stationary vector of the Markov chain.
    distribution: Vec<f64>,
    transition: Option<Vec<Vec<f64>>>,
    seed: u64,
}

impl DrivingSystem {
    /// The one-symbol base that embeds a deterministic map as an RDS.
    pub fn trivial(seed: u64) -> Self {
        Self {
            kind: BaseKind::DeterministicTrivial,
            symbol_count: 1,
            distribution: vec![1.0],
            transition: None,
            seed,
        }
    }

    pub fn iid(distribution: Vec<f64>, seed: u64) -> Result<Self> {
        check_probability_vector(&distribution, "iid distribution")?;
        Ok(Self {
            kind: BaseKind::Iid,
            symbol_count: distribution.len(),
            distribution,
            transition: None,
            seed,
        })
    }

    /// Markov base. When `stationary` is `None` it is solved from the
    /// transition matrix; a supplied vector must satisfy `πQ = π` to 1e-10.
    pub fn markov(
        transition: Vec<Vec<f64>>,
        stationary: Option<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        let k = transition.len();
        if k == 0 {
            return Err(Error::InvalidDistribution("empty transition matrix".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidDistribution(format!(
                    "transition row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            check_probability_vector(row, &format!("transition row {i}"))?;
        }
        if !is_irreducible(&transition) {
            return Err(Error::InvalidDistribution(
                "transition matrix is not irreducible".into(),
            ));
        }
        let pi = match stationary {
            Some(pi) => pi,
            None => solve_stationary(&transition)?,
        };
        if pi.len() != k {
            return Err(Error::InvalidDistribution(
                "stationary vector has the wrong length".into(),
            ));
        }
        check_probability_vector(&pi, "stationary vector")?;
        for j in 0..k {
            let v: f64 = (0..k).map(|i| pi[i] * transition[i][j]).sum();
            if (v - pi[j]).abs() > 1e-10 {
                return Err(Error::InvalidDistribution(format!(
                    "stationary vector violates πQ = π at entry {j} by {:e}",
                    v - pi[j]
                )));
            }
        }
        Ok(Self {
            kind: BaseKind::Markov,
            symbol_count: k,
            distribution: pi,
            transition: Some(transition),
            seed,
        })
    }

    pub fn kind(&self) -> BaseKind {
        self.kind
    }

    pub fn symbol_count(&self) -> usize {
        self.symbol_count
    }

    /// One-time marginal law of a symbol (iid law or stationary vector).
    pub fn marginal(&self) -> &[f64] {
        &self.distribution
    }

    pub fn transition(&self) -> Option<&[Vec<f64>]> {
        self.transition.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BaseKind::DeterministicTrivial => {
                if self.symbol_count != 1 {
                    return Err(Error::InvalidDistribution(
                        "deterministic-trivial base must have exactly one symbol".into(),
                    ));
                }
                Ok(())
            }
            BaseKind::Iid => check_probability_vector(&self.distribution, "iid distribution"),
            BaseKind::Markov => {
                let q = self
                    .transition
                    .clone()
                    .ok_or_else(|| Error::InvalidDistribution("missing transition".into()))?;
                Self::markov(q, Some(self.distribution.clone()), self.seed).map(|_| ())
            }
        }
    }
}

fn check_probability_vector(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution(format!("{what} is empty")));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has a negative or non-finite entry {bad}"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {s}, not 1"
        )));
    }
    Ok(())
}

fn is_irreducible(q: &[Vec<f64>]) -> bool {
    let k = q.len();
    (0..k).all(|start| {
        let mut seen = vec![false; k];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                if q[i][j] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    })
}

fn solve_stationary(q: &[Vec<f64>]) -> Result<Vec<f64>> {
    // (Qᵀ - I) π = 0 with the last equation replaced by Σ π = 1.
    let k = q.len();
    let mut m = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = q[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        m[(k - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    rhs[k - 1] = 1.0;
    let pi = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidDistribution("singular stationary system".into()))?;
    let mut pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    Ok(pi)
}

fn draw_categorical(rng: &mut ChaCha8Rng, p: &[f64]) -> u16 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as u16;
        }
    }
    // rounding: fall back to the last symbol carrying mass
    p.iter().rposition(|w| *w > 0.0).unwrap_or(0) as u16
}

// ---------------------------------------------------------------------------
// Symbol paths
// ---------------------------------------------------------------------------

/// A sampled window of ω, indices `-m..=m` around the sampling origin.
///
/// θ only moves `origin_offset`; the symbols themselves are shared and never
/// resampled, so reaching past the window is an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolPath {
    symbols: Arc<[u16]>,
    half_window: usize,
    origin_offset: i64,
}

impl SymbolPath {
    /// Builds a path from `2m + 1` symbols; the middle one sits at time 0.
    pub fn from_symbols(symbols: Vec<u16>) -> Result<Self> {
        if symbols.len() % 2 == 0 {
            return Err(Error::InvalidArgument(
                "a symbol window must have odd length 2m+1".into(),
            ));
        }
        let half_window = symbols.len() / 2;
        Ok(Self {
            symbols: symbols.into(),
            half_window,
            origin_offset: 0,
        })
    }

    /// Constant path, e.g. for the deterministic-trivial base.
    pub fn constant(symbol: u16, half_window: usize) -> Self {
        Self {
            symbols: vec![symbol; 2 * half_window + 1].into(),
            half_window,
            origin_offset: 0,
        }
    }

    pub fn half_window(&self) -> usize {
        self.half_window
    }

    pub fn origin_offset(&self) -> i64 {
        self.origin_offset
    }

    pub fn window(&self) -> &[u16] {
        &self.symbols
    }

    /// Symbol `ω_k` of the current (shifted) path.
    #[inline]
    pub fn symbol(&self, k: i64) -> Result<usize> {
        let idx = self.half_window as i64 + self.origin_offset + k;
        if idx < 0 || idx >= self.symbols.len() as i64 {
            return Err(Error::WindowExhausted {
                index: self.origin_offset + k,
                half_window: self.half_window,
            });
        }
        Ok(self.symbols[idx as usize] as usize)
    }

    /// θⁿω.
    pub fn shift(&self, n: i64) -> SymbolPath {
        Self {
            symbols: Arc::clone(&self.symbols),
            half_window: self.half_window,
            origin_offset: self.origin_offset + n,
        }
    }

    /// Largest `k` with `ω_k` available.
    pub fn forward_reach(&self) -> i64 {
        self.half_window as i64 - self.origin_offset
    }

    /// Largest `k` with `ω_{-k}` available.
    pub fn backward_reach(&self) -> i64 {
        self.half_window as i64 + self.origin_offset
    }

    /// Checks that symbols `ω_from ..= ω_to` are all inside the window.
    pub fn require(&self, from: i64, to: i64) -> Result<()> {
        self.symbol(from)?;
        self.symbol(to)?;
        Ok(())
    }
}

/// Draws a window of `2·half_window + 1` symbols from the driving law.
pub fn sample_path(system: &DrivingSystem, half_window: usize, seed: u64) -> Result<SymbolPath> {
    if half_window < 1 {
        return Err(Error::InvalidArgument(
            "half_window must be at least 1".into(),
        ));
    }
    system.validate()?;
    let len = 2 * half_window + 1;
    let mut rng = rng_from_seed(seed);
    let symbols: Vec<u16> = match system.kind {
        BaseKind::DeterministicTrivial => vec![0; len],
        BaseKind::Iid => (0..len)
            .map(|_| draw_categorical(&mut rng, &system.distribution))
            .collect(),
        BaseKind::Markov => {
            let q = system.transition.as_ref().expect("validated markov base");
            let mut out = Vec::with_capacity(len);
            let mut s = draw_categorical(&mut rng, &system.distribution);
            out.push(s);
            for _ in 1..len {
                s = draw_categorical(&mut rng, &q[s as usize]);
                out.push(s);
            }
            out
        }
    };
    SymbolPath::from_symbols(symbols)
}

// ---------------------------------------------------------------------------
// Torus points
// ---------------------------------------------------------------------------

#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Representative of `v` in `[-1/2, 1/2)`.
#[inline]
pub fn wrap_centered(v: f64) -> f64 {
    v - (v + 0.5).floor()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Coords,
    dim: usize,
}

impl TorusPoint {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            (2..=3).contains(&coords.len()),
            "torus dimension must be 2 or 3"
        );
        let mut c = [0.0; 3];
        for (slot, v) in c.iter_mut().zip(coords) {
            *slot = wrap_unit(*v);
        }
        Self {
            coords: c,
            dim: coords.len(),
        }
    }

    pub(crate) fn from_lifted(lifted: &Coords, dim: usize) -> Self {
        let mut c = [0.0; 3];
        for i in 0..dim {
            c[i] = wrap_unit(lifted[i]);
        }
        Self { coords: c, dim }
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(&vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub(crate) fn raw(&self) -> &Coords {
        &self.coords
    }

    /// Displacement `other - self` with each coordinate wrapped to `[-1/2, 1/2)`.
    pub fn displacement_to(&self, other: &TorusPoint) -> Coords {
        let mut d = [0.0; 3];
        for (i, slot) in d.iter_mut().enumerate().take(self.dim) {
            *slot = wrap_centered(other.coords[i] - self.coords[i]);
        }
        d
    }

    /// Max-over-coordinates circle distance.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.displacement_to(other)
            .iter()
            .take(self.dim)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

// ---------------------------------------------------------------------------
// Fiber maps
// ---------------------------------------------------------------------------

/// One term `amplitude · sin(2π⟨frequency, x⟩ + phase)` added to coordinate
/// `component`. A zero frequency gives a constant translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTerm {
    pub component: usize,
    pub amplitude: f64,
    pub frequency: [i64; 3],
    pub phase: f64,
}

impl PerturbationTerm {
    pub fn translation(component: usize, shift: f64) -> Self {
        Self {
            component,
            amplitude: shift,
            frequency: [0; 3],
            phase: std::f64::consts::FRAC_PI_2,
        }
    }

    fn is_constant(&self) -> bool {
        self.amplitude == 0.0 || self.frequency.iter().all(|k| *k == 0)
    }

    #[inline]
    fn argument(&self, x: &Coords) -> f64 {
        TAU * (self.frequency[0] as f64 * x[0]
            + self.frequency[1] as f64 * x[1]
            + self.frequency[2] as f64 * x[2])
            + self.phase
    }

    fn l1_frequency(&self) -> f64 {
        self.frequency.iter().map(|k| k.unsigned_abs() as f64).sum()
    }
}

/// Precomputed `|f|_{C²}` bounds for a map and its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C2Bound {
    pub forward: f64,
    pub backward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDescriptor {
    dim: usize,
    matrix: [[i64; 3]; 3],
    inverse: [[i64; 3]; 3],
    perturbation: Vec<PerturbationTerm>,
    c2_bound: Option<C2Bound>,
}

fn int_det(m: &[[i64; 3]; 3], dim: usize) -> i64 {
    match dim {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

fn int_inverse(m: &[[i64; 3]; 3], dim: usize, det: i64) -> [[i64; 3]; 3] {
    let mut inv = [[0i64; 3]; 3];
    if dim == 2 {
        inv[0][0] = m[1][1] * det;
        inv[0][1] = -m[0][1] * det;
        inv[1][0] = -m[1][0] * det;
        inv[1][1] = m[0][0] * det;
    } else {
        // adjugate / det, det = ±1 so dividing equals multiplying
        for i in 0..3 {
            for j in 0..3 {
                let (r0, r1) = match j {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                let (c0, c1) = match i {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                inv[i][j] = sign * minor * det;
            }
        }
    }
    inv
}

fn inf_norm_int(m: &[[i64; 3]; 3], dim: usize) -> f64 {
    (0..dim)
        .map(|i| (0..dim).map(|j| m[i][j].unsigned_abs() as f64).sum::<f64>())
        .fold(0.0, f64::max)
}

impl MapDescriptor {
    /// Builds `x ↦ A x + p(x) mod 1` and computes its C² bounds.
    ///
    /// Rejects non-unimodular matrices and perturbations large enough that
    /// the Jacobian determinant approaches zero on a verification grid or that
    /// the inverse can no longer be solved by contraction.
    pub fn new(matrix: Vec<Vec<i64>>, perturbation: Vec<PerturbationTerm>) -> Result<Self> {
        let dim = matrix.len();
        if !(2..=3).contains(&dim) || matrix.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMap(format!(
                "matrix must be 2×2 or 3×3, got {dim} rows"
            )));
        }
        let mut m = [[0i64; 3]; 3];
        for (i, row) in matrix.iter().enumerate() {
            m[i][..dim].copy_from_slice(row);
        }
        let det = int_det(&m, dim);
        if det.abs() != 1 {
            return Err(Error::InvalidMap(format!(
                "matrix determinant is {det}; a torus diffeomorphism needs |det| = 1"
            )));
        }
        for t in &perturbation {
            if t.component >= dim || t.frequency[dim..].iter().any(|k| *k != 0) {
                return Err(Error::InvalidMap(
                    "perturbation term refers to a coordinate outside the torus".into(),
                ));
            }
            if !t.amplitude.is_finite() || !t.phase.is_finite() {
                return Err(Error::InvalidMap("non-finite perturbation term".into()));
            }
        }
        let inverse = int_inverse(&m, dim, det);
        let mut map = Self {
            dim,
            matrix: m,
            inverse,
            perturbation,
            c2_bound: None,
        };
        map.check_diffeomorphism()?;
        map.c2_bound = Some(map.computed_c2_bound());
        Ok(map)
    }

    pub fn linear(matrix: Vec<Vec<i64>>) -> Result<Self> {
        Self::new(matrix, Vec::new())
    }

    pub fn with_c2_bound(mut self, bound: C2Bound) -> Self {
        self.c2_bound = Some(bound);
        self
    }

    pub fn without_c2_bound(mut self) -> Self {
        self.c2_bound = None;
        self
    }

    pub fn c2_bound(&self) -> Option<C2Bound> {
        self.c2_bound
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> Vec<Vec<i64>> {
        (0..self.dim)
            .map(|i| self.matrix[i][..self.dim].to_vec())
            .collect()
    }

    pub fn matrix_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.matrix[i][j] as f64)
    }

    pub fn perturbation(&self) -> &[PerturbationTerm] {
        &self.perturbation
    }

    /// True when the Jacobian is the constant integer matrix (translations
    /// allowed).
    pub fn is_affine(&self) -> bool {
        self.perturbation.iter().all(PerturbationTerm::is_constant)
    }

    fn dp_norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                self.perturbation
                    .iter()
                    .filter(|t| t.component == i && !t.is_constant())
                    .map(|t| t.amplitude.abs() * TAU * t.l1_frequency())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn d2p_norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                self.perturbation
                    .iter()
                    .filter(|t| t.component == i && !t.is_constant())
                    .map(|t| t.amplitude.abs() * (TAU * t.l1_frequency()).powi(2))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Sup-norm bounds on first and second derivatives of `f` and `f⁻¹`
    /// (∞-operator norms, trigonometric coefficients bounded termwise).
    pub fn computed_c2_bound(&self) -> C2Bound {
        let a = inf_norm_int(&self.matrix, self.dim);
        let ainv = inf_norm_int(&self.inverse, self.dim);
        let dp = self.dp_norm_bound();
        let d2p = self.d2p_norm_bound();
        let forward = (a + dp).max(d2p);
        let dinv = ainv / (1.0 - ainv * dp);
        let backward = dinv.max(dinv.powi(3) * d2p);
        C2Bound { forward, backward }
    }

    fn check_diffeomorphism(&self) -> Result<()> {
        if self.is_affine() {
            return Ok(());
        }
        let ainv = inf_norm_int(&self.inverse, self.dim);
        let contraction = ainv * self.dp_norm_bound();
        if contraction >= 0.9 {
            return Err(Error::InvalidMap(format!(
                "perturbation too large: |A⁻¹|·|Dp| = {contraction:.3} (needs < 0.9)"
            )));
        }
        let steps = if self.dim == 2 { 48 } else { 16 };
        let mut min_det = f64::INFINITY;
        let mut idx = [0usize; 3];
        loop {
            let mut x = [0.0; 3];
            for i in 0..self.dim {
                x[i] = idx[i] as f64 / steps as f64;
            }
            let j = self.jacobian_raw(&x);
            min_det = min_det.min(jac_det(&j, self.dim).abs());
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < steps {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == self.dim {
                    break;
                }
            }
            if k == self.dim {
                break;
            }
        }
        if min_det < 0.1 {
            return Err(Error::InvalidMap(format!(
                "Jacobian determinant drops to {min_det:.3e} on the verification grid"
            )));
        }
        Ok(())
    }

    /// Lifted map `X ↦ A X + p(X)` on ℝᵈ.
    #[inline]
    pub(crate) fn apply_lifted(&self, x: &Coords) -> Coords {
        let mut y = [0.0; 3];
        for i in 0..self.dim {
            let mut s = 0.0;
            for j in 0..self.dim {
                s += self.matrix[i][j] as f64 * x[j];
            }
            y[i] = s;
        }
        for t in &self.perturbation {
            y[t.component] += t.amplitude * t.argument(x).sin();
        }
        y
    }

    pub fn apply(&self, x: &TorusPoint) -> TorusPoint {
        TorusPoint::from_lifted(&self.apply_lifted(x.raw()), self.dim)
    }

    #[inline]
    pub(crate) fn jacobian_raw(&self, x: &Coords) -> Jac {
        let mut j = [[0.0; 3]; 3];
        for (r, row) in j.iter_mut().enumerate().take(self.dim) {
            for c in 0..self.dim {
                row[c] = self.matrix[r][c] as f64;
            }
        }
        for t in &self.perturbation {
            if t.is_constant() {
                continue;
            }
            let c = t.amplitude * t.argument(x).cos() * TAU;
            for (col, k) in t.frequency.iter().enumerate().take(self.dim) {
                j[t.component][col] += c * *k as f64;
            }
        }
        j
    }

    pub fn jacobian(&self, x: &TorusPoint) -> DMatrix<f64> {
        jac_to_dmatrix(&self.jacobian_raw(x.raw()), self.dim)
    }

    /// Solves `A y + p(y) ≡ x (mod 1)` by contraction followed by Newton
    /// polishing.
    pub fn apply_inverse(&self, x: &TorusPoint) -> Result<TorusPoint> {
        let dim = self.dim;
        let mut y = [0.0; 3];
        let lin = |v: &Coords| -> Coords {
            let mut out = [0.0; 3];
            for i in 0..dim {
                let mut s = 0.0;
                for j in 0..dim {
                    s += self.inverse[i][j] as f64 * v[j];
                }
                out[i] = s;
            }
            out
        };
        if self.perturbation.is_empty() {
            let yl = lin(x.raw());
            return Ok(TorusPoint::from_lifted(&yl, dim));
        }
        // y ← A⁻¹(x − p(y)) mod 1
        let pert = |v: &Coords| -> Coords {
            let mut out = [0.0; 3];
            for t in &self.perturbation {
                out[t.component] += t.amplitude * t.argument(v).sin();
            }
            out
        };
        let mut rhs = *x.raw();
        let p0 = pert(&y);
        for i in 0..dim {
            rhs[i] -= p0[i];
        }
        y = lin(&rhs);
        for i in 0..dim {
            y[i] = wrap_unit(y[i]);
        }
        for _ in 0..200 {
            let p = pert(&y);
            let mut r = *x.raw();
            for i in 0..dim {
                r[i] -= p[i];
            }
            let mut ny = lin(&r);
            let mut moved: f64 = 0.0;
            for i in 0..dim {
                ny[i] = wrap_unit(ny[i]);
                moved = moved.max(wrap_centered(ny[i] - y[i]).abs());
            }
            y = ny;
            if moved < 1e-13 {
                break;
            }
        }
        // Newton polish on the wrapped residual
        for _ in 0..4 {
            let fy = self.apply_lifted(&y);
            let mut r = [0.0; 3];
            for i in 0..dim {
                r[i] = wrap_centered(fy[i] - x.raw()[i]);
            }
            let j = jac_to_dmatrix(&self.jacobian_raw(&y), dim);
            let rv = nalgebra::DVector::from_iterator(dim, r.iter().take(dim).copied());
            let step = j.lu().solve(&rv).ok_or_else(|| {
                Error::DegenerateJacobian("singular Jacobian while inverting".into())
            })?;
            for i in 0..dim {
                y[i] -= step[i];
            }
        }
        let check = self.apply(&TorusPoint::from_lifted(&y, dim));
        let err = check.distance(x);
        if err > 1e-11 {
            return Err(Error::DegenerateJacobian(format!(
                "inverse solve did not converge (residual {err:e})"
            )));
        }
        Ok(TorusPoint::from_lifted(&y, dim))
    }
}

pub(crate) fn jac_det(j: &Jac, dim: usize) -> f64 {
    match dim {
        2 => j[0][0] * j[1][1] - j[0][1] * j[1][0],
        _ => {
            j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
        }
    }
}

pub(crate) fn jac_to_dmatrix(j: &Jac, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |r, c| j[r][c])
}

#[inline]
pub(crate) fn jac_apply(j: &Jac, v: &Coords, dim: usize) -> Coords {
    let mut out = [0.0; 3];
    for r in 0..dim {
        let mut s = 0.0;
        for c in 0..dim {
            s += j[r][c] * v[c];
        }
        out[r] = s;
    }
    out
}

// ---------------------------------------------------------------------------
// Cocycle
// ---------------------------------------------------------------------------

/// One fiber map per symbol of the driving system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cocycle {
    dim: usize,
    maps: Vec<MapDescriptor>,
}

impl Cocycle {
    pub fn new(maps: Vec<MapDescriptor>) -> Result<Self> {
        let dim = maps
            .first()
            .map(MapDescriptor::dim)
            .ok_or_else(|| Error::InvalidMap("a cocycle needs at least one map".into()))?;
        if maps.iter().any(|m| m.dim() != dim) {
            return Err(Error::InvalidMap("maps have different dimensions".into()));
        }
        Ok(Self { dim, maps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn maps(&self) -> &[MapDescriptor] {
        &self.maps
    }

    pub fn map(&self, symbol: usize) -> &MapDescriptor {
        &self.maps[symbol]
    }

    pub fn is_affine(&self) -> bool {
        self.maps.iter().all(MapDescriptor::is_affine)
    }

    /// Checks that the driving system only emits symbols this cocycle knows.
    pub fn check_compatible(&self, system: &DrivingSystem) -> Result<()> {
        if system.symbol_count() > self.maps.len() {
            return Err(Error::InvalidMap(format!(
                "driving system has {} symbols but only {} maps are defined",
                system.symbol_count(),
                self.maps.len()
            )));
        }
        Ok(())
    }

    /// Checks that every symbol in the sampled window has a map.
    pub fn check_path(&self, path: &SymbolPath) -> Result<()> {
        match path.window().iter().max() {
            Some(&m) if m as usize >= self.maps.len() => Err(Error::InvalidMap(format!(
                "path uses symbol {m} but only {} maps are defined",
                self.maps.len()
            ))),
            _ => Ok(()),
        }
    }

    /// `f_{θ^k ω}` applied to `x`.
    #[inline]
    pub fn step(&self, path: &SymbolPath, k: i64, x: &TorusPoint) -> Result<TorusPoint> {
        Ok(self.maps[path.symbol(k)?].apply(x))
    }

    /// `f^n_ω x`: forward composition for `n > 0`, inverse maps along
    /// `θ^{-1}ω, …, θ^{n}ω` for `n < 0`.
    pub fn compose(&self, path: &SymbolPath, n: i64, x: &TorusPoint) -> Result<TorusPoint> {
        let mut y = *x;
        if n >= 0 {
            for j in 0..n {
                y = self.maps[path.symbol(j)?].apply(&y);
            }
        } else {
            for j in 1..=(-n) {
                y = self.maps[path.symbol(-j)?].apply_inverse(&y)?;
            }
        }
        Ok(y)
    }

    /// `D_x f^n_ω` as the ordered product of one-step Jacobians.
    pub fn derivative(&self, path: &SymbolPath, n: i64, x: &TorusPoint) -> Result<DMatrix<f64>> {
        let d = self.dim;
        let mut acc = DMatrix::<f64>::identity(d, d);
        let mut y = *x;
        if n >= 0 {
            for j in 0..n {
                let map = &self.maps[path.symbol(j)?];
                acc = map.jacobian(&y) * acc;
                y = map.apply(&y);
            }
        } else {
            for j in 1..=(-n) {
                let map = &self.maps[path.symbol(-j)?];
                let prev = map.apply_inverse(&y)?;
                let jinv = map.jacobian(&prev).try_inverse().ok_or_else(|| {
                    Error::DegenerateJacobian("singular one-step Jacobian".into())
                })?;
                acc = jinv * acc;
                y = prev;
            }
        }
        Ok(acc)
    }
}

pub fn compose(cocycle: &Cocycle, path: &SymbolPath, n: i64, x: &TorusPoint) -> Result<TorusPoint> {
    cocycle.compose(path, n, x)
}

pub fn derivative(
    cocycle: &Cocycle,
    path: &SymbolPath,
    n: i64,
    x: &TorusPoint,
) -> Result<DMatrix<f64>> {
    cocycle.derivative(path, n, x)
}

/// A point `(ω, x)` of the skew product.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewState {
    pub path: SymbolPath,
    pub point: TorusPoint,
}

impl SkewState {
    pub fn new(path: SymbolPath, point: TorusPoint) -> Self {
        Self { path, point }
    }

    /// Θ(ω, x) = (θω, f_ω x).
    pub fn forward(&self, cocycle: &Cocycle) -> Result<SkewState> {
        let point = cocycle.step(&self.path, 0, &self.point)?;
        Ok(Self {
            path: self.path.shift(1),
            point,
        })
    }

    /// Θ⁻¹(ω, x) = (θ⁻¹ω, f_{θ⁻¹ω}⁻¹ x).
    pub fn backward(&self, cocycle: &Cocycle) -> Result<SkewState> {
        let map = cocycle.map(self.path.symbol(-1)?);
        Ok(Self {
            path: self.path.shift(-1),
            point: map.apply_inverse(&self.point)?,
        })
    }
}

/// Monte-Carlo estimate of `∫ log⁺|F(1,ω)|_{C²} + log⁺|F(-1,ω)|_{C²} dP`.
///
/// Only the time-0 symbol matters, so ω is drawn from the one-time marginal.
pub fn integrability_check(
    system: &DrivingSystem,
    cocycle: &Cocycle,
    samples: usize,
) -> Result<f64> {
    if samples < 1 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    system.validate()?;
    cocycle.check_compatible(system)?;
    let mut rng = rng_from_seed(system.seed());
    let logp = |v: f64| v.ln().max(0.0);
    let mut total = 0.0;
    for _ in 0..samples {
        let s = draw_categorical(&mut rng, system.marginal()) as usize;
        let b = cocycle.map(s).c2_bound().ok_or(Error::MissingC2Bound(s))?;
        total += logp(b.forward) + logp(b.backward);
    }
    let est = total / samples as f64;
    if !est.is_finite() {
        return Err(Error::Domain("integrability estimate is not finite".into()));
    }
    Ok(est)
}

// ---------------------------------------------------------------------------
// Built-in example systems
// ---------------------------------------------------------------------------

/// The cat map matrix `[[2,1],[1,1]]`.
pub fn cat_matrix() -> Vec<Vec<i64>> {
    vec![vec![2, 1], vec![1, 1]]
}

/// `[[2,1],[1,1]]²`.
pub fn cat_squared_matrix() -> Vec<Vec<i64>> {
    vec![vec![5, 3], vec![3, 2]]
}

/// `diag(cat, 1)` on T³.
pub fn cat_times_circle_matrix() -> Vec<Vec<i64>> {
    vec![vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]
}

/// Larger eigenvalue of the cat matrix, `(3 + √5)/2`.
pub fn cat_lambda() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}

pub fn cat_cocycle() -> Cocycle {
    Cocycle::new(vec![MapDescriptor::linear(cat_matrix()).expect("cat map")]).expect("cocycle")
}

/// iid switching between `A` and `A²`.
pub fn cat_switching_cocycle() -> Cocycle {
    Cocycle::new(vec![
        MapDescriptor::linear(cat_matrix()).expect("cat map"),
        MapDescriptor::linear(cat_squared_matrix()).expect("cat squared"),
    ])
    .expect("cocycle")
}

/// Cat map on the first two coordinates times a circle rotation whose angle
/// depends on the symbol.
pub fn cat_times_rotation_cocycle(rotations: &[f64]) -> Cocycle {
    Cocycle::new(
        rotations
            .iter()
            .map(|r| {
                MapDescriptor::new(
                    cat_times_circle_matrix(),
                    vec![PerturbationTerm::translation(2, *r)],
                )
                .expect("cat × rotation")
            })
            .collect(),
    )
    .expect("cocycle")
}
