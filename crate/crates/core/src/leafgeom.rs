//! Local unstable disks `W^u(ω,x,δ)`, the leaf metric `d^u`, the dynamical
//! metric `d^u_{ω,n}` and leaf volume.
//!
//! Affine cocycles have flat leaves, so the chart `s ↦ x + Σ sᵢ vᵢ` is exact
//! and isometric. For perturbed maps (u = 1 only) the leaf is obtained by
//! iterating the graph transform: segments tangent to E^u at `Θ^{-K}(ω,x)` are
//! pushed forward `K` steps and the resulting curve, written as a graph over
//! the E^u line at `x`, is compared between consecutive `K`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oseledets::{unstable_frame, OseledetsReport};
use crate::rds::{jac_apply, wrap_unit, Cocycle, Coords, SkewState, TorusPoint};

pub const MAX_RADIUS: f64 = 0.25;
const GRAPH_TOL: f64 = 1e-9;
const GRAPH_MAX_ITER: usize = 200;
/// Tolerance for deciding that a point lies on a chart.
pub const ON_LEAF_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    LinearExact,
    GraphTransform,
}

#[derive(Debug, Clone)]
enum Chart {
    /// `base + Σ sᵢ vᵢ` with orthonormal `vᵢ`.
    Affine,
    /// Arc-length parametrised curve, lifted coordinates (base at param 0
    /// coincides with the base point's coordinates).
    Polyline {
        params: Vec<f64>,
        points: Vec<Coords>,
    },
}

#[derive(Debug, Clone)]
pub struct UnstableDisk {
    base: SkewState,
    radius: f64,
    frame: Vec<Coords>,
    construction: Construction,
    chart: Chart,
    /// Graph-transform iterations used (0 for the exact chart).
    pub iterations: usize,
}

fn dot(a: &Coords, b: &Coords) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &Coords) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &Coords, b: &Coords) -> Coords {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn axpy(a: f64, x: &Coords, y: &Coords) -> Coords {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
}

fn frame_from_columns(m: &nalgebra::DMatrix<f64>) -> Vec<Coords> {
    (0..m.ncols())
        .map(|c| {
            let mut v = [0.0; 3];
            for r in 0..m.nrows() {
                v[r] = m[(r, c)];
            }
            v
        })
        .collect()
}

impl UnstableDisk {
    pub fn base(&self) -> &SkewState {
        &self.base
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn unstable_dim(&self) -> usize {
        self.frame.len()
    }

    pub fn frame(&self) -> &[Coords] {
        &self.frame
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.chart, Chart::Affine)
    }

    fn dim(&self) -> usize {
        self.base.point.dim()
    }

    /// Lifted chart point; the base maps to its own coordinates.
    pub(crate) fn chart_lifted(&self, s: &[f64]) -> Coords {
        let b = *self.base.point.raw();
        match &self.chart {
            Chart::Affine => {
                let mut p = b;
                for (si, v) in s.iter().zip(&self.frame) {
                    p = axpy(*si, v, &p);
                }
                p
            }
            Chart::Polyline { params, points } => {
                let t = s[0];
                let k = match params.binary_search_by(|p| p.total_cmp(&t)) {
                    Ok(i) => return points[i],
                    Err(i) => i.clamp(1, params.len() - 1),
                };
                let (t0, t1) = (params[k - 1], params[k]);
                let w = (t - t0) / (t1 - t0);
                let (p0, p1) = (points[k - 1], points[k]);
                [
                    p0[0] + w * (p1[0] - p0[0]),
                    p0[1] + w * (p1[1] - p0[1]),
                    p0[2] + w * (p1[2] - p0[2]),
                ]
            }
        }
    }

    /// Chart from the parameter box `[-δ, δ]^u` to the torus.
    pub fn chart(&self, s: &[f64]) -> TorusPoint {
        assert_eq!(s.len(), self.unstable_dim(), "chart parameter dimension");
        TorusPoint::from_lifted(&self.chart_lifted(s), self.dim())
    }

    /// Chart parameters of a point on the disk, or `PointOffLeaf`.
    pub fn locate(&self, y: &TorusPoint) -> Result<Vec<f64>> {
        let d = self.base.point.displacement_to(y);
        match &self.chart {
            Chart::Affine => {
                let s: Vec<f64> = self.frame.iter().map(|v| dot(&d, v)).collect();
                let mut r = d;
                for (si, v) in s.iter().zip(&self.frame) {
                    r = axpy(-si, v, &r);
                }
                let off = norm(&r);
                if off > ON_LEAF_TOL {
                    return Err(Error::PointOffLeaf(off));
                }
                Ok(s)
            }
            Chart::Polyline { params, points } => {
                let b = self.base.point.raw();
                let target = [b[0] + d[0], b[1] + d[1], b[2] + d[2]];
                let mut best = (f64::INFINITY, 0.0);
                for k in 1..points.len() {
                    let seg = sub(&points[k], &points[k - 1]);
                    let len2 = dot(&seg, &seg);
                    let w = if len2 > 0.0 {
                        (dot(&sub(&target, &points[k - 1]), &seg) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let p = axpy(w, &seg, &points[k - 1]);
                    let dist = norm(&sub(&target, &p));
                    if dist < best.0 {
                        best = (dist, params[k - 1] + w * (params[k] - params[k - 1]));
                    }
                }
                if best.0 > ON_LEAF_TOL {
                    return Err(Error::PointOffLeaf(best.0));
                }
                Ok(vec![best.1])
            }
        }
    }

    /// Sampled polyline for plotting: `(parameter, coordinates)` rows.
    pub fn sampled_polyline(&self, samples: usize) -> Vec<(f64, Vec<f64>)> {
        assert_eq!(self.unstable_dim(), 1, "polyline dumps are for 1-d leaves");
        let samples = samples.max(2);
        (0..samples)
            .map(|i| {
                let s = -self.radius + 2.0 * self.radius * i as f64 / (samples - 1) as f64;
                (s, self.chart(&[s]).coords().to_vec())
            })
            .collect()
    }
}

/// Local unstable disk of radius `δ` at `state`, exact for affine cocycles
/// and by graph transform otherwise.
pub fn unstable_disk(
    cocycle: &Cocycle,
    state: &SkewState,
    delta: f64,
    report: &OseledetsReport,
) -> Result<UnstableDisk> {
    let construction = if cocycle.is_affine() {
        Construction::LinearExact
    } else {
        Construction::GraphTransform
    };
    unstable_disk_with(cocycle, state, delta, report, construction)
}

pub fn unstable_disk_with(
    cocycle: &Cocycle,
    state: &SkewState,
    delta: f64,
    report: &OseledetsReport,
    construction: Construction,
) -> Result<UnstableDisk> {
    let u = report.unstable_dim();
    if u == 0 {
        return Err(Error::TrivialLeaf);
    }
    if !(delta > 0.0 && delta <= MAX_RADIUS) {
        return Err(Error::InvalidArgument(format!(
            "disk radius {delta} outside (0, {MAX_RADIUS}]"
        )));
    }
    if u > 2 {
        return Err(Error::Unsupported(format!("unstable dimension {u} > 2")));
    }
    let dim = cocycle.dim();
    let frame: Vec<Coords> = frame_from_columns(&report.eu_matrix(dim));
    match construction {
        Construction::LinearExact => {
            if !cocycle.is_affine() {
                return Err(Error::Unsupported(
                    "exact linear leaves need an affine cocycle".into(),
                ));
            }
            Ok(UnstableDisk {
                base: state.clone(),
                radius: delta,
                frame,
                construction,
                chart: Chart::Affine,
                iterations: 0,
            })
        }
        Construction::GraphTransform => {
            if u != 1 {
                return Err(Error::Unsupported(
                    "graph transform is implemented for one-dimensional leaves".into(),
                ));
            }
            graph_transform_disk(cocycle, state, delta, frame[0])
        }
    }
}

/// Pushes a short E^u segment at `Θ^{-k}(ω,x)` forward `k` steps and returns
/// the image as an arc-length polyline through `x` covering `[-δ, δ]`.
fn pushed_leaf(
    cocycle: &Cocycle,
    state: &SkewState,
    delta: f64,
    k: i64,
) -> Result<(Vec<f64>, Vec<Coords>)> {
    let dim = cocycle.dim();
    let path = &state.path;
    let x = state.point;
    let start = cocycle.compose(path, -k, &x)?;
    let back_path = path.shift(-k);
    let v0m = unstable_frame(cocycle, &back_path, &start, 1, 60)?;
    let mut v0 = [0.0; 3];
    for r in 0..dim {
        v0[r] = v0m[(r, 0)];
    }
    // tangent stretch along the orbit fixes the initial segment length
    let mut v = v0;
    let mut y = start;
    for j in -k..0 {
        let map = cocycle.map(path.symbol(j)?);
        v = jac_apply(&map.jacobian_raw(y.raw()), &v, dim);
        y = map.apply(&y);
    }
    let stretch = norm(&v);
    let r = 1.6 * delta / stretch;

    let push = |s: f64| -> Result<Coords> {
        let mut p = axpy(s, &v0, start.raw());
        for j in -k..0 {
            p = cocycle.map(path.symbol(j)?).apply_lifted(&p);
        }
        Ok(p)
    };
    let center = push(0.0)?;
    // integer shift so the image of the centre sits at x's coordinates
    let mut shift = [0.0; 3];
    for i in 0..dim {
        shift[i] = (x.raw()[i] - center[i]).round();
    }
    let max_gap = delta / 1500.0;
    let mut ss: Vec<f64> = (-200i32..=200).map(|i| r * f64::from(i) / 200.0).collect();
    let mut pts: Vec<Coords> = ss.iter().map(|s| push(*s)).collect::<Result<_>>()?;
    for _ in 0..30 {
        let mut new_ss = Vec::with_capacity(ss.len() * 2);
        let mut new_pts = Vec::with_capacity(ss.len() * 2);
        let mut refined = false;
        for i in 0..ss.len() {
            if i > 0 && norm(&sub(&pts[i], &pts[i - 1])) > max_gap {
                let mid = 0.5 * (ss[i - 1] + ss[i]);
                new_ss.push(mid);
                new_pts.push(push(mid)?);
                refined = true;
            }
            new_ss.push(ss[i]);
            new_pts.push(pts[i]);
        }
        ss = new_ss;
        pts = new_pts;
        if !refined {
            break;
        }
    }
    for p in pts.iter_mut() {
        for i in 0..dim {
            p[i] += shift[i];
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::GraphTransformDiverged(
                "non-finite leaf point".into(),
            ));
        }
    }
    let zero = ss
        .iter()
        .position(|s| *s == 0.0)
        .expect("grid contains the centre");
    let mut params = vec![0.0; pts.len()];
    for i in zero + 1..pts.len() {
        params[i] = params[i - 1] + norm(&sub(&pts[i], &pts[i - 1]));
    }
    for i in (0..zero).rev() {
        params[i] = params[i + 1] - norm(&sub(&pts[i + 1], &pts[i]));
    }
    if params[0] > -delta || params[params.len() - 1] < delta {
        return Err(Error::GraphTransformDiverged(
            "pushed segment does not cover the disk".into(),
        ));
    }
    Ok((params, pts))
}

/// Transversal offset of a polyline, as a function of the coordinate along `v`.
fn graph_over(pts: &[Coords], base: &Coords, v: &Coords) -> Vec<(f64, Coords)> {
    pts.iter()
        .map(|p| {
            let d = sub(p, base);
            let s = dot(&d, v);
            (s, axpy(-s, v, &d))
        })
        .collect()
}

fn graph_distance(a: &[(f64, Coords)], b: &[(f64, Coords)], delta: f64) -> f64 {
    let interp = |g: &[(f64, Coords)], s: f64| -> Coords {
        let k = g.partition_point(|(t, _)| *t < s).clamp(1, g.len() - 1);
        let (t0, h0) = g[k - 1];
        let (t1, h1) = g[k];
        let w = if t1 > t0 { (s - t0) / (t1 - t0) } else { 0.0 };
        [
            h0[0] + w * (h1[0] - h0[0]),
            h0[1] + w * (h1[1] - h0[1]),
            h0[2] + w * (h1[2] - h0[2]),
        ]
    };
    (0..=200)
        .map(|i| {
            let s = -delta + 2.0 * delta * i as f64 / 200.0;
            norm(&sub(&interp(a, s), &interp(b, s)))
        })
        .fold(0.0, f64::max)
}

fn graph_transform_disk(
    cocycle: &Cocycle,
    state: &SkewState,
    delta: f64,
    v: Coords,
) -> Result<UnstableDisk> {
    let base = *state.point.raw();
    let mut prev: Option<Vec<(f64, Coords)>> = None;
    let mut last = None;
    let mut iterations = 0;
    for k in 1..=GRAPH_MAX_ITER as i64 {
        let (params, pts) = pushed_leaf(cocycle, state, delta, k)?;
        let mut g = graph_over(&pts, &base, &v);
        g.sort_by(|a, b| a.0.total_cmp(&b.0));
        iterations = k as usize;
        let moved = prev.as_ref().map(|p| graph_distance(p, &g, delta));
        last = Some((params, pts));
        match moved {
            Some(m) if !m.is_finite() => {
                return Err(Error::GraphTransformDiverged(
                    "graph distance is not finite".into(),
                ))
            }
            Some(m) if m < GRAPH_TOL => break,
            Some(m) if k as usize == GRAPH_MAX_ITER => {
                return Err(Error::GraphTransformDiverged(format!(
                    "graph still moving by {m:e} after {GRAPH_MAX_ITER} iterations"
                )))
            }
            _ => {}
        }
        prev = Some(g);
    }
    let (params, points) = last.expect("at least one iteration");
    Ok(UnstableDisk {
        base: state.clone(),
        radius: delta,
        frame: vec![v],
        construction: Construction::GraphTransform,
        chart: Chart::Polyline { params, points },
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Intrinsic distance between two disk points given by chart parameters.
pub fn leaf_distance_params(_disk: &UnstableDisk, s1: &[f64], s2: &[f64]) -> f64 {
    s1.iter()
        .zip(s2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Arc length along the leaf between two points lying on the disk.
pub fn leaf_distance(disk: &UnstableDisk, y1: &TorusPoint, y2: &TorusPoint) -> Result<f64> {
    let s1 = disk.locate(y1)?;
    let s2 = disk.locate(y2)?;
    Ok(leaf_distance_params(disk, &s1, &s2))
}

/// Subdivision used for image arc lengths on curved leaves.
const ARC_SUBDIVISION: usize = 256;

/// Leaf distances between `f^j y1` and `f^j y2` for `j = 0..n`.
pub fn image_distances_params(
    cocycle: &Cocycle,
    disk: &UnstableDisk,
    n: usize,
    s1: &[f64],
    s2: &[f64],
) -> Result<Vec<f64>> {
    let dim = cocycle.dim();
    let path = &disk.base.path;
    path.require(0, n as i64 - 1)?;
    if disk.is_affine() {
        let mut delta = [0.0; 3];
        for ((a, b), v) in s1.iter().zip(s2).zip(&disk.frame) {
            delta = axpy(b - a, v, &delta);
        }
        let mut out = Vec::with_capacity(n);
        let mut y = disk.base.point;
        for j in 0..n as i64 {
            out.push(if j == 0 {
                leaf_distance_params(disk, s1, s2)
            } else {
                norm(&delta)
            });
            if j + 1 < n as i64 {
                let map = cocycle.map(path.symbol(j)?);
                delta = jac_apply(&map.jacobian_raw(y.raw()), &delta, dim);
                y = map.apply(&y);
            }
        }
        return Ok(out);
    }
    let (a, b) = (s1[0], s2[0]);
    let mut pts: Vec<Coords> = (0..=ARC_SUBDIVISION)
        .map(|i| disk.chart_lifted(&[a + (b - a) * i as f64 / ARC_SUBDIVISION as f64]))
        .collect();
    let mut out = Vec::with_capacity(n);
    for j in 0..n as i64 {
        out.push(pts.windows(2).map(|w| norm(&sub(&w[1], &w[0]))).sum());
        if j + 1 < n as i64 {
            let map = cocycle.map(path.symbol(j)?);
            for p in pts.iter_mut() {
                *p = map.apply_lifted(p);
            }
        }
    }
    Ok(out)
}

/// `d^u_{ω,n}(y1, y2) = max_{0≤j<n} d^u(f^j y1, f^j y2)`.
pub fn bowen_distance(
    cocycle: &Cocycle,
    disk: &UnstableDisk,
    n: usize,
    y1: &TorusPoint,
    y2: &TorusPoint,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("Bowen distance needs n ≥ 1".into()));
    }
    let s1 = disk.locate(y1)?;
    let s2 = disk.locate(y2)?;
    bowen_distance_params(cocycle, disk, n, &s1, &s2)
}

pub fn bowen_distance_params(
    cocycle: &Cocycle,
    disk: &UnstableDisk,
    n: usize,
    s1: &[f64],
    s2: &[f64],
) -> Result<f64> {
    Ok(image_distances_params(cocycle, disk, n, s1, s2)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// The dynamical metric on a fixed disk.
#[derive(Debug, Clone)]
pub struct BowenMetric<'a> {
    pub cocycle: &'a Cocycle,
    pub disk: &'a UnstableDisk,
    pub n: usize,
    pub resolution: f64,
}

impl<'a> BowenMetric<'a> {
    pub fn distance(&self, s1: &[f64], s2: &[f64]) -> Result<f64> {
        bowen_distance_params(self.cocycle, self.disk, self.n, s1, s2)
    }

    /// Membership of the parameter `s` in the Bowen ball of radius `eps`
    /// centred at the disk base.
    pub fn in_ball(&self, s: &[f64], eps: f64) -> Result<bool> {
        let zero = vec![0.0; s.len()];
        Ok(self.distance(&zero, s)? <= eps)
    }
}

// ---------------------------------------------------------------------------
// Leaf volume
// ---------------------------------------------------------------------------

/// Union of axis-aligned boxes in chart-parameter space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamRegion {
    pub boxes: Vec<Vec<(f64, f64)>>,
}

impl ParamRegion {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            boxes: vec![vec![(lo, hi)]],
        }
    }

    pub fn intervals(iv: &[(f64, f64)]) -> Self {
        Self {
            boxes: iv.iter().map(|&(a, b)| vec![(a, b)]).collect(),
        }
    }
}

/// Total length of a union of intervals.
pub fn union_length(intervals: &mut [(f64, f64)]) -> f64 {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for &(a, b) in intervals.iter() {
        if b <= a {
            continue;
        }
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = cur {
        total += cb - ca;
    }
    total
}

/// Riemannian volume of the chart image of `region ∩ [-δ, δ]^u`.
/// Charts are isometric, so this is the parameter-space measure.
pub fn leaf_volume(disk: &UnstableDisk, region: &ParamRegion) -> f64 {
    let r = disk.radius;
    let u = disk.unstable_dim();
    let clipped: Vec<Vec<(f64, f64)>> = region
        .boxes
        .iter()
        .filter(|b| b.len() == u)
        .map(|b| b.iter().map(|&(lo, hi)| (lo.max(-r), hi.min(r))).collect())
        .collect();
    match u {
        1 => {
            let mut iv: Vec<(f64, f64)> = clipped.iter().map(|b| b[0]).collect();
            union_length(&mut iv)
        }
        _ => {
            let mut xs: Vec<f64> = clipped.iter().flat_map(|b| [b[0].0, b[0].1]).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let mut area = 0.0;
            for w in xs.windows(2) {
                let (x0, x1) = (w[0], w[1]);
                if x1 <= x0 {
                    continue;
                }
                let mut ys: Vec<(f64, f64)> = clipped
                    .iter()
                    .filter(|b| b[0].0 <= x0 && b[0].1 >= x1)
                    .map(|b| b[1])
                    .collect();
                area += (x1 - x0) * union_length(&mut ys);
            }
            area
        }
    }
}

// ---------------------------------------------------------------------------
// Tabulated leaf grids for separated-set computations
// ---------------------------------------------------------------------------

/// Evaluation of a function along grid orbits: `weight(j, f^j_ω y)` is
/// summed over `j = 0..n` for every grid point `y`.
pub type OrbitWeight<'a> = dyn Fn(i64, &TorusPoint) -> f64 + Sync + 'a;

/// A one-dimensional disk sampled on an increasing parameter grid, with the
/// image arc lengths needed for the Bowen metrics `d^u_{ω,n}`, `n ∈ n_values`.
#[derive(Debug, Clone)]
pub struct LeafGrid {
    pub params: Vec<f64>,
    pub n_values: Vec<usize>,
    metric: GridMetric,
    /// `sums[k][i]` = Birkhoff sum `S_{n_k} w` at grid point `i` (zeros
    /// when no weight was given).
    pub sums: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum GridMetric {
    /// Flat leaf: `d_n(a, b) = max_{j<n} Λ_j · |s_a − s_b|`.
    Affine { max_stretch: Vec<f64> },
    /// `cum[j][i]` = image arc length from grid point 0 to `i` at step `j`.
    Tabulated { cum: Vec<Vec<f64>> },
}

impl LeafGrid {
    /// Bowen distance `d^u_{ω,n_k}` between grid indices.
    #[inline]
    pub fn distance(&self, k: usize, a: usize, b: usize) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        match &self.metric {
            GridMetric::Affine { max_stretch } => {
                max_stretch[k] * (self.params[b] - self.params[a])
            }
            GridMetric::Tabulated { cum } => cum[..self.n_values[k]]
                .iter()
                .map(|c| c[b] - c[a])
                .fold(0.0, f64::max),
        }
    }

    /// Largest Bowen distance between neighbouring grid points at `n_k`.
    pub fn max_gap(&self, k: usize) -> f64 {
        (1..self.params.len())
            .map(|i| self.distance(k, i - 1, i))
            .fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// Tangent stretch factors `‖D f^j v‖` for `j = 0..n` along the base orbit
/// of a u = 1 disk.
pub fn base_stretches(cocycle: &Cocycle, disk: &UnstableDisk, n: usize) -> Result<Vec<f64>> {
    let dim = cocycle.dim();
    let path = &disk.base.path;
    path.require(0, n as i64 - 1)?;
    let mut v = disk.frame[0];
    let mut y = disk.base.point;
    let mut out = Vec::with_capacity(n);
    for j in 0..n as i64 {
        out.push(norm(&v));
        if j + 1 < n as i64 {
            let map = cocycle.map(path.symbol(j)?);
            v = jac_apply(&map.jacobian_raw(y.raw()), &v, dim);
            y = map.apply(&y);
        }
    }
    Ok(out)
}

/// Running maxima of `stretch` at the given horizons.
pub(crate) fn prefix_max_at(stretch: &[f64], n_values: &[usize]) -> Vec<f64> {
    n_values
        .iter()
        .map(|&n| stretch[..n].iter().copied().fold(0.0, f64::max))
        .collect()
}

/// Samples a u = 1 disk on a uniform grid of step `h` over `[-δ, δ]` and
/// tabulates the Bowen metrics and Birkhoff sums of `weight` for every
/// horizon in `n_values` (strictly increasing).
pub fn leaf_grid(
    cocycle: &Cocycle,
    disk: &UnstableDisk,
    n_values: &[usize],
    h: f64,
    weight: Option<&OrbitWeight<'_>>,
) -> Result<LeafGrid> {
    if disk.unstable_dim() != 1 {
        return Err(Error::Unsupported("leaf grids need u = 1".into()));
    }
    if n_values.is_empty() || n_values[0] < 1 || n_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "leaf grid horizons must be ≥ 1 and strictly increasing".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(
            "leaf grid step must be positive".into(),
        ));
    }
    let n_max = *n_values.last().expect("nonempty");
    let path = &disk.base.path;
    path.require(0, n_max as i64 - 1)?;
    let r = disk.radius;
    let count = (2.0 * r / h).ceil() as usize + 1;
    let params: Vec<f64> = (0..count).map(|i| (-r + i as f64 * h).min(r)).collect();
    let dim = cocycle.dim();
    let symbols: Vec<usize> = (0..n_max as i64)
        .map(|j| path.symbol(j))
        .collect::<Result<_>>()?;

    // Birkhoff sums at the requested horizons along one orbit.
    let record = |total: f64, j: usize, out: &mut Vec<f64>, next: &mut usize| {
        if *next < n_values.len() && j + 1 == n_values[*next] {
            out.push(total);
            *next += 1;
        }
    };

    if disk.is_affine() {
        let stretch = base_stretches(cocycle, disk, n_max)?;
        let max_stretch = prefix_max_at(&stretch, n_values);
        let per_point: Vec<Vec<f64>> = match weight {
            None => vec![vec![0.0; n_values.len()]; count],
            Some(w) => {
                let mut base = Vec::with_capacity(n_max);
                let mut dirs = Vec::with_capacity(n_max);
                let mut y = disk.base.point;
                let mut v = disk.frame[0];
                for (j, &sym) in symbols.iter().enumerate() {
                    base.push(*y.raw());
                    dirs.push(v);
                    if j + 1 < n_max {
                        let map = cocycle.map(sym);
                        v = jac_apply(&map.jacobian_raw(y.raw()), &v, dim);
                        y = map.apply(&y);
                    }
                }
                params
                    .par_iter()
                    .map(|&s| {
                        let mut out = Vec::with_capacity(n_values.len());
                        let mut next = 0;
                        let mut total = 0.0;
                        for j in 0..n_max {
                            let mut p = [0.0; 3];
                            for i in 0..dim {
                                p[i] = wrap_unit(base[j][i] + s * dirs[j][i]);
                            }
                            total += w(j as i64, &TorusPoint::from_lifted(&p, dim));
                            record(total, j, &mut out, &mut next);
                        }
                        out
                    })
                    .collect()
            }
        };
        return Ok(LeafGrid {
            params,
            n_values: n_values.to_vec(),
            metric: GridMetric::Affine { max_stretch },
            sums: transpose(per_point, n_values.len()),
        });
    }

    // Curved leaf: push every grid point forward and tabulate chord lengths.
    let orbits: Vec<(Vec<Coords>, Vec<f64>)> = params
        .par_iter()
        .map(|&s| {
            let mut p = disk.chart_lifted(&[s]);
            let mut pts = Vec::with_capacity(n_max);
            let mut out = Vec::with_capacity(n_values.len());
            let mut next = 0;
            let mut total = 0.0;
            for (j, &sym) in symbols.iter().enumerate() {
                pts.push(p);
                if let Some(w) = weight {
                    total += w(j as i64, &TorusPoint::from_lifted(&p, dim));
                }
                record(total, j, &mut out, &mut next);
                if j + 1 < n_max {
                    p = cocycle.map(sym).apply_lifted(&p);
                }
            }
            (pts, out)
        })
        .collect();
    let mut cum = vec![vec![0.0; count]; n_max];
    for (j, c) in cum.iter_mut().enumerate() {
        for i in 1..count {
            c[i] = c[i - 1] + norm(&sub(&orbits[i].0[j], &orbits[i - 1].0[j]));
        }
    }
    let per_point = orbits.into_iter().map(|(_, s)| s).collect();
    Ok(LeafGrid {
        params,
        n_values: n_values.to_vec(),
        metric: GridMetric::Tabulated { cum },
        sums: transpose(per_point, n_values.len()),
    })
}

fn transpose(per_point: Vec<Vec<f64>>, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|idx| per_point.iter().map(|row| row[idx]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oseledets::lyapunov_spectrum;
    use crate::rds::{cat_cocycle, cat_lambda, MapDescriptor, SymbolPath};

    fn cat_disk(x: &[f64], delta: f64) -> (Cocycle, UnstableDisk) {
        let c = cat_cocycle();
        let path = SymbolPath::constant(0, 600);
        let x = TorusPoint::new(x);
        let rep = lyapunov_spectrum(&c, &path, &x, 200).unwrap();
        let disk = unstable_disk(&c, &SkewState::new(path, x), delta, &rep).unwrap();
        (c, disk)
    }

    #[test]
    fn cat_disk_follows_golden_slope() {
        let (_, disk) = cat_disk(&[0.0, 0.0], 0.1);
        assert_eq!(disk.construction(), Construction::LinearExact);
        let p = disk.chart(&[0.05]);
        let slope = wrap_centered_pair(p.coords());
        assert!((slope - (cat_lambda() - 2.0)).abs() < 1e-10);
        assert_eq!(disk.chart(&[0.0]), TorusPoint::new(&[0.0, 0.0]));
    }

    fn wrap_centered_pair(c: &[f64]) -> f64 {
        let a = crate::rds::wrap_centered(c[0]);
        let b = crate::rds::wrap_centered(c[1]);
        b / a
    }

    #[test]
    fn trivial_leaf_rejected() {
        let id = Cocycle::new(vec![
            MapDescriptor::linear(vec![vec![1, 0], vec![0, 1]]).unwrap()
        ])
        .unwrap();
        let path = SymbolPath::constant(0, 300);
        let x = TorusPoint::new(&[0.2, 0.2]);
        let rep = lyapunov_spectrum(&id, &path, &x, 100).unwrap();
        let err = unstable_disk(&id, &SkewState::new(path, x), 0.1, &rep).unwrap_err();
        assert_eq!(err, Error::TrivialLeaf);
    }

    #[test]
    fn leaf_distance_basics() {
        let (_, disk) = cat_disk(&[0.3, 0.7], 0.1);
        let a = disk.chart(&[0.0]);
        let b = disk.chart(&[0.07]);
        assert_eq!(leaf_distance(&disk, &a, &a).unwrap(), 0.0);
        assert!((leaf_distance(&disk, &a, &b).unwrap() - 0.07).abs() < 1e-12);
        assert_eq!(
            leaf_distance(&disk, &a, &b).unwrap(),
            leaf_distance(&disk, &b, &a).unwrap()
        );
        let off = TorusPoint::new(&[0.31, 0.7]);
        assert!(matches!(
            leaf_distance(&disk, &a, &off),
            Err(Error::PointOffLeaf(_))
        ));
    }

    #[test]
    fn leaf_volume_examples() {
        let (_, disk) = cat_disk(&[0.3, 0.7], 0.1);
        assert!((leaf_volume(&disk, &ParamRegion::interval(-1.0, 1.0)) - 0.2).abs() < 1e-15);
        assert_eq!(leaf_volume(&disk, &ParamRegion::empty()), 0.0);
        assert!((leaf_volume(&disk, &ParamRegion::interval(0.0, 0.1)) - 0.1).abs() < 1e-15);
        let overlapping = ParamRegion::intervals(&[(-0.05, 0.02), (0.0, 0.03)]);
        assert!((leaf_volume(&disk, &overlapping) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn union_of_rectangles() {
        // Two unit squares overlapping in a quarter: area 1.75, disk large enough
        let mut iv = vec![(0.0, 1.0), (0.5, 2.0), (3.0, 3.5)];
        assert!((union_length(&mut iv) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn bowen_distance_grows_by_lambda() {
        let (c, disk) = cat_disk(&[0.3, 0.7], 0.1);
        let s = 1e-4;
        let d = bowen_distance_params(&c, &disk, 6, &[0.0], &[s]).unwrap();
        assert!((d - cat_lambda().powi(5) * s).abs() < 1e-12);
        let d1 = bowen_distance_params(&c, &disk, 1, &[0.0], &[s]).unwrap();
        assert!((d1 - s).abs() < 1e-18);
    }

    fn perturbed_cat(amp: f64) -> Cocycle {
        use crate::rds::PerturbationTerm;
        let term = PerturbationTerm {
            component: 0,
            amplitude: amp,
            frequency: [0, 1, 0],
            phase: 0.3,
        };
        Cocycle::new(vec![MapDescriptor::new(
            crate::rds::cat_matrix(),
            vec![term],
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn graph_transform_reproduces_linear_leaf() {
        let c = cat_cocycle();
        let path = SymbolPath::constant(0, 600);
        let x = TorusPoint::new(&[0.41, 0.13]);
        let rep = lyapunov_spectrum(&c, &path, &x, 200).unwrap();
        let state = SkewState::new(path, x);
        let lin = unstable_disk(&c, &state, 0.1, &rep).unwrap();
        let gt = unstable_disk_with(&c, &state, 0.1, &rep, Construction::GraphTransform).unwrap();
        for i in 0..=40 {
            let s = -0.1 + 0.005 * i as f64;
            let d = lin.chart(&[s]).distance(&gt.chart(&[s]));
            assert!(d < 1e-9, "s={s} d={d}");
        }
    }

    #[test]
    fn perturbed_leaf_is_invariant() {
        let c = perturbed_cat(0.02);
        let path = SymbolPath::constant(0, 600);
        let x = TorusPoint::new(&[0.41, 0.13]);
        let rep = lyapunov_spectrum(&c, &path, &x, 300).unwrap();
        let state = SkewState::new(path.clone(), x);
        let disk = unstable_disk(&c, &state, 0.05, &rep).unwrap();
        assert_eq!(disk.construction(), Construction::GraphTransform);
        let next = state.forward(&c).unwrap();
        let rep1 = lyapunov_spectrum(&c, &next.path, &next.point, 300).unwrap();
        let image = unstable_disk(&c, &next, 0.2, &rep1).unwrap();
        let (mut prev, mut prev_img) = (None::<Vec<f64>>, None::<Vec<f64>>);
        for i in 0..=10 {
            let s = -0.02 + 0.004 * i as f64;
            let y = disk.chart(&[s]);
            let fy = c.step(&path, 0, &y).unwrap();
            let t = image.locate(&fy).unwrap();
            if let (Some(p), Some(q)) = (&prev, &prev_img) {
                let d0 = leaf_distance_params(&disk, p, &[s]);
                let d1 = leaf_distance_params(&image, q, &t);
                assert!(d1 > 1.5 * d0, "expansion {d1} vs {d0}");
            }
            prev = Some(vec![s]);
            prev_img = Some(t);
        }
    }

    #[test]
    fn tabulated_grid_matches_flat_grid() {
        let c = cat_cocycle();
        let path = SymbolPath::constant(0, 600);
        let x = TorusPoint::new(&[0.41, 0.13]);
        let rep = lyapunov_spectrum(&c, &path, &x, 200).unwrap();
        let state = SkewState::new(path, x);
        let flat = unstable_disk(&c, &state, 0.05, &rep).unwrap();
        let curved =
            unstable_disk_with(&c, &state, 0.05, &rep, Construction::GraphTransform).unwrap();
        let w = |_: i64, p: &TorusPoint| (2.0 * std::f64::consts::PI * p.coords()[0]).cos();
        let g1 = leaf_grid(&c, &flat, &[1, 3, 5], 1e-3, Some(&w)).unwrap();
        let g2 = leaf_grid(&c, &curved, &[1, 3, 5], 1e-3, Some(&w)).unwrap();
        assert_eq!(g1.len(), g2.len());
        for k in 0..3 {
            let d1 = g1.distance(k, 3, 70);
            let d2 = g2.distance(k, 3, 70);
            assert!((d1 - d2).abs() < 1e-8 * (1.0 + d1), "{d1} {d2}");
            for i in [0, 17, 100] {
                assert!((g1.sums[k][i] - g2.sums[k][i]).abs() < 1e-6);
            }
        }
        let n5 = cat_lambda().powi(4) * (g1.params[70] - g1.params[3]);
        assert!((g1.distance(2, 3, 70) - n5).abs() < 1e-10);
    }

    #[test]
    fn bowen_ball_nesting_on_grid() {
        let (c, disk) = cat_disk(&[0.2, 0.6], 0.1);
        let metric = |n| BowenMetric {
            cocycle: &c,
            disk: &disk,
            n,
            resolution: 1e-4,
        };
        let (eps, eps_small) = (0.02, 0.01);
        // expansion by λ per step: k = 1 already shrinks ε to below ε/λ < ε_small
        for i in 0..=200 {
            let s = -0.01 + 1e-4 * i as f64;
            let in_deep = metric(6).in_ball(&[s], eps).unwrap();
            let in_mid = metric(5).in_ball(&[s], eps_small).unwrap();
            let in_outer = metric(5).in_ball(&[s], eps).unwrap();
            if in_deep {
                assert!(in_mid);
            }
            if in_mid {
                assert!(in_outer);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn bowen_distance_is_monotone_in_n(a in -0.09f64..0.09, b in -0.09f64..0.09, n in 1usize..8) {
            let (c, disk) = cat_disk(&[0.3, 0.7], 0.1);
            let d0 = bowen_distance_params(&c, &disk, n, &[a], &[b]).unwrap();
            let d1 = bowen_distance_params(&c, &disk, n + 1, &[a], &[b]).unwrap();
            proptest::prop_assert!(d1 >= d0);
            proptest::prop_assert_eq!(
                bowen_distance_params(&c, &disk, 1, &[a], &[b]).unwrap(),
                leaf_distance_params(&disk, &[a], &[b])
            );
        }
    }
}
