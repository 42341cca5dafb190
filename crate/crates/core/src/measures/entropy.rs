//! Unstable metric entropy from Bowen balls, from conditional entropies of
//! refined partitions, and from pointwise information traces.
//!
//! Leaf conditionals are normalized leaf volume for Haar on affine maps and
//! counting measure on the atoms for atomic measures.

use rayon::prelude::*;
use serde::Serialize;

use super::partition::{restrict_to_box, PartitionPair};
use super::sampler::{MeasureKind, MeasureSampler};
use crate::error::{Error, Result};
use crate::leafgeom::{bowen_distance_params, unstable_disk, UnstableDisk};
use crate::oseledets::{lyapunov_spectrum, FRAME_SETTLE_STEPS};
use crate::rds::{derive_seed, Cocycle, DrivingSystem, SkewState, TorusPoint};
use crate::stats::{mean, std_dev, upper_half_slope};

const SPECTRUM_STEPS: usize = 200;
/// Bisection steps on `log s` for Bowen ball edges.
const EDGE_BISECTIONS: usize = 80;
/// Smallest Bowen ball half-width resolved, relative to `δ`.
const MIN_LOG_EDGE: f64 = -500.0;
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMethod {
    BowenBall,
    PartitionRate,
    SmbTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub measure_id: String,
    pub method: EntropyMethod,
    pub value: f64,
    /// 95% half-width over samples.
    pub ci: f64,
    pub n_grid: Vec<usize>,
    pub samples: usize,
    /// Mean over samples of the information `−log mass` at each `n`.
    pub per_n: Vec<(usize, f64)>,
    /// RMS residual of the slope fit of the mean information.
    pub fit_residual: f64,
    /// Bowen balls only: the same estimate at `ε/2`.
    pub half_eps_value: Option<f64>,
}

fn validate_n_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.is_empty() || n_grid[0] < 1 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "n_grid must be nonempty, positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

fn half_window(n_max: usize) -> usize {
    n_max.max(SPECTRUM_STEPS) + FRAME_SETTLE_STEPS as usize + 16
}

/// A sampled point with its disk, or `None` when the leaf is trivial.
struct Drawn {
    point: TorusPoint,
    symbol0: usize,
    disk: Option<UnstableDisk>,
    kind: MeasureKind,
    atoms: Vec<TorusPoint>,
}

fn draw(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    delta: f64,
    n_max: usize,
    seed: u64,
) -> Result<Drawn> {
    let s = sampler.sample(cocycle, system, half_window(n_max), seed)?;
    let component = sampler.components()[s.component].1;
    let rep = lyapunov_spectrum(cocycle, &s.path, &s.point, SPECTRUM_STEPS)?;
    let u = rep.unstable_dim();
    if u > 1 {
        return Err(Error::Unsupported(format!(
            "entropy estimators need one-dimensional leaves, found u = {u}"
        )));
    }
    let disk = if u == 0 {
        None
    } else {
        Some(unstable_disk(
            cocycle,
            &SkewState::new(s.path.clone(), s.point),
            delta,
            &rep,
        )?)
    };
    Ok(Drawn {
        point: s.point,
        symbol0: s.path.symbol(0)?,
        disk,
        kind: component.kind(),
        atoms: component.atoms().map(<[_]>::to_vec).unwrap_or_default(),
    })
}

/// Atoms of an atomic measure lying on `disk` within parameter range `range`.
fn atoms_on(disk: &UnstableDisk, atoms: &[TorusPoint], range: (f64, f64)) -> Vec<f64> {
    atoms
        .iter()
        .filter_map(|a| disk.locate(a).ok())
        .map(|s| s[0])
        .filter(|s| *s >= range.0 && *s <= range.1)
        .collect()
}

/// Largest `s ∈ (0, δ]` with `d_n(0, sign·s) ≤ ε`, by bisection on `log s`.
fn ball_edge(cocycle: &Cocycle, disk: &UnstableDisk, n: usize, eps: f64, sign: f64) -> Result<f64> {
    let r = disk.radius();
    let within = |s: f64| -> Result<bool> {
        Ok(bowen_distance_params(cocycle, disk, n, &[0.0], &[sign * s])? <= eps)
    };
    if within(r)? {
        return Ok(r);
    }
    let (mut lo, mut hi) = (r.ln() + MIN_LOG_EDGE, r.ln());
    if !within(lo.exp())? {
        return Ok(lo.exp());
    }
    for _ in 0..EDGE_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if within(mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.exp())
}

/// `−log μ^u(V^u(ω, x, n, ε))` for each `n`.
fn bowen_information(cocycle: &Cocycle, d: &Drawn, n_grid: &[usize], eps: f64) -> Result<Vec<f64>> {
    let Some(disk) = &d.disk else {
        return Ok(vec![0.0; n_grid.len()]);
    };
    let r = disk.radius();
    match d.kind {
        MeasureKind::Haar => n_grid
            .iter()
            .map(|&n| {
                let plus = ball_edge(cocycle, disk, n, eps, 1.0)?;
                let minus = ball_edge(cocycle, disk, n, eps, -1.0)?;
                Ok(-((plus + minus) / (2.0 * r)).ln())
            })
            .collect(),
        _ => {
            let on = atoms_on(disk, &d.atoms, (-r, r));
            n_grid
                .iter()
                .map(|&n| {
                    let mut inside = 0usize;
                    for s in &on {
                        if bowen_distance_params(cocycle, disk, n, &[0.0], &[*s])? <= eps {
                            inside += 1;
                        }
                    }
                    Ok(-(inside.max(1) as f64 / on.len().max(1) as f64).ln())
                })
                .collect()
        }
    }
}

/// `I_μ(α_0^{n-1}|η)(ω, x)` for each `n`.
fn partition_information(
    cocycle: &Cocycle,
    pair: &PartitionPair,
    d: &Drawn,
    n_grid: &[usize],
) -> Result<Vec<f64>> {
    let Some(disk) = &d.disk else {
        return Ok(vec![0.0; n_grid.len()]);
    };
    let path = &disk.base().path;
    let n_max = *n_grid.last().expect("validated");
    let eta = pair.eta_interval(disk, d.symbol0)?;
    match d.kind {
        MeasureKind::Haar => {
            if !disk.is_affine() {
                return Err(Error::UnsupportedMeasure(
                    "Haar conditionals need an affine leaf".into(),
                ));
            }
            let eta_len = eta.1 - eta.0;
            let dim = d.point.dim();
            let mut pieces = vec![eta];
            let mut y = d.point;
            let mut e: Vec<f64> = disk.frame()[0][..dim].to_vec();
            let mut stretch = 1.0;
            let mut out = Vec::with_capacity(n_grid.len());
            let mut next = 0;
            for j in 0..n_max {
                let symbol = path.symbol(j as i64)?;
                if j > 0 && pair.alpha.k > 1 {
                    let image: Vec<(f64, f64)> = pieces
                        .iter()
                        .map(|(a, b)| (a * stretch, b * stretch))
                        .collect();
                    let slabs = pair.alpha.slabs(symbol, y.coords());
                    pieces = restrict_to_box(&image, y.coords(), &e, &slabs)
                        .into_iter()
                        .map(|(a, b)| (a / stretch, b / stretch))
                        .collect();
                }
                if !pieces.iter().any(|(a, b)| *a <= 0.0 && 0.0 <= *b) {
                    return Err(Error::EmptyRefinedAtom(j + 1));
                }
                if j + 1 == n_grid[next] {
                    let len: f64 = pieces.iter().map(|(a, b)| b - a).sum();
                    out.push(-(len / eta_len).ln());
                    next += 1;
                }
                let map = cocycle.map(symbol);
                let jac = map.jacobian(&y);
                let mut v = vec![0.0; dim];
                for (r, vr) in v.iter_mut().enumerate() {
                    *vr = (0..dim).map(|c| jac[(r, c)] * e[c]).sum();
                }
                let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                e = v.iter().map(|t| t / norm).collect();
                stretch *= norm;
                y = map.apply(&y);
            }
            Ok(out)
        }
        _ => {
            let on = atoms_on(disk, &d.atoms, eta);
            let mut itin_x = Vec::with_capacity(n_max);
            let mut y = d.point;
            for j in 0..n_max {
                let symbol = path.symbol(j as i64)?;
                itin_x.push(pair.alpha.atom(symbol, &y));
                y = cocycle.map(symbol).apply(&y);
            }
            // first step where each atom's itinerary leaves x's
            let mut split = Vec::with_capacity(on.len());
            for s in &on {
                let mut y = disk.chart(&[*s]);
                let mut k = n_max;
                for (j, a) in itin_x.iter().enumerate() {
                    let symbol = path.symbol(j as i64)?;
                    if pair.alpha.atom(symbol, &y) != *a {
                        k = j;
                        break;
                    }
                    y = cocycle.map(symbol).apply(&y);
                }
                split.push(k);
            }
            Ok(n_grid
                .iter()
                .map(|&n| {
                    let same = split.iter().filter(|k| **k >= n).count().max(1);
                    -(same as f64 / on.len().max(1) as f64).ln()
                })
                .collect())
        }
    }
}

/// Per-sample information rows `[sample][n_idx]`.
fn sample_rows<F>(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    delta: f64,
    n_grid: &[usize],
    samples: usize,
    seed: u64,
    info: F,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&Drawn) -> Result<Vec<f64>> + Sync,
{
    validate_n_grid(n_grid)?;
    if samples < 1 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    sampler.validate(cocycle, system)?;
    let n_max = *n_grid.last().expect("validated");
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let d = draw(
                cocycle,
                system,
                sampler,
                delta,
                n_max,
                derive_seed(seed, i as u64),
            )?;
            info(&d)
        })
        .collect()
}

fn summarize(
    sampler: &MeasureSampler,
    method: EntropyMethod,
    n_grid: &[usize],
    rows: &[Vec<f64>],
) -> EntropyEstimate {
    let slopes: Vec<f64> = rows
        .iter()
        .map(|r| upper_half_slope(n_grid, r).slope)
        .collect();
    let per_n: Vec<(usize, f64)> = n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| (n, mean(&rows.iter().map(|r| r[k]).collect::<Vec<_>>())))
        .collect();
    let means: Vec<f64> = per_n.iter().map(|p| p.1).collect();
    EntropyEstimate {
        measure_id: sampler.id.clone(),
        method,
        value: mean(&slopes),
        ci: Z95 * std_dev(&slopes) / (rows.len() as f64).sqrt(),
        n_grid: n_grid.to_vec(),
        samples: rows.len(),
        per_n,
        fit_residual: upper_half_slope(n_grid, &means).residual_rms,
        half_eps_value: None,
    }
}

/// `h̃^u_μ` from the decay rate of conditional masses of Bowen balls, at
/// `ε` and (for the sensitivity check) `ε/2`.
#[allow(clippy::too_many_arguments)]
pub fn bowen_ball_entropy(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    delta: f64,
    n_grid: &[usize],
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<EntropyEstimate> {
    if !(eps > 0.0 && eps < delta) {
        return Err(Error::InvalidArgument(format!(
            "ε = {eps} must lie in (0, δ)"
        )));
    }
    let rows = sample_rows(
        cocycle,
        system,
        sampler,
        delta,
        n_grid,
        samples,
        seed,
        |d| {
            let mut a = bowen_information(cocycle, d, n_grid, eps)?;
            a.extend(bowen_information(cocycle, d, n_grid, 0.5 * eps)?);
            Ok(a)
        },
    )?;
    let k = n_grid.len();
    let full: Vec<Vec<f64>> = rows.iter().map(|r| r[..k].to_vec()).collect();
    let half: Vec<Vec<f64>> = rows.iter().map(|r| r[k..].to_vec()).collect();
    let mut est = summarize(sampler, EntropyMethod::BowenBall, n_grid, &full);
    est.half_eps_value = Some(summarize(sampler, EntropyMethod::BowenBall, n_grid, &half).value);
    Ok(est)
}

/// `h_μ(F, α|η)` as the growth rate of `H_μ(α_0^{n-1}|η)`.
pub fn partition_entropy_rate(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    pair: &PartitionPair,
    n_grid: &[usize],
    samples: usize,
    seed: u64,
) -> Result<EntropyEstimate> {
    let rows = sample_rows(
        cocycle,
        system,
        sampler,
        pair.delta,
        n_grid,
        samples,
        seed,
        |d| partition_information(cocycle, pair, d, n_grid),
    )?;
    Ok(summarize(
        sampler,
        EntropyMethod::PartitionRate,
        n_grid,
        &rows,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub sample_id: usize,
    pub n: usize,
    pub information_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmbTrace {
    /// Value is the mean trace at the largest `n`.
    pub estimate: EntropyEstimate,
    pub rows: Vec<TraceRow>,
    pub mean_by_n: Vec<(usize, f64)>,
    pub sd_by_n: Vec<(usize, f64)>,
}

/// Pointwise traces `(1/n)·I_μ(α_0^{n-1}|η)(ω, x)`, one orbit per sample.
pub fn smb_trace(
    cocycle: &Cocycle,
    system: &DrivingSystem,
    sampler: &MeasureSampler,
    pair: &PartitionPair,
    n_grid: &[usize],
    samples: usize,
    seed: u64,
) -> Result<SmbTrace> {
    let info = sample_rows(
        cocycle,
        system,
        sampler,
        pair.delta,
        n_grid,
        samples,
        seed,
        |d| partition_information(cocycle, pair, d, n_grid),
    )?;
    let traces: Vec<Vec<f64>> = info
        .iter()
        .map(|r| r.iter().zip(n_grid).map(|(v, &n)| v / n as f64).collect())
        .collect();
    let mut rows = Vec::with_capacity(samples * n_grid.len());
    for (i, t) in traces.iter().enumerate() {
        for (v, &n) in t.iter().zip(n_grid) {
            rows.push(TraceRow {
                sample_id: i,
                n,
                information_value: *v,
            });
        }
    }
    let column = |k: usize| traces.iter().map(|t| t[k]).collect::<Vec<_>>();
    let mean_by_n: Vec<(usize, f64)> = n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| (n, mean(&column(k))))
        .collect();
    let sd_by_n: Vec<(usize, f64)> = n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| (n, std_dev(&column(k))))
        .collect();
    let last = n_grid.len() - 1;
    let mut estimate = summarize(sampler, EntropyMethod::SmbTrace, n_grid, &info);
    estimate.value = mean_by_n[last].1;
    estimate.ci = Z95 * sd_by_n[last].1 / (samples as f64).sqrt();
    Ok(SmbTrace {
        estimate,
        rows,
        mean_by_n,
        sd_by_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyGap {
    pub bowen: f64,
    pub partition: f64,
    pub gap: f64,
    pub combined_ci: f64,
    pub pass: bool,
}

/// `|h̃^u − h^u|` and whether it lies within the combined half-widths.
pub fn entropy_gap(bowen: &EntropyEstimate, partition: &EntropyEstimate) -> EntropyGap {
    let gap = (bowen.value - partition.value).abs();
    let combined_ci = bowen.ci.hypot(partition.ci);
    EntropyGap {
        bowen: bowen.value,
        partition: partition.value,
        gap,
        combined_ci,
        pass: gap <= combined_ci,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::partition::build_partition_pair;
    use crate::rds::{cat_cocycle, cat_lambda};

    #[test]
    fn haar_bowen_ball_matches_interval_oracle() {
        let cocycle = cat_cocycle();
        let system = DrivingSystem::trivial(0);
        let (delta, eps) = (0.2, 0.05);
        let n_grid = [4, 8, 12];
        let d = draw(&cocycle, &system, &MeasureSampler::haar(), delta, 12, 5).unwrap();
        let info = bowen_information(&cocycle, &d, &n_grid, eps).unwrap();
        let lam = cat_lambda();
        for (v, &n) in info.iter().zip(&n_grid) {
            // ball = interval of half-width ε/λ^{n-1} inside [−δ, δ]
            let oracle = -((eps / lam.powi(n as i32 - 1)) / delta).ln();
            assert!((v - oracle).abs() < 1e-9, "n = {n}: {v} vs {oracle}");
        }
    }

    #[test]
    fn fixed_point_has_zero_information() {
        let cocycle = cat_cocycle();
        let system = DrivingSystem::trivial(0);
        let pair = build_partition_pair(&system, 2, 0.25, 6, 1).unwrap();
        let m = MeasureSampler::fixed_point(2);
        let est = partition_entropy_rate(&cocycle, &system, &m, &pair, &[2, 4, 6], 4, 1).unwrap();
        assert_eq!(est.value, 0.0);
        let est = bowen_ball_entropy(&cocycle, &system, &m, 0.2, &[2, 4, 6], 0.05, 4, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn trivial_alpha_gives_zero_information() {
        let cocycle = cat_cocycle();
        let system = DrivingSystem::trivial(0);
        let pair = build_partition_pair(&system, 2, 0.25, 1, 1).unwrap();
        let d = draw(&cocycle, &system, &MeasureSampler::haar(), 0.25, 4, 9).unwrap();
        let info = partition_information(&cocycle, &pair, &d, &[1, 4]).unwrap();
        assert_eq!(info, vec![0.0, 0.0]);
    }

    #[test]
    fn refined_atoms_shrink_like_lambda() {
        let cocycle = cat_cocycle();
        let system = DrivingSystem::trivial(0);
        let pair = build_partition_pair(&system, 2, 0.25, 6, 2).unwrap();
        let est = partition_entropy_rate(
            &cocycle,
            &system,
            &MeasureSampler::haar(),
            &pair,
            &[4, 8, 12, 16, 20],
            64,
            3,
        )
        .unwrap();
        assert!(
            (est.value - cat_lambda().ln()).abs() < 0.05 * cat_lambda().ln(),
            "{est:?}"
        );
    }

    #[test]
    fn non_affine_haar_is_rejected() {
        use crate::rds::{MapDescriptor, PerturbationTerm};
        let map = MapDescriptor::new(
            crate::rds::cat_matrix(),
            vec![PerturbationTerm {
                component: 0,
                amplitude: 0.01,
                frequency: [0, 1, 0],
                phase: 0.0,
            }],
        )
        .unwrap();
        let cocycle = Cocycle::new(vec![map]).unwrap();
        let system = DrivingSystem::trivial(0);
        let err = bowen_ball_entropy(
            &cocycle,
            &system,
            &MeasureSampler::haar(),
            0.2,
            &[2, 4],
            0.05,
            2,
            0,
        );
        assert!(matches!(err, Err(Error::UnsupportedMeasure(_))));
    }
}
