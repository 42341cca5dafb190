//! Fiberwise grid partitions `α` and the leaf partitions `η` they cut out
//! of local unstable disks.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafgeom::UnstableDisk;
use crate::rds::{derive_seed, rng_from_seed, DrivingSystem, TorusPoint};

/// Grid partition of `T^d` into `k^d` boxes, shifted per symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPartition {
    pub k: usize,
    pub dim: usize,
    /// Offset of the box corners for each symbol.
    pub offsets: Vec<[f64; 3]>,
}

/// One coordinate interval `[lo, lo + 1/k)` in lifted coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Slab {
    pub lo: f64,
    pub width: f64,
}

impl GridPartition {
    /// Atom index of `x` in `α_ω` for the symbol `ω_0 = symbol`.
    pub fn atom(&self, symbol: usize, x: &TorusPoint) -> usize {
        let o = &self.offsets[symbol];
        let mut idx = 0;
        for (i, c) in x.coords().iter().enumerate() {
            let cell = ((self.k as f64) * (c - o[i]))
                .floor()
                .rem_euclid(self.k as f64) as usize;
            idx = idx * self.k + cell.min(self.k - 1);
        }
        idx
    }

    pub fn cardinality(&self) -> usize {
        self.k.pow(self.dim as u32)
    }

    /// Euclidean diameter of one box.
    pub fn cell_diameter(&self) -> f64 {
        (self.dim as f64).sqrt() / self.k as f64
    }

    /// Lifted slabs of the box of `α_ω` containing the lifted point `y`.
    pub(crate) fn slabs(&self, symbol: usize, y: &[f64]) -> Vec<Slab> {
        let o = &self.offsets[symbol];
        let w = 1.0 / self.k as f64;
        y.iter()
            .enumerate()
            .map(|(i, c)| Slab {
                lo: o[i] + ((c - o[i]) * self.k as f64).floor() * w,
                width: w,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionPair {
    pub alpha: GridPartition,
    /// Radius of the disks `η` is cut from.
    pub delta: f64,
    /// `K(ω_0)`: cardinality of `α_ω` per symbol.
    pub cardinality: Vec<usize>,
}

/// Random per-symbol grid partitions of side `1/grid_k` and the leaf
/// partition from disks of radius `delta`. `grid_k = 1` gives the trivial
/// partition.
pub fn build_partition_pair(
    system: &DrivingSystem,
    dim: usize,
    delta: f64,
    grid_k: usize,
    offset_seed: u64,
) -> Result<PartitionPair> {
    if grid_k == 0 {
        return Err(Error::InvalidArgument("grid_k must be positive".into()));
    }
    if !(2..=3).contains(&dim) {
        return Err(Error::InvalidArgument(format!("dimension {dim}")));
    }
    let alpha = {
        let mut rng = rng_from_seed(derive_seed(offset_seed, 7));
        let offsets = (0..system.symbol_count())
            .map(|_| {
                let mut o = [0.0; 3];
                for v in o.iter_mut().take(dim) {
                    *v = rng.random::<f64>() / grid_k as f64;
                }
                o
            })
            .collect();
        GridPartition {
            k: grid_k,
            dim,
            offsets,
        }
    };
    if grid_k > 1 && delta <= alpha.cell_diameter() {
        return Err(Error::DiskTooSmall(format!(
            "disk radius {delta} does not exceed the cell diameter {:.4}",
            alpha.cell_diameter()
        )));
    }
    let cardinality = vec![alpha.cardinality(); system.symbol_count()];
    Ok(PartitionPair {
        alpha,
        delta,
        cardinality,
    })
}

/// Intersection of sorted disjoint interval lists.
pub(crate) fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Parameters `t` in the pieces with `y + t·e` inside the lifted box of
/// `slabs` modulo `Z^d`.
pub(crate) fn restrict_to_box(
    pieces: &[(f64, f64)],
    y: &[f64],
    e: &[f64],
    slabs: &[Slab],
) -> Vec<(f64, f64)> {
    let mut current = pieces.to_vec();
    for ((yi, ei), slab) in y.iter().zip(e).zip(slabs) {
        if ei.abs() < 1e-300 || current.is_empty() {
            continue;
        }
        let mut allowed = Vec::new();
        for &(a, b) in &current {
            let (za, zb) = (yi + a * ei, yi + b * ei);
            let (zmin, zmax) = (za.min(zb), za.max(zb));
            let m0 = (zmin - slab.lo).floor() as i64;
            let m1 = (zmax - slab.lo).floor() as i64;
            for m in m0..=m1 {
                let lo = slab.lo + m as f64;
                let (t0, t1) = ((lo - yi) / ei, (lo + slab.width - yi) / ei);
                let (t0, t1) = (t0.min(t1), t0.max(t1));
                let (lo, hi) = (t0.max(a), t1.min(b));
                if hi > lo {
                    allowed.push((lo, hi));
                }
            }
        }
        allowed.sort_by(|p, q| p.0.total_cmp(&q.0));
        current = intersect(&current, &merge(allowed));
    }
    current
}

fn merge(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Samples along curved charts when locating `η` boundaries.
const CURVE_SAMPLES: usize = 2048;

impl PartitionPair {
    /// `η(ω, x)` as a chart-parameter interval of a u = 1 disk centred at
    /// `x`: the connected piece of the disk inside `α_ω(x)` containing `x`.
    pub fn eta_interval(&self, disk: &UnstableDisk, symbol: usize) -> Result<(f64, f64)> {
        let r = disk.radius();
        if self.alpha.k == 1 {
            return Ok((-r, r));
        }
        let x = disk.base().point;
        if disk.is_affine() {
            let e: Vec<f64> = disk.frame()[0][..x.dim()].to_vec();
            let slabs = self.alpha.slabs(symbol, x.coords());
            let pieces = restrict_to_box(&[(-r, r)], x.coords(), &e, &slabs);
            return pieces
                .into_iter()
                .find(|(a, b)| *a <= 0.0 && 0.0 <= *b)
                .ok_or(Error::EmptyRefinedAtom(0));
        }
        let target = self.alpha.atom(symbol, &x);
        let h = r / CURVE_SAMPLES as f64;
        let edge = |sign: f64| {
            let mut inside = 0.0;
            for i in 1..=CURVE_SAMPLES {
                let s = sign * h * i as f64;
                if self.alpha.atom(symbol, &disk.chart(&[s])) != target {
                    let (mut lo, mut hi) = (inside, s);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if self.alpha.atom(symbol, &disk.chart(&[mid])) == target {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    return lo;
                }
                inside = s;
            }
            sign * r
        };
        Ok((edge(-1.0), edge(1.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leafgeom::unstable_disk;
    use crate::oseledets::lyapunov_spectrum;
    use crate::rds::{cat_cocycle, SkewState, SymbolPath};

    #[test]
    fn grid_counts_and_cover() {
        let system = DrivingSystem::trivial(0);
        let pair = build_partition_pair(&system, 2, 0.25, 4, 3);
        // radius 0.25 is below the diameter √2/4 of a 4-grid cell
        assert!(matches!(pair, Err(Error::DiskTooSmall(_))));
        let alpha = GridPartition {
            k: 4,
            dim: 2,
            offsets: vec![[0.05, 0.1, 0.0]],
        };
        assert_eq!(alpha.cardinality(), 16);
        let mut seen = vec![0usize; 16];
        for i in 0..200 {
            for j in 0..200 {
                let p = TorusPoint::new(&[(i as f64 + 0.5) / 200.0, (j as f64 + 0.5) / 200.0]);
                seen[alpha.atom(0, &p)] += 1;
            }
        }
        // a genuine partition: every atom hit with its share of the grid
        assert!(seen.iter().all(|c| *c == 2500));
    }

    #[test]
    fn offsets_move_boundaries_not_counts() {
        let system = DrivingSystem::iid(vec![0.5, 0.5], 0).unwrap();
        let a = build_partition_pair(&system, 2, 0.25, 6, 1).unwrap();
        let b = build_partition_pair(&system, 2, 0.25, 6, 2).unwrap();
        assert_ne!(a.alpha.offsets, b.alpha.offsets);
        assert_eq!(a.cardinality, vec![36, 36]);
        assert_eq!(a.cardinality, b.cardinality);
    }

    #[test]
    fn eta_is_the_maximal_piece_in_one_cell() {
        let cocycle = cat_cocycle();
        let path = SymbolPath::constant(0, 1000);
        let x = TorusPoint::new(&[0.43, 0.61]);
        let rep = lyapunov_spectrum(&cocycle, &path, &x, 200).unwrap();
        let disk = unstable_disk(&cocycle, &SkewState::new(path, x), 0.25, &rep).unwrap();
        let pair = build_partition_pair(&DrivingSystem::trivial(0), 2, 0.25, 6, 11).unwrap();
        let (a, b) = pair.eta_interval(&disk, 0).unwrap();
        assert!(a < 0.0 && b > 0.0 && b - a <= pair.alpha.cell_diameter());
        let target = pair.alpha.atom(0, &x);
        for i in 0..=100 {
            let s = a + (b - a) * (i as f64 + 0.5) / 101.0;
            assert_eq!(pair.alpha.atom(0, &disk.chart(&[s])), target);
        }
        // just outside on either side the cell changes
        assert_ne!(pair.alpha.atom(0, &disk.chart(&[a - 1e-9])), target);
        assert_ne!(pair.alpha.atom(0, &disk.chart(&[b + 1e-9])), target);
    }

    #[test]
    fn interval_splitting_of_a_segment() {
        // horizontal segment of length 0.2 centred at 0.5 across a 10-grid
        let slabs = vec![
            Slab {
                lo: 0.5,
                width: 0.1,
            },
            Slab {
                lo: 0.2,
                width: 0.1,
            },
        ];
        let pieces = restrict_to_box(&[(-0.1, 0.1)], &[0.55, 0.25], &[1.0, 0.0], &slabs);
        assert_eq!(pieces.len(), 1);
        assert!((pieces[0].0 + 0.05).abs() < 1e-12 && (pieces[0].1 - 0.05).abs() < 1e-12);
        // a long segment wraps into the same cell modulo 1
        let pieces = restrict_to_box(&[(-1.0, 1.0)], &[0.55, 0.25], &[1.0, 0.0], &slabs);
        assert_eq!(pieces.len(), 3);
    }
}
