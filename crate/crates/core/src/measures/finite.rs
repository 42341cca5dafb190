//! Finite skew products with exact conditional information.
//!
//! Points are pairs `(ω, i)` with `ω` an atom of the base and `i` an atom of
//! the fiber over it. `Θ` permutes the points fiber-to-fiber, and the
//! invariant measures are exactly the mass vectors constant on `Θ`-orbits.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rds::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSkewSpace {
    /// Base atoms in `θ`-order: `θ(k) = k + 1 mod w` (one cycle).
    fiber_sizes: Vec<usize>,
    /// `maps[k][i]` = index in fiber `k+1` of `f_{ω_k}(i)`.
    maps: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    masses: Vec<f64>,
}

/// A partition of the finite space as a label per point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }.canonical()
    }

    pub fn trivial(points: usize) -> Self {
        Self {
            labels: vec![0; points],
        }
    }

    pub fn discrete(points: usize) -> Self {
        Self {
            labels: (0..points).collect(),
        }
    }

    /// Relabels atoms `0, 1, …` in order of first appearance.
    fn canonical(self) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = self
            .labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn atoms(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// `α ∨ β`.
    pub fn join(&self, other: &Partition) -> Partition {
        let width = other.atoms().max(1);
        Partition::new(
            self.labels
                .iter()
                .zip(&other.labels)
                .map(|(a, b)| a * width + b)
                .collect(),
        )
    }

    /// True if every atom of `self` lies inside an atom of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let mut seen = std::collections::HashMap::new();
        self.labels
            .iter()
            .zip(&coarser.labels)
            .all(|(a, b)| *seen.entry(*a).or_insert(*b) == *b)
    }
}

impl FiniteSkewSpace {
    /// Builds a space from fiber sizes (all equal along the single base
    /// cycle), fiber bijections and an invariant mass vector.
    pub fn new(maps: Vec<Vec<usize>>, masses: Vec<f64>) -> Result<Self> {
        let w = maps.len();
        if w == 0 {
            return Err(Error::InvalidArgument(
                "a finite skew space needs a base atom".into(),
            ));
        }
        let m = maps[0].len();
        for map in &maps {
            let mut sorted = map.clone();
            sorted.sort_unstable();
            if sorted != (0..m).collect::<Vec<_>>() {
                return Err(Error::InvalidArgument(
                    "fiber maps must be bijections".into(),
                ));
            }
        }
        let fiber_sizes = vec![m; w];
        let offsets = (0..w).map(|k| k * m).collect();
        let mut space = Self {
            fiber_sizes,
            maps,
            offsets,
            masses: Vec::new(),
        };
        space.set_masses(masses)?;
        Ok(space)
    }

    /// Replaces the invariant measure.
    pub fn set_masses(&mut self, masses: Vec<f64>) -> Result<()> {
        if masses.len() != self.points() {
            return Err(Error::InvalidArgument("mass vector length".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) || (masses.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(
                "point masses must be nonnegative and sum to 1".into(),
            ));
        }
        for p in 0..masses.len() {
            if (masses[self.theta(p)] - masses[p]).abs() > 1e-14 {
                return Err(Error::InvalidDistribution(
                    "masses are not Θ-invariant".into(),
                ));
            }
        }
        self.masses = masses;
        Ok(())
    }

    pub fn with_masses(&self, masses: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.set_masses(masses)?;
        Ok(out)
    }

    pub fn points(&self) -> usize {
        self.fiber_sizes.iter().sum()
    }

    pub fn base_atoms(&self) -> usize {
        self.fiber_sizes.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Base atom of a point.
    pub fn omega(&self, p: usize) -> usize {
        self.offsets
            .iter()
            .rposition(|&o| o <= p)
            .expect("offset 0 exists")
    }

    /// `Θ(ω, i) = (θω, f_ω i)`.
    pub fn theta(&self, p: usize) -> usize {
        let k = self.omega(p);
        let i = p - self.offsets[k];
        let next = (k + 1) % self.base_atoms();
        self.offsets[next] + self.maps[k][i]
    }

    pub fn theta_pow(&self, p: usize, n: i64) -> usize {
        let mut q = p;
        if n >= 0 {
            for _ in 0..n {
                q = self.theta(q);
            }
        } else {
            let inv = self.theta_inverse_table();
            for _ in 0..-n {
                q = inv[q];
            }
        }
        q
    }

    fn theta_inverse_table(&self) -> Vec<usize> {
        let mut inv = vec![0; self.points()];
        for p in 0..self.points() {
            inv[self.theta(p)] = p;
        }
        inv
    }

    /// `Θ`-orbits as lists of points.
    pub fn orbits(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.points()];
        let mut out = Vec::new();
        for start in 0..self.points() {
            if seen[start] {
                continue;
            }
            let mut orbit = Vec::new();
            let mut p = start;
            while !seen[p] {
                seen[p] = true;
                orbit.push(p);
                p = self.theta(p);
            }
            out.push(orbit);
        }
        out
    }

    /// Partition into fibers (the σ-algebra of the base).
    pub fn base_partition(&self) -> Partition {
        Partition::new((0..self.points()).map(|p| self.omega(p)).collect())
    }

    /// `Θ^{-k} α`: `p ↦ α(Θ^k p)`.
    pub fn preimage(&self, alpha: &Partition, k: i64) -> Partition {
        Partition::new(
            (0..self.points())
                .map(|p| alpha.labels[self.theta_pow(p, k)])
                .collect(),
        )
    }

    /// `Θ^k α`: `p ↦ α(Θ^{-k} p)`.
    pub fn image(&self, alpha: &Partition, k: i64) -> Partition {
        self.preimage(alpha, -k)
    }

    /// `α_0^{n-1} = ⋁_{i<n} Θ^{-i} α`.
    pub fn refine(&self, alpha: &Partition, n: usize) -> Partition {
        (1..n).fold(alpha.clone(), |acc, i| {
            acc.join(&self.preimage(alpha, i as i64))
        })
    }

    /// `I_μ(α|γ)(p) = −log μ(α(p) ∩ γ(p)) / μ(γ(p))`.
    pub fn information(&self, alpha: &Partition, gamma: &Partition) -> Result<Vec<f64>> {
        let joint = alpha.join(gamma);
        let mut mass_joint = vec![0.0; joint.atoms()];
        let mut mass_gamma = vec![0.0; gamma.atoms()];
        for p in 0..self.points() {
            mass_joint[joint.labels[p]] += self.masses[p];
            mass_gamma[gamma.labels[p]] += self.masses[p];
        }
        (0..self.points())
            .map(|p| {
                let g = mass_gamma[gamma.labels[p]];
                if g <= 0.0 {
                    if self.masses[p] == 0.0 {
                        return Ok(0.0);
                    }
                    return Err(Error::ZeroProbabilityAtom);
                }
                let a = mass_joint[joint.labels[p]];
                Ok(if a > 0.0 { -(a / g).ln() } else { 0.0 })
            })
            .collect()
    }

    /// `H_μ(α|γ) = ∫ I_μ(α|γ) dμ`.
    pub fn entropy(&self, alpha: &Partition, gamma: &Partition) -> Result<f64> {
        let info = self.information(alpha, gamma)?;
        Ok(info.iter().zip(&self.masses).map(|(i, m)| i * m).sum())
    }

    /// Random space with at most `max_points` points, a random invariant
    /// measure with positive masses.
    pub fn random<R: Rng>(rng: &mut R, max_points: usize) -> Self {
        let max_points = max_points.max(1);
        let w = rng.random_range(1..=max_points.min(3));
        let m = rng.random_range(1..=(max_points / w).max(1));
        let maps: Vec<Vec<usize>> = (0..w)
            .map(|_| {
                let mut v: Vec<usize> = (0..m).collect();
                v.shuffle(rng);
                v
            })
            .collect();
        let shell = Self {
            fiber_sizes: vec![m; w],
            offsets: (0..w).map(|k| k * m).collect(),
            maps: maps.clone(),
            masses: vec![0.0; w * m],
        };
        let masses = shell.random_invariant_masses(rng);
        Self::new(maps, masses).expect("construction is invariant by design")
    }

    /// Random positive mass vector constant on `Θ`-orbits.
    pub fn random_invariant_masses<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let orbits = self.orbits();
        let weights: Vec<f64> = orbits.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = orbits
            .iter()
            .zip(&weights)
            .map(|(o, w)| o.len() as f64 * w)
            .sum();
        let mut masses = vec![0.0; self.points()];
        for (o, w) in orbits.iter().zip(&weights) {
            for &p in o {
                masses[p] = w / total;
            }
        }
        masses
    }

    pub fn random_partition<R: Rng>(&self, rng: &mut R, max_atoms: usize) -> Partition {
        let r = rng.random_range(1..=max_atoms.max(1));
        Partition::new((0..self.points()).map(|_| rng.random_range(0..r)).collect())
    }
}

/// Largest violation of each information identity over random spaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub worst: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub spaces: usize,
    pub tolerance: f64,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Tolerance for the exact identities.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Checks refinement monotonicity, the chain rule, subadditivity,
/// anti-monotonicity in the conditioning partition, the telescoping
/// formula for `H(β_0^{n-1}|γ)` and concavity of `μ ↦ H_μ(α|γ)` on
/// `spaces` random finite skew spaces with at most `max_points` points.
pub fn information_identities(
    spaces: usize,
    max_points: usize,
    seed: u64,
) -> Result<IdentityReport> {
    let mut rng = rng_from_seed(seed);
    let names = [
        "refinement-monotone",
        "chain-rule",
        "subadditive",
        "conditioning-antimonotone",
        "telescoping",
        "concavity",
    ];
    let mut worst = [0.0f64; 6];
    for _ in 0..spaces {
        let sp = FiniteSkewSpace::random(&mut rng, max_points);
        let n_pts = sp.points();
        let alpha = sp.random_partition(&mut rng, 4);
        let beta = sp.random_partition(&mut rng, 4);
        let gamma = sp.random_partition(&mut rng, 3);

        // (i) α ≤ α∨β: pointwise I and H
        let fine = alpha.join(&beta);
        let ia = sp.information(&alpha, &gamma)?;
        let ifine = sp.information(&fine, &gamma)?;
        for p in 0..n_pts {
            worst[0] = worst[0].max(ia[p] - ifine[p]);
        }
        worst[0] = worst[0].max(sp.entropy(&alpha, &gamma)? - sp.entropy(&fine, &gamma)?);

        // (ii) chain rule, pointwise and integrated
        let ib_ag = sp.information(&beta, &alpha.join(&gamma))?;
        for p in 0..n_pts {
            worst[1] = worst[1].max((ifine[p] - ia[p] - ib_ag[p]).abs());
        }
        let h_chain = sp.entropy(&fine, &gamma)?
            - sp.entropy(&alpha, &gamma)?
            - sp.entropy(&beta, &alpha.join(&gamma))?;
        worst[1] = worst[1].max(h_chain.abs());

        // (iii) subadditivity
        worst[2] = worst[2].max(
            sp.entropy(&fine, &gamma)? - sp.entropy(&alpha, &gamma)? - sp.entropy(&beta, &gamma)?,
        );

        // (iv) conditioning on a finer partition lowers H
        let finer_cond = gamma.join(&beta);
        worst[3] = worst[3].max(sp.entropy(&alpha, &finer_cond)? - sp.entropy(&alpha, &gamma)?);

        // telescoping H(β_0^{n-1}|γ) = H(β|γ) + Σ_i H(β | Θ^i(β_0^{i-1} ∨ γ))
        for n in 1..=4usize {
            let lhs = sp.entropy(&sp.refine(&beta, n), &gamma)?;
            let mut rhs = sp.entropy(&beta, &gamma)?;
            for i in 1..n {
                let cond = sp.image(&sp.refine(&beta, i).join(&gamma), i as i64);
                rhs += sp.entropy(&beta, &cond)?;
            }
            worst[4] = worst[4].max((lhs - rhs).abs());
            // pointwise form at Θ^i p
            let il = sp.information(&sp.refine(&beta, n), &gamma)?;
            let ib = sp.information(&beta, &gamma)?;
            let terms: Vec<Vec<f64>> = (1..n)
                .map(|i| {
                    sp.information(
                        &beta,
                        &sp.image(&sp.refine(&beta, i).join(&gamma), i as i64),
                    )
                })
                .collect::<Result<_>>()?;
            for p in 0..n_pts {
                let mut r = ib[p];
                for (t, i) in terms.iter().zip(1..n) {
                    r += t[sp.theta_pow(p, i as i64)];
                }
                worst[4] = worst[4].max((il[p] - r).abs());
            }
        }

        // concavity of μ ↦ H_μ(α|γ) between two invariant measures
        let m1 = sp.masses().to_vec();
        let m2 = sp.random_invariant_masses(&mut rng);
        let mid: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| 0.5 * (a + b)).collect();
        let s2 = sp.with_masses(m2)?;
        let smid = sp.with_masses(mid)?;
        let h1 = sp.entropy(&alpha, &gamma)?;
        let h2 = s2.entropy(&alpha, &gamma)?;
        let hm = smid.entropy(&alpha, &gamma)?;
        worst[5] = worst[5].max(0.5 * (h1 + h2) - hm);
    }
    Ok(IdentityReport {
        spaces,
        tolerance: IDENTITY_TOL,
        checks: names
            .iter()
            .zip(worst)
            .map(|(n, w)| IdentityCheck {
                name: n.to_string(),
                worst: w,
                pass: w <= IDENTITY_TOL,
            })
            .collect(),
    })
}

/// `I` and `H` tables for a pair of partitions.
pub fn conditional_information(
    space: &FiniteSkewSpace,
    alpha: &Partition,
    eta: &Partition,
) -> Result<(Vec<f64>, f64)> {
    let info = space.information(alpha, eta)?;
    let h = info.iter().zip(space.masses()).map(|(i, m)| i * m).sum();
    Ok((info, h))
}
