//! Closest-vector search: LLL preprocessing followed by Schnorr-Euchner
//! depth-first enumeration with adaptive radius shrinking.
//!
//! The search is exact: the first leaf reached is the Babai point, every
//! later leaf shrinks the radius, and the tree is exhausted unless the node
//! budget runs out. Among equidistant points the one whose integer vector is
//! lexicographically smallest wins.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{RMatrix, RVector};

/// Default node-visit budget for one search.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

const LLL_DELTA: f64 = 0.99;

/// Initial search radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusPolicy {
    /// Unbounded; the first leaf (the Babai point) sets the radius.
    Babai,
    /// Only points with squared distance at most this value are considered.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub budget: u64,
    pub radius: RadiusPolicy,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            radius: RadiusPolicy::Babai,
        }
    }
}

impl SearchConfig {
    pub fn unbounded() -> Self {
        Self {
            budget: u64::MAX,
            radius: RadiusPolicy::Babai,
        }
    }
}

/// Result of a completed search.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosestPoint {
    /// Integer coordinates in the caller's basis.
    pub z: Vec<i64>,
    /// `|target - basis z|^2`.
    pub distance_sq: f64,
    /// Enumeration nodes visited.
    pub nodes: u64,
}

/// A basis prepared for repeated closest-point queries.
#[derive(Debug, Clone)]
pub struct PreparedBasis {
    basis: RMatrix,
    /// `reduced = basis * unimodular`.
    unimodular: Vec<Vec<i64>>,
    q_t: RMatrix,
    r: RMatrix,
}

impl PreparedBasis {
    /// LLL-reduces `basis` (columns are generators) and factors it.
    pub fn new(basis: &RMatrix) -> Result<Self> {
        let (m, n) = basis.shape();
        if n == 0 || m < n {
            return Err(Error::Argument(format!(
                "basis must have full column rank, got {m}x{n}"
            )));
        }
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("basis has non-finite entries".into()));
        }
        let unimodular = lll_reduce(basis);
        let u = RMatrix::from_fn(n, n, |i, j| unimodular[j][i] as f64);
        let reduced = basis * u;
        let qr = reduced.qr();
        let r = qr.r();
        let q_t = qr.q().transpose();
        let scale = r.diagonal().amax().max(f64::MIN_POSITIVE);
        if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
            return Err(Error::Argument("basis is rank deficient".into()));
        }
        Ok(Self {
            basis: basis.clone(),
            unimodular,
            q_t,
            r,
        })
    }

    pub fn basis(&self) -> &RMatrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Integer `z` minimizing `|target - basis z|`.
    pub fn closest(&self, target: &RVector, cfg: SearchConfig) -> Result<ClosestPoint> {
        if target.len() != self.basis.nrows() {
            return Err(Error::Argument(format!(
                "target has length {}, basis has {} rows",
                target.len(),
                self.basis.nrows()
            )));
        }
        let n = self.dim();
        let y = &self.q_t * target;
        let r = &self.r;

        let mut best_sq = match cfg.radius {
            RadiusPolicy::Babai => f64::INFINITY,
            RadiusPolicy::Fixed(r2) => {
                // distances below are measured in the projected space
                r2 - (target.norm_squared() - y.norm_squared()).max(0.0)
            }
        };
        let mut best: Option<Vec<i64>> = None;
        let mut nodes = 0u64;

        let mut zr = vec![0i64; n];
        let mut center = vec![0f64; n];
        let mut dz = vec![0i64; n];
        let mut ddz = vec![0i64; n];
        let mut partial = vec![0f64; n + 1];

        let set_level = |i: usize, zr: &mut [i64], center: &mut [f64], dz: &mut [i64], ddz: &mut [i64]| {
            let mut s = y[i];
            for j in i + 1..n {
                s -= r[(i, j)] * zr[j] as f64;
            }
            let c = s / r[(i, i)];
            center[i] = c;
            zr[i] = c.round() as i64;
            let step = if c >= zr[i] as f64 { 1 } else { -1 };
            dz[i] = step;
            ddz[i] = step;
        };

        let mut i = n - 1;
        set_level(i, &mut zr, &mut center, &mut dz, &mut ddz);
        loop {
            nodes += 1;
            if nodes > cfg.budget {
                return Err(Error::SearchBudget {
                    budget: cfg.budget,
                    best: best.unwrap_or_else(|| self.to_caller(&zr)),
                });
            }
            let diff = zr[i] as f64 - center[i];
            let d = partial[i + 1] + r[(i, i)] * r[(i, i)] * diff * diff;
            let tol = 1e-10 * (1.0 + best_sq.abs().min(1e300));
            if d <= best_sq + tol {
                if i == 0 {
                    let z = self.to_caller(&zr);
                    let accept = match &best {
                        None => d <= best_sq + tol,
                        Some(bz) => d < best_sq - tol || (d <= best_sq + tol && lex_less(&z, bz)),
                    };
                    if accept {
                        best_sq = if best.is_none() { d } else { best_sq.min(d) };
                        best = Some(z);
                    }
                    next_sibling(0, &mut zr, &mut dz, &mut ddz);
                } else {
                    partial[i] = d;
                    i -= 1;
                    set_level(i, &mut zr, &mut center, &mut dz, &mut ddz);
                }
            } else {
                if i == n - 1 {
                    break;
                }
                i += 1;
                next_sibling(i, &mut zr, &mut dz, &mut ddz);
            }
        }

        let z = best.ok_or_else(|| {
            Error::Numerical("no lattice point inside the fixed search radius".into())
        })?;
        let zf = RVector::from_iterator(n, z.iter().map(|&v| v as f64));
        let distance_sq = (target - &self.basis * zf).norm_squared();
        Ok(ClosestPoint {
            z,
            distance_sq,
            nodes,
        })
    }

    fn to_caller(&self, zr: &[i64]) -> Vec<i64> {
        let n = zr.len();
        let mut z = vec![0i64; n];
        for (j, &c) in zr.iter().enumerate() {
            if c != 0 {
                for i in 0..n {
                    z[i] += self.unimodular[j][i] * c;
                }
            }
        }
        z
    }
}

fn next_sibling(i: usize, zr: &mut [i64], dz: &mut [i64], ddz: &mut [i64]) {
    zr[i] += dz[i];
    ddz[i] = -ddz[i];
    dz[i] = ddz[i] - dz[i];
}

fn lex_less(a: &[i64], b: &[i64]) -> bool {
    a.cmp(b) == Ordering::Less
}

/// Closest lattice point to `target` in the lattice generated by the columns
/// of `basis`.
pub fn sphere_decode(basis: &RMatrix, target: &RVector, cfg: SearchConfig) -> Result<ClosestPoint> {
    PreparedBasis::new(basis)?.closest(target, cfg)
}

/// LLL reduction of the columns of `basis`. Returns the unimodular transform
/// as columns: reduced column `j` is `sum_i basis_i * u[j][i]`.
pub fn lll_reduce(basis: &RMatrix) -> Vec<Vec<i64>> {
    let n = basis.ncols();
    let mut b: Vec<RVector> = (0..n).map(|j| basis.column(j).into_owned()).collect();
    let mut u: Vec<Vec<i64>> = (0..n)
        .map(|j| (0..n).map(|i| i64::from(i == j)).collect())
        .collect();
    if n < 2 {
        return u;
    }

    let mut mu = vec![vec![0f64; n]; n];
    let mut bstar = vec![0f64; n];
    gram_schmidt(&b, &mut mu, &mut bstar);

    let mut k = 1;
    let mut iterations = 0usize;
    let max_iterations = 100_000 + 1000 * n * n;
    while k < n && iterations < max_iterations {
        iterations += 1;
        size_reduce(k, &mut b, &mut u, &mut mu);
        let m = mu[k][k - 1];
        if bstar[k] >= (LLL_DELTA - m * m) * bstar[k - 1] {
            k += 1;
            continue;
        }
        b.swap(k, k - 1);
        u.swap(k, k - 1);
        let big_b = bstar[k] + m * m * bstar[k - 1];
        if big_b <= 0.0 {
            gram_schmidt(&b, &mut mu, &mut bstar);
        } else {
            let new_m = m * bstar[k - 1] / big_b;
            mu[k][k - 1] = new_m;
            bstar[k] = bstar[k - 1] * bstar[k] / big_b;
            bstar[k - 1] = big_b;
            for j in 0..k - 1 {
                let t = mu[k - 1][j];
                mu[k - 1][j] = mu[k][j];
                mu[k][j] = t;
            }
            for row in mu.iter_mut().skip(k + 1) {
                let t = row[k];
                row[k] = row[k - 1] - m * t;
                row[k - 1] = t + new_m * row[k];
            }
        }
        k = k.saturating_sub(1).max(1);
    }
    u
}

fn gram_schmidt(b: &[RVector], mu: &mut [Vec<f64>], bstar: &mut [f64]) {
    let n = b.len();
    let mut star: Vec<RVector> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = b[i].clone();
        for j in 0..i {
            let m = if bstar[j] > 0.0 {
                b[i].dot(&star[j]) / bstar[j]
            } else {
                0.0
            };
            mu[i][j] = m;
            v -= &star[j] * m;
        }
        bstar[i] = v.norm_squared();
        star.push(v);
    }
}

fn size_reduce(k: usize, b: &mut [RVector], u: &mut [Vec<i64>], mu: &mut [Vec<f64>]) {
    for j in (0..k).rev() {
        let q = mu[k][j].round();
        if q == 0.0 {
            continue;
        }
        let bj = b[j].clone();
        b[k] -= bj * q;
        let qi = q as i64;
        for i in 0..u[k].len() {
            u[k][i] -= qi * u[j][i];
        }
        mu[k][j] -= q;
        for i in 0..j {
            mu[k][i] -= q * mu[j][i];
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over the box `|z_i| <= bound`, lexicographic ties.
    pub(crate) fn brute_force(basis: &RMatrix, target: &RVector, bound: i64) -> (Vec<i64>, f64) {
        let n = basis.ncols();
        let mut z = vec![-bound; n];
        let mut best = (z.clone(), f64::INFINITY);
        loop {
            let zf = RVector::from_iterator(n, z.iter().map(|&v| v as f64));
            let d = (target - basis * zf).norm_squared();
            if d < best.1 - 1e-9 || ((d - best.1).abs() <= 1e-9 && z < best.0) {
                best = (z.clone(), d);
            }
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if z[i] < bound {
                    z[i] += 1;
                    break;
                }
                z[i] = -bound;
            }
        }
    }

    #[test]
    fn identity_rounds_to_nearest() {
        let p = sphere_decode(
            &RMatrix::identity(2, 2),
            &RVector::from_vec(vec![0.3, -0.7]),
            SearchConfig::default(),
        )
        .unwrap();
        assert_eq!(p.z, vec![0, -1]);
    }

    #[test]
    fn exact_lattice_point_is_recovered() {
        let basis = RMatrix::from_row_slice(3, 3, &[2.0, 0.3, -1.0, 0.1, 1.7, 0.4, 0.0, 0.5, 3.0]);
        let z0 = [3.0, -2.0, 5.0];
        let t = &basis * RVector::from_row_slice(&z0);
        let p = sphere_decode(&basis, &t, SearchConfig::default()).unwrap();
        assert_eq!(p.z, vec![3, -2, 5]);
        assert!(p.distance_sq < 1e-18);
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let p = sphere_decode(
            &RMatrix::identity(2, 2),
            &RVector::from_vec(vec![0.5, -0.5]),
            SearchConfig::default(),
        )
        .unwrap();
        assert_eq!(p.z, vec![0, -1]);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let n = rng.random_range(2..=4);
            let basis = RMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0 + rng.random::<f64>()
                } else {
                    rng.random_range(-0.6..0.6)
                }
            });
            let t = RVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let p = sphere_decode(&basis, &t, SearchConfig::default()).unwrap();
            let (bz, bd) = brute_force(&basis, &t, 6);
            assert_eq!(p.z, bz);
            assert!((p.distance_sq - bd).abs() < 1e-9);
        }
    }

    #[test]
    fn lll_keeps_lattice_and_shortens_basis() {
        let basis = RMatrix::from_row_slice(2, 2, &[1.0, 100.0, 0.0, 1.0]);
        let u = lll_reduce(&basis);
        let um = RMatrix::from_fn(2, 2, |i, j| u[j][i] as f64);
        assert!((um.determinant().abs() - 1.0).abs() < 1e-12);
        let reduced = &basis * um;
        assert!(reduced.column(0).norm() < 2.0 && reduced.column(1).norm() < 2.0);
    }

    #[test]
    fn budget_exhaustion_reports_best_so_far() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = RMatrix::from_fn(12, 12, |_, _| rng.random_range(-1.0..1.0));
        let t = RVector::from_fn(12, |_, _| rng.random_range(-5.0..5.0));
        let cfg = SearchConfig {
            budget: 3,
            radius: RadiusPolicy::Babai,
        };
        match sphere_decode(&basis, &t, cfg) {
            Err(Error::SearchBudget { budget, best }) => {
                assert_eq!(budget, 3);
                assert_eq!(best.len(), 12);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn fixed_radius_without_points_fails() {
        let cfg = SearchConfig {
            budget: DEFAULT_BUDGET,
            radius: RadiusPolicy::Fixed(0.01),
        };
        let r = sphere_decode(&RMatrix::identity(2, 2), &RVector::from_vec(vec![0.5, 0.5]), cfg);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn rank_deficient_basis_is_rejected() {
        let basis = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(PreparedBasis::new(&basis).is_err());
    }
}
