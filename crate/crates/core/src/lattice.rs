//! Construction-A lattices, self-similar nested codes and mod-lattice algebra.
//!
//! A coding lattice is `gamma * {z in Z^n : z mod p in C}` for a linear
//! `(n, k)` code `C` over `Z_p`; its shaping lattice is `tau` times the coding
//! lattice. Codewords are coset leaders of the partition, indexed by integer
//! vectors with entries in `0..tau`.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{RMatrix, RVector};
use crate::sphere::{PreparedBasis, SearchConfig};

/// Number of dither samples used to estimate the shaping second moment.
pub const NORMALIZATION_SAMPLES: usize = 100_000;

/// Per-dimension second moment every shaping lattice is scaled to.
pub const TARGET_SECOND_MOMENT: f64 = 0.5;

/// A point of a lattice together with its integer coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    pub coords: RVector,
    /// `coords = basis * z`.
    pub z: Vec<i64>,
}

/// A full-rank lattice prepared for closest-point queries.
#[derive(Debug, Clone)]
pub struct Lattice {
    prepared: PreparedBasis,
    inverse: RMatrix,
}

impl Lattice {
    pub fn new(basis: RMatrix) -> Result<Self> {
        if !basis.is_square() {
            return Err(Error::Argument("lattice basis must be square".into()));
        }
        let prepared = PreparedBasis::new(&basis)?;
        let inverse = basis
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Argument("lattice basis is singular".into()))?;
        Ok(Self { prepared, inverse })
    }

    /// The integer lattice `Z^n`.
    pub fn integer(n: usize) -> Self {
        Self::new(RMatrix::identity(n, n)).expect("identity basis is valid")
    }

    pub fn basis(&self) -> &RMatrix {
        self.prepared.basis()
    }

    pub fn dim(&self) -> usize {
        self.prepared.dim()
    }

    /// Fundamental volume `|det basis|`.
    pub fn volume(&self) -> f64 {
        self.basis().determinant().abs()
    }

    /// Nearest lattice point (Euclidean), lexicographic tie-breaking on `z`.
    pub fn quantize(&self, y: &RVector) -> LatticePoint {
        let cp = self
            .prepared
            .closest(y, SearchConfig::unbounded())
            .expect("unbounded search on a prepared basis cannot fail");
        let zf = RVector::from_iterator(cp.z.len(), cp.z.iter().map(|&v| v as f64));
        LatticePoint {
            coords: self.basis() * zf,
            z: cp.z,
        }
    }

    /// `y - Q(y)`, the representative of `y` in the Voronoi region.
    pub fn mod_lattice(&self, y: &RVector) -> RVector {
        y - self.quantize(y).coords
    }

    /// Real coordinates of `y` in this basis.
    pub fn coordinates(&self, y: &RVector) -> RVector {
        &self.inverse * y
    }

    /// Integer coordinates of `y` if it lies on the lattice within `tol`.
    pub fn integer_coordinates(&self, y: &RVector, tol: f64) -> Option<Vec<i64>> {
        let c = self.coordinates(y);
        let z: Vec<i64> = c.iter().map(|v| v.round() as i64).collect();
        c.iter()
            .zip(&z)
            .all(|(v, &r)| (v - r as f64).abs() <= tol)
            .then_some(z)
    }

    /// A sample uniform over the Voronoi region: a uniform point of the
    /// fundamental parallelepiped reduced mod the lattice.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> RVector {
        let v = RVector::from_fn(self.dim(), |_, _| rng.random::<f64>());
        self.mod_lattice(&(self.basis() * v))
    }

    /// Monte Carlo estimate of the per-dimension second moment `E|u|^2 / n`.
    pub fn second_moment<R: Rng + ?Sized>(&self, rng: &mut R, samples: usize) -> f64 {
        let n = self.dim() as f64;
        (0..samples)
            .map(|_| self.sample_uniform(rng).norm_squared() / n)
            .sum::<f64>()
            / samples as f64
    }
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn mod_pow(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = ((acc as u128 * b as u128) % p as u128) as u64;
        }
        b = ((b as u128 * b as u128) % p as u128) as u64;
        e >>= 1;
    }
    acc
}

fn modp(v: i128, p: u64) -> u64 {
    v.rem_euclid(p as i128) as u64
}

/// A Construction-A (Loeliger-type) coding lattice.
#[derive(Debug, Clone)]
pub struct ConstructionA {
    n: usize,
    p: u64,
    gamma: f64,
    /// Generator of the linear code as drawn, `k x n` over `Z_p`.
    generator: Vec<Vec<u64>>,
    /// Reduced row-echelon form of `generator`.
    rref: Vec<Vec<u64>>,
    pivots: Vec<usize>,
    free: Vec<usize>,
}

impl ConstructionA {
    /// Builds the lattice of a given `k x n` generator over `Z_p`.
    pub fn from_generator(p: u64, generator: Vec<Vec<u64>>, gamma: f64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Argument(format!("{p} is not prime")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Argument(format!("gamma must be positive, got {gamma}")));
        }
        let k = generator.len();
        let n = generator.first().map_or(0, Vec::len);
        if k == 0 || k > n || generator.iter().any(|r| r.len() != n) {
            return Err(Error::Argument(format!(
                "generator must be k x n with 1 <= k <= n, got {k} rows"
            )));
        }
        let generator: Vec<Vec<u64>> = generator
            .into_iter()
            .map(|r| r.into_iter().map(|v| v % p).collect())
            .collect();
        let (rref, pivots) = row_reduce(&generator, p);
        if pivots.len() < k {
            return Err(Error::Argument("generator is rank deficient over Z_p".into()));
        }
        let free = (0..n).filter(|c| !pivots.contains(c)).collect();
        Ok(Self {
            n,
            p,
            gamma,
            generator,
            rref,
            pivots,
            free,
        })
    }

    /// Draws a uniformly random full-rank `k x n` generator over `Z_p`,
    /// redrawing rank-deficient matrices.
    pub fn random<R: Rng + ?Sized>(n: usize, p: u64, k: usize, gamma: f64, rng: &mut R) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Argument(format!("{p} is not prime")));
        }
        if k == 0 || k > n {
            return Err(Error::Argument(format!("need 1 <= k <= n, got k={k}, n={n}")));
        }
        loop {
            let g: Vec<Vec<u64>> = (0..k)
                .map(|_| (0..n).map(|_| rng.random_range(0..p)).collect())
                .collect();
            match Self::from_generator(p, g, gamma) {
                Ok(c) => return Ok(c),
                Err(Error::Argument(m)) if m.contains("rank deficient") => continue,
                Err(e) => return Err(e),
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn k(&self) -> usize {
        self.pivots.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn generator(&self) -> &[Vec<u64>] {
        &self.generator
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    /// Triangular integer basis of the unscaled lattice (columns), with
    /// determinant `p^(n-k)`.
    pub fn integer_basis(&self) -> RMatrix {
        let mut b = RMatrix::zeros(self.n, self.n);
        for (i, &pc) in self.pivots.iter().enumerate() {
            b[(pc, i)] = 1.0;
            for &f in &self.free {
                b[(f, i)] = self.rref[i][f] as f64;
            }
        }
        for (j, &f) in self.free.iter().enumerate() {
            b[(f, self.k() + j)] = self.p as f64;
        }
        b
    }

    /// Generator matrix `gamma * integer_basis()`.
    pub fn basis(&self) -> RMatrix {
        self.integer_basis() * self.gamma
    }

    /// Exact membership of an integer vector in the unscaled lattice:
    /// `z mod p` must be a codeword.
    pub fn contains_integer(&self, z: &[i64]) -> bool {
        if z.len() != self.n {
            return false;
        }
        self.free.iter().all(|&f| {
            let s: i128 = self
                .pivots
                .iter()
                .enumerate()
                .map(|(i, &pc)| z[pc] as i128 * self.rref[i][f] as i128)
                .sum();
            modp(z[f] as i128 - s, self.p) == 0
        })
    }

    /// Fundamental volume `p^(n-k) gamma^n`.
    pub fn volume(&self) -> f64 {
        (self.p as f64).powi((self.n - self.k()) as i32) * self.gamma.powi(self.n as i32)
    }
}

fn row_reduce(g: &[Vec<u64>], p: u64) -> (Vec<Vec<u64>>, Vec<usize>) {
    let mut m: Vec<Vec<u64>> = g.to_vec();
    let rows = m.len();
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(pr) = (r..rows).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, pr);
        let inv = mod_pow(m[r][c], p - 2, p);
        for v in m[r].iter_mut() {
            *v = ((*v as u128 * inv as u128) % p as u128) as u64;
        }
        for i in 0..rows {
            if i != r && m[i][c] != 0 {
                let f = m[i][c];
                for j in 0..cols {
                    let sub = (f as u128 * m[r][j] as u128 % p as u128) as u64;
                    m[i][j] = (m[i][j] + p - sub) % p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    m.truncate(r);
    (m, pivots)
}

/// `tau = 2^(R / 2M)`, which must be a positive integer.
pub fn nesting_ratio(rate: f64, antennas: usize) -> Result<u64> {
    if antennas == 0 || !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::Argument("rate must be non-negative and antennas positive".into()));
    }
    let tau = 2f64.powf(rate / (2.0 * antennas as f64));
    let rounded = tau.round();
    if (tau - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(Error::Argument(format!(
            "nesting ratio 2^({rate}/{}) = {tau} is not an integer",
            2 * antennas
        )));
    }
    Ok(rounded as u64)
}

/// A self-similar nested lattice code `Lambda_C / tau Lambda_C`.
#[derive(Debug, Clone)]
pub struct NestedLatticeCode {
    construction: ConstructionA,
    tau: u64,
    rate: f64,
    antennas: usize,
    coding: Lattice,
    shaping: Lattice,
}

impl NestedLatticeCode {
    /// Nests `construction` with ratio `2^(rate / 2 antennas)`.
    pub fn new(construction: ConstructionA, rate: f64, antennas: usize) -> Result<Self> {
        let tau = nesting_ratio(rate, antennas)?;
        let basis = construction.basis();
        let coding = Lattice::new(basis.clone())?;
        let shaping = Lattice::new(basis * tau as f64)?;
        Ok(Self {
            construction,
            tau,
            rate,
            antennas,
            coding,
            shaping,
        })
    }

    /// Random Construction-A code of dimension `n`.
    pub fn random<R: Rng + ?Sized>(
        n: usize,
        p: u64,
        k: usize,
        gamma: f64,
        rate: f64,
        antennas: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(ConstructionA::random(n, p, k, gamma, rng)?, rate, antennas)
    }

    pub fn dim(&self) -> usize {
        self.construction.n()
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn gamma(&self) -> f64 {
        self.construction.gamma()
    }

    pub fn construction(&self) -> &ConstructionA {
        &self.construction
    }

    pub fn coding(&self) -> &Lattice {
        &self.coding
    }

    pub fn shaping(&self) -> &Lattice {
        &self.shaping
    }

    /// Generator `G_code` of the coding lattice.
    pub fn generator(&self) -> &RMatrix {
        self.coding.basis()
    }

    /// `log2` of the codebook size, `n log2 tau`.
    pub fn codebook_bits(&self) -> f64 {
        self.dim() as f64 * (self.tau as f64).log2()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.construction.with_gamma(gamma), self.rate, self.antennas)
    }

    /// Dither uniform over the shaping Voronoi region.
    pub fn sample_dither<R: Rng + ?Sized>(&self, rng: &mut R) -> RVector {
        self.shaping.sample_uniform(rng)
    }

    /// Rescales `gamma` so the shaping lattice has per-dimension second
    /// moment 1/2, estimated from `samples` dithers and re-checked on an
    /// independent batch to within 1%.
    pub fn normalize_power<R: Rng + ?Sized>(&self, rng: &mut R, samples: usize) -> Result<Self> {
        let samples = samples.max(1);
        let estimate = self.shaping.second_moment(rng, samples);
        if !(estimate.is_finite() && estimate > 0.0) {
            return Err(Error::Numerical(format!(
                "second-moment estimate {estimate} for gamma {}",
                self.gamma()
            )));
        }
        let gamma = self.gamma() * (TARGET_SECOND_MOMENT / estimate).sqrt();
        let scaled = self.with_gamma(gamma)?;
        let check = scaled.shaping.second_moment(rng, (samples / 2).max(5000));
        if (check / TARGET_SECOND_MOMENT - 1.0).abs() > 0.01 {
            return Err(Error::Numerical(format!(
                "second moment {check} after rescaling gamma {} -> {gamma} misses 1/2 by more than 1% \
                 (first estimate {estimate}, {samples} samples)",
                self.gamma()
            )));
        }
        Ok(scaled)
    }

    fn check_index(&self, z_msg: &[i64]) -> Result<()> {
        if z_msg.len() != self.dim() {
            return Err(Error::Argument(format!(
                "message index has length {}, code dimension is {}",
                z_msg.len(),
                self.dim()
            )));
        }
        if let Some(v) = z_msg.iter().find(|&&v| v < 0 || v as u64 >= self.tau) {
            return Err(Error::Argument(format!(
                "message index entry {v} outside 0..{}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Coset leader `(G_code z) mod Lambda_S` of message index `z_msg`.
    pub fn index_to_coset_leader(&self, z_msg: &[i64]) -> Result<RVector> {
        self.check_index(z_msg)?;
        let z = RVector::from_iterator(z_msg.len(), z_msg.iter().map(|&v| v as f64));
        Ok(self.shaping.mod_lattice(&(self.generator() * z)))
    }

    /// Message index of the coset containing coding-lattice point `c`.
    pub fn coset_index(&self, c: &RVector) -> Result<Vec<i64>> {
        let z = self
            .coding
            .integer_coordinates(c, 1e-6)
            .ok_or_else(|| Error::Argument("vector is not a coding-lattice point".into()))?;
        Ok(z.iter().map(|v| v.rem_euclid(self.tau as i64)).collect())
    }

    /// Plain-text description sufficient to rebuild the code exactly.
    pub fn to_text(&self) -> String {
        let c = &self.construction;
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", c.n());
        let _ = writeln!(s, "p = {}", c.p());
        let _ = writeln!(s, "k = {}", c.k());
        let _ = writeln!(s, "gamma = {}", c.gamma());
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "rate = {}", self.rate);
        let _ = writeln!(s, "antennas = {}", self.antennas);
        for row in c.generator() {
            let entries: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "row = {}", entries.join(" "));
        }
        s
    }

    /// Inverse of [`NestedLatticeCode::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut p = None;
        let mut k = None;
        let mut gamma = None;
        let mut tau = None;
        let mut rate = None;
        let mut antennas = None;
        let mut rows = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected `key = value`, got `{line}`")))?;
            let value = value.trim();
            let bad = |e: &dyn std::fmt::Display| {
                Error::Parse(format!("bad value for {}: `{value}` ({e})", key.trim()))
            };
            match key.trim() {
                "n" => n = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "p" => p = Some(value.parse::<u64>().map_err(|e| bad(&e))?),
                "k" => k = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "gamma" => gamma = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                "tau" => tau = Some(value.parse::<u64>().map_err(|e| bad(&e))?),
                "rate" => rate = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                "antennas" => antennas = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "row" => rows.push(
                    value
                        .split_whitespace()
                        .map(|v| v.parse::<u64>().map_err(|e| bad(&e)))
                        .collect::<Result<Vec<_>>>()?,
                ),
                other => return Err(Error::Parse(format!("unknown key `{other}`"))),
            }
        }
        let missing = |what: &str| Error::Parse(format!("missing `{what}`"));
        let code = Self::new(
            ConstructionA::from_generator(p.ok_or_else(|| missing("p"))?, rows, gamma.ok_or_else(|| missing("gamma"))?)?,
            rate.ok_or_else(|| missing("rate"))?,
            antennas.ok_or_else(|| missing("antennas"))?,
        )?;
        if n.is_some_and(|n| n != code.dim())
            || k.is_some_and(|k| k != code.construction.k())
            || tau.is_some_and(|t| t != code.tau)
        {
            return Err(Error::Parse("n, k or tau disagree with the generator rows".into()));
        }
        Ok(code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::sphere::tests::brute_force;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> RVector {
        RVector::from_row_slice(x)
    }

    #[test]
    fn membership_matches_codeword_enumeration() {
        let c = ConstructionA::from_generator(5, vec![vec![1, 2]], 1.0).unwrap();
        // the 5 codewords of the repetition-like code {a (1, 2)}
        let codewords: Vec<[i64; 2]> = (0..5).map(|a| [a, (2 * a) % 5]).collect();
        let member = |z: [i64; 2]| codewords.contains(&[z[0].rem_euclid(5), z[1].rem_euclid(5)]);
        for z0 in -7..=7 {
            for z1 in -7..=7 {
                assert_eq!(c.contains_integer(&[z0, z1]), member([z0, z1]), "{z0},{z1}");
            }
        }
        assert!(c.contains_integer(&[6, 7]));
        assert!(!c.contains_integer(&[1, 1]));
        // every basis column is a member
        let b = c.integer_basis();
        for j in 0..2 {
            assert!(c.contains_integer(&[b[(0, j)] as i64, b[(1, j)] as i64]));
        }
    }

    #[test]
    fn full_code_is_scaled_integer_lattice() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = ConstructionA::random(3, 7, 3, 0.5, &mut rng).unwrap();
        assert_eq!(c.basis(), RMatrix::identity(3, 3) * 0.5);
    }

    #[test]
    fn determinant_is_gamma_n_p_n_minus_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = ConstructionA::random(4, 3, 2, 0.7, &mut rng).unwrap();
        let expected = 0.7f64.powi(4) * 9.0;
        assert!((c.basis().determinant().abs() / expected - 1.0).abs() < 1e-6);
        assert!((c.volume() / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_prime_and_bad_shapes() {
        assert!(ConstructionA::from_generator(6, vec![vec![1, 2]], 1.0).is_err());
        assert!(ConstructionA::from_generator(5, vec![vec![1, 2], vec![2, 4]], 1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ConstructionA::random(2, 9, 1, 1.0, &mut rng).is_err());
        assert!(ConstructionA::random(2, 5, 3, 1.0, &mut rng).is_err());
    }

    #[test]
    fn quantize_and_mod_on_integer_lattice() {
        let z2 = Lattice::integer(2);
        let q = z2.quantize(&v(&[1.4, -0.6]));
        assert_eq!(q.z, vec![1, -1]);
        let m = z2.mod_lattice(&v(&[1.4, -0.6]));
        assert!((m - v(&[0.4, 0.4])).norm() < 1e-12);
        assert_eq!(z2.mod_lattice(&v(&[0.0, 0.0])), v(&[0.0, 0.0]));
        assert_eq!(z2.quantize(&v(&[3.0, -2.0])).z, vec![3, -2]);
    }

    #[test]
    fn quantize_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let basis = RMatrix::from_fn(4, 4, |i, j| {
                if i == j { 1.5 } else { rng.random_range(-0.5..0.5) }
            });
            let lat = Lattice::new(basis.clone()).unwrap();
            let y = RVector::from_fn(4, |_, _| rng.random_range(-4.0..4.0));
            let (bz, _) = brute_force(&basis, &y, 6);
            assert_eq!(lat.quantize(&y).z, bz);
            let m = lat.mod_lattice(&y);
            assert!((lat.mod_lattice(&m) - &m).norm() < 1e-9);
        }
    }

    #[test]
    fn dithers_are_voronoi_uniform() {
        let z1 = Lattice::integer(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let samples: Vec<f64> = (0..n).map(|_| z1.sample_uniform(&mut rng)[0]).collect();
        for &u in &samples {
            assert_eq!(z1.quantize(&v(&[u])).z, vec![0]);
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let second = samples.iter().map(|u| u * u).sum::<f64>() / n as f64;
        assert!((second / (1.0 / 12.0) - 1.0).abs() < 0.05, "second moment {second}");
        let sigma = (1.0f64 / 12.0).sqrt();
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn nesting_ratio_requires_integer() {
        assert_eq!(nesting_ratio(2.0, 1).unwrap(), 2);
        assert_eq!(nesting_ratio(4.0, 2).unwrap(), 2);
        assert_eq!(nesting_ratio(4.0, 1).unwrap(), 4);
        assert_eq!(nesting_ratio(0.0, 1).unwrap(), 1);
        assert!(nesting_ratio(1.0, 1).is_err());
    }

    #[test]
    fn shaping_is_sublattice_with_volume_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let code = NestedLatticeCode::random(4, 5, 2, 1.0, 2.0, 1, &mut rng).unwrap();
        let ratio = code.shaping().volume() / code.coding().volume();
        assert!((ratio / 2f64.powi(4) - 1.0).abs() < 1e-9);
        assert!((2f64.powf(code.codebook_bits()) - 2f64.powf(2.0 * 2.0)).abs() < 1e-9);
        // shaping points are coding points with exact integer membership
        let zb = code.construction().integer_basis() * 2.0;
        for _ in 0..20 {
            let s = RVector::from_fn(4, |_, _| rng.random_range(-3..=3) as f64);
            let p = &zb * s;
            let z: Vec<i64> = p.iter().map(|x| x.round() as i64).collect();
            assert!(code.construction().contains_integer(&z));
        }
    }

    #[test]
    fn coset_leaders_are_distinct() {
        let c = ConstructionA::from_generator(3, vec![vec![1, 0], vec![0, 1]], 1.0).unwrap();
        let code = NestedLatticeCode::new(c, 2.0, 1).unwrap();
        let mut leaders: Vec<RVector> = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                let l = code.index_to_coset_leader(&[a, b]).unwrap();
                assert_eq!(code.coset_index(&l).unwrap(), vec![a, b]);
                for other in &leaders {
                    let diff = &l - other;
                    assert!(code.shaping().integer_coordinates(&diff, 1e-9).is_none());
                }
                leaders.push(l);
            }
        }
        assert_eq!(code.index_to_coset_leader(&[0, 0]).unwrap(), v(&[0.0, 0.0]));
        assert!(code.index_to_coset_leader(&[2, 0]).is_err());
        assert!(code.index_to_coset_leader(&[-1, 0]).is_err());
        assert!(code.index_to_coset_leader(&[0]).is_err());
    }

    #[test]
    fn normalization_hits_half_and_scales_quadratically() {
        let mut rng = stream_rng(1, 0);
        let code = NestedLatticeCode::random(4, 5, 2, 1.0, 2.0, 1, &mut rng).unwrap();
        let normalized = code.normalize_power(&mut rng, 20_000).unwrap();
        let m = normalized.shaping().second_moment(&mut rng, 20_000);
        assert!((m - 0.5).abs() < 0.01, "second moment {m}");
        assert_eq!(normalized.tau(), code.tau());
        let doubled = normalized.with_gamma(2.0 * normalized.gamma()).unwrap();
        let mut a = stream_rng(3, 0);
        let mut b = stream_rng(3, 0);
        let m1 = normalized.shaping().second_moment(&mut a, 5_000);
        let m2 = doubled.shaping().second_moment(&mut b, 5_000);
        assert!((m2 / m1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn text_round_trip_rebuilds_identical_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let code = NestedLatticeCode::random(8, 97, 3, 0.123456789, 2.0, 1, &mut rng).unwrap();
        let text = code.to_text();
        let back = NestedLatticeCode::from_text(&text).unwrap();
        assert_eq!(back.generator(), code.generator());
        assert_eq!(back.tau(), code.tau());
        assert!(NestedLatticeCode::from_text("n = 2\nbogus = 1").is_err());
    }
}
