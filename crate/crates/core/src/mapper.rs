//! Relay mappers and the stacked super-lattice generator.
//!
//! With linear mappers the relay index is `M [z_1; ...; z_K] mod tau`, so the
//! set of all super-codewords `[c_1; ...; c_K; c_r]` is itself a lattice with
//! generator `diag(G_1, ..., G_K, G_r) S`, where the free integer coordinates
//! are the user indices followed by the relay's shaping coordinates.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::NestedLatticeCode;
use crate::linalg::{RMatrix, RVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MapperKind {
    /// Relay index is the concatenation of the user indices.
    OneToOneLinear,
    /// Relay index is the componentwise sum of the user indices mod tau.
    ModuloSum,
}

/// User codebooks together with the relay codebook and its index map.
#[derive(Debug, Clone)]
pub struct RelayMapper {
    kind: MapperKind,
    user_codes: Vec<NestedLatticeCode>,
    relay_code: NestedLatticeCode,
}

/// A (possibly affine) super-lattice generator for a subset of transmitters.
///
/// Points are `matrix * zeta + offset`; rows are laid out as the residual
/// users' codewords in increasing user order followed by the relay codeword
/// when present, and columns follow the same partition.
#[derive(Debug, Clone)]
pub struct SuperGenerator {
    pub matrix: RMatrix,
    pub offset: RVector,
    pub users: Vec<usize>,
    pub user_ranges: Vec<Range<usize>>,
    pub relay_range: Option<Range<usize>>,
    taus: Vec<u64>,
}

impl SuperGenerator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Message indices of the residual users carried by integer vector `zeta`.
    pub fn messages(&self, zeta: &[i64]) -> Vec<Vec<i64>> {
        self.user_ranges
            .iter()
            .zip(&self.taus)
            .map(|(r, &tau)| zeta[r.clone()].iter().map(|v| v.rem_euclid(tau as i64)).collect())
            .collect()
    }

    /// `matrix * zeta + offset`.
    pub fn point(&self, zeta: &[i64]) -> RVector {
        let z = RVector::from_iterator(zeta.len(), zeta.iter().map(|&v| v as f64));
        &self.matrix * z + &self.offset
    }
}

impl RelayMapper {
    pub fn new(
        kind: MapperKind,
        user_codes: Vec<NestedLatticeCode>,
        relay_code: NestedLatticeCode,
    ) -> Result<Self> {
        if user_codes.is_empty() {
            return Err(Error::Argument("at least one user code is required".into()));
        }
        let tau = relay_code.tau();
        if let Some(c) = user_codes.iter().find(|c| c.tau() != tau) {
            return Err(Error::Unsupported(format!(
                "linear mappers need equal nesting ratios, got user tau {} and relay tau {tau}",
                c.tau()
            )));
        }
        match kind {
            MapperKind::OneToOneLinear => {
                let total: usize = user_codes.iter().map(NestedLatticeCode::dim).sum();
                if total != relay_code.dim() {
                    return Err(Error::Argument(format!(
                        "one-to-one mapper needs relay dimension {total}, got {}",
                        relay_code.dim()
                    )));
                }
            }
            MapperKind::ModuloSum => {
                if let Some(c) = user_codes.iter().find(|c| c.dim() != relay_code.dim()) {
                    return Err(Error::Argument(format!(
                        "modulo-sum mapper needs equal dimensions, got {} and {}",
                        c.dim(),
                        relay_code.dim()
                    )));
                }
            }
        }
        Ok(Self {
            kind,
            user_codes,
            relay_code,
        })
    }

    pub fn kind(&self) -> MapperKind {
        self.kind
    }

    pub fn users(&self) -> usize {
        self.user_codes.len()
    }

    pub fn user_codes(&self) -> &[NestedLatticeCode] {
        &self.user_codes
    }

    pub fn user_code(&self, i: usize) -> &NestedLatticeCode {
        &self.user_codes[i]
    }

    pub fn relay_code(&self) -> &NestedLatticeCode {
        &self.relay_code
    }

    pub fn tau(&self) -> u64 {
        self.relay_code.tau()
    }

    /// Position of user `i`'s index inside the relay index.
    fn relay_slot(&self, i: usize) -> Range<usize> {
        match self.kind {
            MapperKind::OneToOneLinear => {
                let start: usize = self.user_codes[..i].iter().map(NestedLatticeCode::dim).sum();
                start..start + self.user_codes[i].dim()
            }
            MapperKind::ModuloSum => 0..self.relay_code.dim(),
        }
    }

    fn check_messages(&self, z: &[Vec<i64>]) -> Result<()> {
        if z.len() != self.users() {
            return Err(Error::Argument(format!(
                "expected {} user indices, got {}",
                self.users(),
                z.len()
            )));
        }
        for (i, (zi, code)) in z.iter().zip(&self.user_codes).enumerate() {
            if zi.len() != code.dim() {
                return Err(Error::Argument(format!(
                    "user {} index has length {}, expected {}",
                    i + 1,
                    zi.len(),
                    code.dim()
                )));
            }
            if zi.iter().any(|&v| v < 0 || v as u64 >= code.tau()) {
                return Err(Error::Argument(format!(
                    "user {} index entries must lie in 0..{}",
                    i + 1,
                    code.tau()
                )));
            }
        }
        Ok(())
    }

    /// Relay index for the given user indices.
    pub fn map_indices(&self, z: &[Vec<i64>]) -> Result<Vec<i64>> {
        self.check_messages(z)?;
        let tau = self.tau() as i64;
        let mut out = vec![0i64; self.relay_code.dim()];
        for (i, zi) in z.iter().enumerate() {
            for (o, v) in out[self.relay_slot(i)].iter_mut().zip(zi) {
                *o += v;
            }
        }
        Ok(out.into_iter().map(|v| v.rem_euclid(tau)).collect())
    }

    /// Generator of all super-codewords of users and relay.
    pub fn super_generator(&self) -> Result<SuperGenerator> {
        let all: Vec<usize> = (0..self.users()).collect();
        self.residual_generator(&all, &[], true)
    }

    /// Generator for the transmitters still unknown at a decoding node.
    ///
    /// `residual` lists the free users in increasing order; `fixed` gives the
    /// message index of every other user, which pins the relay coset. With
    /// `with_relay == false` the relay block is omitted and `fixed` is unused.
    pub fn residual_generator(
        &self,
        residual: &[usize],
        fixed: &[(usize, Vec<i64>)],
        with_relay: bool,
    ) -> Result<SuperGenerator> {
        if residual.windows(2).any(|w| w[0] >= w[1]) || residual.iter().any(|&i| i >= self.users()) {
            return Err(Error::Argument("residual users must be increasing and in range".into()));
        }
        if with_relay {
            let mut covered: Vec<usize> = residual.iter().copied().chain(fixed.iter().map(|f| f.0)).collect();
            covered.sort_unstable();
            if covered != (0..self.users()).collect::<Vec<_>>() {
                return Err(Error::Argument(
                    "residual and fixed users must partition the user set".into(),
                ));
            }
        }
        let mut user_ranges = Vec::new();
        let mut pos = 0;
        for &i in residual {
            let d = self.user_codes[i].dim();
            user_ranges.push(pos..pos + d);
            pos += d;
        }
        let relay_range = with_relay.then(|| pos..pos + self.relay_code.dim());
        let dim = pos + relay_range.as_ref().map_or(0, Range::len);
        let mut matrix = RMatrix::zeros(dim, dim);
        let mut offset = RVector::zeros(dim);
        for (&i, r) in residual.iter().zip(&user_ranges) {
            matrix
                .view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(self.user_codes[i].generator());
        }
        if let Some(rr) = &relay_range {
            let gr = self.relay_code.generator();
            for (&i, r) in residual.iter().zip(&user_ranges) {
                let slot = self.relay_slot(i);
                // G_r M_i selects the columns of G_r in user i's slot
                matrix
                    .view_mut((rr.start, r.start), (rr.len(), r.len()))
                    .copy_from(&gr.columns(slot.start, slot.len()));
            }
            matrix
                .view_mut((rr.start, rr.start), (rr.len(), rr.len()))
                .copy_from(&(gr * self.tau() as f64));
            let mut fixed_index = RVector::zeros(self.relay_code.dim());
            for (i, w) in fixed {
                let code = &self.user_codes[*i];
                if w.len() != code.dim() || w.iter().any(|&v| v < 0 || v as u64 >= code.tau()) {
                    return Err(Error::Argument(format!("bad fixed index for user {}", i + 1)));
                }
                for (o, &v) in fixed_index.rows_mut(self.relay_slot(*i).start, w.len()).iter_mut().zip(w) {
                    *o += v as f64;
                }
            }
            offset.rows_mut(rr.start, rr.len()).copy_from(&(gr * fixed_index));
        }
        Ok(SuperGenerator {
            matrix,
            offset,
            users: residual.to_vec(),
            user_ranges,
            relay_range,
            taus: residual.iter().map(|&i| self.user_codes[i].tau()).collect(),
        })
    }

    /// Checks on `trials` random integer vectors that the relay block of
    /// `generator * zeta` lies in the relay coset prescribed by the users'
    /// cosets. `generator` must use the full-user layout of
    /// [`RelayMapper::super_generator`].
    pub fn coset_consistency_check<R: Rng + ?Sized>(
        &self,
        generator: &RMatrix,
        trials: usize,
        rng: &mut R,
    ) -> bool {
        let Ok(layout) = self.super_generator() else {
            return false;
        };
        if generator.shape() != layout.matrix.shape() {
            return false;
        }
        let rr = layout.relay_range.clone().expect("full layout has a relay block");
        (0..trials).all(|_| {
            let zeta: Vec<i64> = (0..layout.dim()).map(|_| rng.random_range(-8..=8)).collect();
            let z = RVector::from_iterator(zeta.len(), zeta.iter().map(|&v| v as f64));
            let point = generator * z;
            let mut indices = Vec::with_capacity(self.users());
            for (code, r) in self.user_codes.iter().zip(&layout.user_ranges) {
                match code.coset_index(&point.rows(r.start, r.len()).into_owned()) {
                    Ok(w) => indices.push(w),
                    Err(_) => return false,
                }
            }
            let Ok(relay_index) = self.map_indices(&indices) else {
                return false;
            };
            let Ok(leader) = self.relay_code.index_to_coset_leader(&relay_index) else {
                return false;
            };
            let diff = point.rows(rr.start, rr.len()) - leader;
            self.relay_code.shaping().integer_coordinates(&diff, 1e-9).is_some()
        })
    }

    /// Enumerates every tuple of user indices and counts relay-index
    /// collisions. Returns `(tuples, distinct relay indices)`, or `None` when
    /// the number of tuples exceeds `limit`.
    pub fn enumerate_images(&self, limit: u64) -> Option<(u64, u64)> {
        let dims: Vec<usize> = self.user_codes.iter().map(NestedLatticeCode::dim).collect();
        let total_len: usize = dims.iter().sum();
        let tau = self.tau();
        let tuples = tau.checked_pow(u32::try_from(total_len).ok()?)?;
        if tuples > limit {
            return None;
        }
        let mut seen = std::collections::HashSet::new();
        let mut digits = vec![0i64; total_len];
        for _ in 0..tuples {
            let mut split = Vec::with_capacity(dims.len());
            let mut pos = 0;
            for &d in &dims {
                split.push(digits[pos..pos + d].to_vec());
                pos += d;
            }
            seen.insert(self.map_indices(&split).ok()?);
            for d in digits.iter_mut() {
                *d += 1;
                if *d < tau as i64 {
                    break;
                }
                *d = 0;
            }
        }
        Some((tuples, seen.len() as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ConstructionA;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `Z^n` nested with ratio `tau` (one antenna, so `rate = 2 log2 tau`).
    pub(crate) fn integer_code(n: usize, tau: u64) -> NestedLatticeCode {
        let rows = (0..n).map(|i| (0..n).map(|j| u64::from(i == j)).collect()).collect();
        let c = ConstructionA::from_generator(2, rows, 1.0).unwrap();
        NestedLatticeCode::new(c, 2.0 * (tau as f64).log2(), 1).unwrap()
    }

    fn random_code(n: usize, tau: u64, antennas: usize, seed: u64) -> NestedLatticeCode {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rate = 2.0 * antennas as f64 * (tau as f64).log2();
        NestedLatticeCode::random(n, 7, 2, 0.3, rate, antennas, &mut rng).unwrap()
    }

    #[test]
    fn one_to_one_concatenates() {
        let m = RelayMapper::new(
            MapperKind::OneToOneLinear,
            vec![integer_code(2, 4), integer_code(2, 4)],
            integer_code(4, 4),
        )
        .unwrap();
        assert_eq!(m.map_indices(&[vec![1, 0], vec![0, 2]]).unwrap(), vec![1, 0, 0, 2]);
        assert!(m.map_indices(&[vec![1, 0]]).is_err());
        assert!(m.map_indices(&[vec![4, 0], vec![0, 0]]).is_err());
    }

    #[test]
    fn modulo_sum_wraps() {
        let m = RelayMapper::new(
            MapperKind::ModuloSum,
            vec![integer_code(1, 4), integer_code(1, 4)],
            integer_code(1, 4),
        )
        .unwrap();
        assert_eq!(m.map_indices(&[vec![3], vec![2]]).unwrap(), vec![1]);
    }

    #[test]
    fn constructor_rejects_mismatched_codes() {
        assert!(RelayMapper::new(
            MapperKind::OneToOneLinear,
            vec![integer_code(2, 2), integer_code(2, 2)],
            integer_code(2, 2),
        )
        .is_err());
        assert!(RelayMapper::new(
            MapperKind::ModuloSum,
            vec![integer_code(2, 2), integer_code(2, 4)],
            integer_code(2, 2),
        )
        .is_err());
    }

    #[test]
    fn exhaustive_images() {
        let o = RelayMapper::new(
            MapperKind::OneToOneLinear,
            vec![integer_code(2, 3), integer_code(2, 3)],
            integer_code(4, 3),
        )
        .unwrap();
        assert_eq!(o.enumerate_images(4096), Some((81, 81)));
        let s = RelayMapper::new(
            MapperKind::ModuloSum,
            vec![integer_code(2, 3), integer_code(2, 3)],
            integer_code(2, 3),
        )
        .unwrap();
        // each relay index is hit by exactly tau^n user pairs
        assert_eq!(s.enumerate_images(4096), Some((81, 9)));
        assert_eq!(s.enumerate_images(10), None);
    }

    #[test]
    fn message_block_maps_to_relay_codeword() {
        let m = RelayMapper::new(
            MapperKind::OneToOneLinear,
            vec![random_code(2, 2, 1, 1), random_code(2, 2, 1, 2)],
            random_code(4, 2, 2, 3),
        )
        .unwrap();
        let g = m.super_generator().unwrap();
        let (z1, z2) = (vec![1, 0], vec![1, 1]);
        let zeta: Vec<i64> = z1.iter().chain(&z2).copied().chain([0; 4]).collect();
        let point = g.point(&zeta);
        let relay_index = m.map_indices(&[z1.clone(), z2.clone()]).unwrap();
        let rz = RVector::from_iterator(4, relay_index.iter().map(|&v| v as f64));
        let expected = m.relay_code().generator() * rz;
        let rr = g.relay_range.clone().unwrap();
        assert!((point.rows(rr.start, rr.len()) - expected).norm() < 1e-12);
        assert_eq!(g.messages(&zeta), vec![z1, z2]);
        assert!(g.point(&[0; 8]).norm() == 0.0);
    }

    #[test]
    fn determinant_factorizes() {
        for kind in [MapperKind::OneToOneLinear, MapperKind::ModuloSum] {
            let relay = match kind {
                MapperKind::OneToOneLinear => random_code(4, 2, 2, 13),
                MapperKind::ModuloSum => random_code(2, 2, 1, 13),
            };
            let m = RelayMapper::new(kind, vec![random_code(2, 2, 1, 11), random_code(2, 2, 1, 12)], relay)
                .unwrap();
            let g = m.super_generator().unwrap();
            let n_r = m.relay_code().dim() as i32;
            let expected = m.user_code(0).generator().determinant().abs()
                * m.user_code(1).generator().determinant().abs()
                * m.relay_code().generator().determinant().abs()
                * (m.tau() as f64).powi(n_r);
            let det = g.matrix.determinant().abs();
            assert!((det / expected - 1.0).abs() < 1e-9, "{kind:?}: {det} vs {expected}");
        }
    }

    #[test]
    fn consistency_check_with_negative_control() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [MapperKind::OneToOneLinear, MapperKind::ModuloSum] {
            let relay = match kind {
                MapperKind::OneToOneLinear => integer_code(4, 2),
                MapperKind::ModuloSum => integer_code(2, 2),
            };
            let m = RelayMapper::new(kind, vec![integer_code(2, 2), integer_code(2, 2)], relay).unwrap();
            let g = m.super_generator().unwrap();
            assert!(m.coset_consistency_check(&g.matrix, 100, &mut rng));
            let mut bad = g.matrix.clone();
            let r = g.relay_range.clone().unwrap().start;
            bad[(r, 0)] += 1.0;
            assert!(!m.coset_consistency_check(&bad, 100, &mut rng));
        }
    }

    #[test]
    fn shaping_coordinates_give_zero_cosets() {
        let m = RelayMapper::new(
            MapperKind::ModuloSum,
            vec![random_code(2, 2, 1, 21), random_code(2, 2, 1, 22)],
            random_code(2, 2, 1, 23),
        )
        .unwrap();
        let g = m.super_generator().unwrap();
        let zeta = [2, -4, 6, 2, 1, -3];
        let p = g.point(&zeta);
        for (i, r) in g.user_ranges.iter().enumerate() {
            let block = p.rows(r.start, r.len()).into_owned();
            assert!(m.user_code(i).shaping().integer_coordinates(&block, 1e-9).is_some());
        }
        let rr = g.relay_range.clone().unwrap();
        let block = p.rows(rr.start, rr.len()).into_owned();
        assert!(m.relay_code().shaping().integer_coordinates(&block, 1e-9).is_some());
    }

    #[test]
    fn residual_generator_pins_relay_coset() {
        let m = RelayMapper::new(
            MapperKind::ModuloSum,
            vec![integer_code(2, 4), integer_code(2, 4)],
            integer_code(2, 4),
        )
        .unwrap();
        let g = m.residual_generator(&[1], &[(0, vec![3, 1])], true).unwrap();
        assert_eq!(g.dim(), 4);
        let p = g.point(&[2, 2, 0, 0]);
        // relay index = (3 + 2, 1 + 2) = (5, 3)
        assert_eq!(p.as_slice(), &[2.0, 2.0, 5.0, 3.0]);
        let users_only = m.residual_generator(&[0, 1], &[], false).unwrap();
        assert_eq!(users_only.dim(), 4);
        assert!(users_only.relay_range.is_none());
        assert!(m.residual_generator(&[1, 0], &[], false).is_err());
        assert!(m.residual_generator(&[1], &[], true).is_err());
    }
}
