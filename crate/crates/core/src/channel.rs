//! Rayleigh fading draws and the real-valued super-channels seen by the relay
//! and the destination under dynamic decode-and-forward.
//!
//! Real vectors stack each complex symbol as `[Re; Im]`, symbols in time
//! order, and transmitters users-first then relay. A super-channel is the
//! Kronecker expansion `I ⊗ embed(H)` of the per-symbol channel, scaled by
//! `sqrt(rho / M)`; the relay's destination block is zero for the symbols
//! of the listening phase.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{embed_complex, kron_identity, CMatrix, RMatrix};

/// Static system parameters of a K-user multiple-access relay channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarcConfig {
    /// Number of users `K`.
    pub users: usize,
    /// Antennas per user `M_u`.
    pub user_antennas: usize,
    /// Relay antennas `M_r`.
    pub relay_antennas: usize,
    /// Destination antennas `N`.
    pub dest_antennas: usize,
    /// Slots per codeword `L`.
    pub slots: usize,
    /// Vector symbols per slot `T`.
    pub slot_len: usize,
    /// Received SNR at the relay, dB.
    pub rho_r_db: f64,
    /// Received SNR at the destination, dB.
    pub rho_d_db: f64,
    /// Extra SNR of the source-to-relay links, dB.
    pub sr_offset_db: f64,
    /// Per-user rates in bits per channel use.
    pub rates: Vec<f64>,
    /// Relay codebook rate `R_{K+1}` in bits per channel use.
    pub relay_rate: f64,
}

impl Default for MarcConfig {
    /// Two single-antenna users, `L = 2`, `T = 2`, 2 BPCU each, S-R links 10 dB
    /// better, one-to-one relay rate.
    fn default() -> Self {
        Self {
            users: 2,
            user_antennas: 1,
            relay_antennas: 1,
            dest_antennas: 1,
            slots: 2,
            slot_len: 2,
            rho_r_db: 20.0,
            rho_d_db: 20.0,
            sr_offset_db: 10.0,
            rates: vec![2.0, 2.0],
            relay_rate: 4.0,
        }
    }
}

impl MarcConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.users == 0 {
            return fail("user count must be at least 1");
        }
        if self.slots < 2 {
            return fail("a codeword must span at least 2 slots");
        }
        if self.slot_len == 0 {
            return fail("slot length must be at least 1");
        }
        if self.user_antennas == 0 || self.relay_antennas == 0 || self.dest_antennas == 0 {
            return fail("antenna counts must be at least 1");
        }
        if self.rates.len() != self.users {
            return Err(Error::Config(format!(
                "expected {} user rates, got {}",
                self.users,
                self.rates.len()
            )));
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || self.relay_rate.is_nan() || self.relay_rate < 0.0 {
            return fail("rates must be finite and non-negative");
        }
        for v in [self.rho_r_db, self.rho_d_db, self.sr_offset_db] {
            if v.is_nan() || v == f64::INFINITY {
                return fail("SNR values must be finite or -inf");
            }
        }
        Ok(())
    }

    /// Vector symbols per codeword, `L T`.
    pub fn symbols(&self) -> usize {
        self.slots * self.slot_len
    }

    /// Real dimension of one user's codeword, `2 M_u L T`.
    pub fn user_dim(&self) -> usize {
        2 * self.user_antennas * self.symbols()
    }

    /// Real dimension of the relay codeword, `2 M_r L T`.
    pub fn relay_dim(&self) -> usize {
        2 * self.relay_antennas * self.symbols()
    }

    /// Real dimension of the destination observation, `2 N L T`.
    pub fn dst_dim(&self) -> usize {
        2 * self.dest_antennas * self.symbols()
    }

    /// Linear SNR at the destination.
    pub fn rho_d(&self) -> f64 {
        db_to_linear(self.rho_d_db)
    }

    /// Linear SNR on the source-to-relay links, offset included.
    pub fn rho_r_effective(&self) -> f64 {
        db_to_linear(self.rho_r_db + self.sr_offset_db)
    }

    /// Copy with both link SNRs set to `snr_db` (the S-R offset still applies).
    pub fn at_snr(&self, snr_db: f64) -> Self {
        Self {
            rho_d_db: snr_db,
            rho_r_db: snr_db,
            ..self.clone()
        }
    }

    /// Column range `(start, width)` of transmitter `t` in the destination
    /// super-channel; `t == users` is the relay.
    pub fn dst_columns(&self, t: usize) -> (usize, usize) {
        if t < self.users {
            (t * self.user_dim(), self.user_dim())
        } else {
            (self.users * self.user_dim(), self.relay_dim())
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One slow-fading draw of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `M_r x M_u` user-to-relay matrices.
    pub h_relay: Vec<CMatrix>,
    /// `N x M_u` user-to-destination matrices.
    pub h_dst: Vec<CMatrix>,
    /// `N x M_r` relay-to-destination matrix.
    pub h_dst_relay: CMatrix,
}

impl ChannelRealization {
    /// All-zero links (the `SNR -> -inf` limit).
    pub fn zeros(cfg: &MarcConfig) -> Self {
        Self {
            h_relay: vec![
                CMatrix::zeros(cfg.relay_antennas, cfg.user_antennas);
                cfg.users
            ],
            h_dst: vec![CMatrix::zeros(cfg.dest_antennas, cfg.user_antennas); cfg.users],
            h_dst_relay: CMatrix::zeros(cfg.dest_antennas, cfg.relay_antennas),
        }
    }

    pub fn check(&self, cfg: &MarcConfig) -> Result<()> {
        let shape_err = |what: &str, got: (usize, usize), want: (usize, usize)| {
            Err(Error::Config(format!(
                "{what} is {}x{}, expected {}x{}",
                got.0, got.1, want.0, want.1
            )))
        };
        if self.h_relay.len() != cfg.users || self.h_dst.len() != cfg.users {
            return Err(Error::Config(format!(
                "realization has {} relay and {} destination user links, expected {}",
                self.h_relay.len(),
                self.h_dst.len(),
                cfg.users
            )));
        }
        let r_shape = (cfg.relay_antennas, cfg.user_antennas);
        let d_shape = (cfg.dest_antennas, cfg.user_antennas);
        for (i, h) in self.h_relay.iter().enumerate() {
            if h.shape() != r_shape {
                return shape_err(&format!("H_r[{}]", i + 1), h.shape(), r_shape);
            }
        }
        for (i, h) in self.h_dst.iter().enumerate() {
            if h.shape() != d_shape {
                return shape_err(&format!("H_d[{}]", i + 1), h.shape(), d_shape);
            }
        }
        let rd_shape = (cfg.dest_antennas, cfg.relay_antennas);
        if self.h_dst_relay.shape() != rd_shape {
            return shape_err("H_d,relay", self.h_dst_relay.shape(), rd_shape);
        }
        let finite = |h: &CMatrix| h.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        if !(self.h_relay.iter().all(finite) && self.h_dst.iter().all(finite) && finite(&self.h_dst_relay)) {
            return Err(Error::Config("channel matrices must be finite".into()));
        }
        Ok(())
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// Draws every link with i.i.d. `CN(0, 1)` entries.
///
/// Draw order is fixed: user-to-relay links, user-to-destination links, then
/// the relay-to-destination link.
pub fn sample_rayleigh<R: Rng + ?Sized>(cfg: &MarcConfig, rng: &mut R) -> ChannelRealization {
    let h_relay = (0..cfg.users)
        .map(|_| complex_gaussian(rng, cfg.relay_antennas, cfg.user_antennas))
        .collect();
    let h_dst = (0..cfg.users)
        .map(|_| complex_gaussian(rng, cfg.dest_antennas, cfg.user_antennas))
        .collect();
    let h_dst_relay = complex_gaussian(rng, cfg.dest_antennas, cfg.relay_antennas);
    ChannelRealization {
        h_relay,
        h_dst,
        h_dst_relay,
    }
}

/// SNR-scaled real per-symbol channel blocks of one realization.
#[derive(Debug, Clone)]
pub struct SymbolChannels {
    /// `sqrt(rho_r'/M_u) embed(H_r[i])`, `2M_r x 2M_u`.
    pub relay_users: Vec<RMatrix>,
    /// `sqrt(rho_d/M_u) embed(H_d[i])`, `2N x 2M_u`.
    pub dst_users: Vec<RMatrix>,
    /// `sqrt(rho_d/M_r) embed(H_d,relay)`, `2N x 2M_r`.
    pub dst_relay: RMatrix,
}

impl SymbolChannels {
    pub fn new(real: &ChannelRealization, cfg: &MarcConfig) -> Result<Self> {
        cfg.validate()?;
        real.check(cfg)?;
        let su = (cfg.rho_d() / cfg.user_antennas as f64).sqrt();
        let sr = (cfg.rho_d() / cfg.relay_antennas as f64).sqrt();
        let srr = (cfg.rho_r_effective() / cfg.user_antennas as f64).sqrt();
        Ok(Self {
            relay_users: real.h_relay.iter().map(|h| embed_complex(h) * srr).collect(),
            dst_users: real.h_dst.iter().map(|h| embed_complex(h) * su).collect(),
            dst_relay: embed_complex(&real.h_dst_relay) * sr,
        })
    }
}

fn check_slot(ell: usize, cfg: &MarcConfig) -> Result<()> {
    if ell == 0 || ell > cfg.slots {
        return Err(Error::Argument(format!(
            "slot index {ell} outside 1..={}",
            cfg.slots
        )));
    }
    Ok(())
}

/// Destination super-channel `[H_1^d, ..., H_K^d, H_{K+1}^d]` for decision
/// slot `ell1` (`ell1 == L` means the relay stays silent).
pub fn build_dst_superchannel(
    real: &ChannelRealization,
    ell1: usize,
    cfg: &MarcConfig,
) -> Result<RMatrix> {
    let sym = SymbolChannels::new(real, cfg)?;
    check_slot(ell1, cfg)?;
    Ok(dst_from_symbols(&sym, ell1, cfg))
}

pub(crate) fn dst_from_symbols(sym: &SymbolChannels, ell1: usize, cfg: &MarcConfig) -> RMatrix {
    let lt = cfg.symbols();
    let mut h = RMatrix::zeros(cfg.dst_dim(), cfg.users * cfg.user_dim() + cfg.relay_dim());
    for (i, block) in sym.dst_users.iter().enumerate() {
        let (start, width) = cfg.dst_columns(i);
        h.columns_mut(start, width).copy_from(&kron_identity(lt, block));
    }
    let (rstart, _) = cfg.dst_columns(cfg.users);
    let (bm, bn) = sym.dst_relay.shape();
    for t in ell1 * cfg.slot_len..lt {
        h.view_mut((t * bm, rstart + t * bn), (bm, bn))
            .copy_from(&sym.dst_relay);
    }
    h
}

/// Relay super-channel for the first `ell` slots: `2M_r ell T x 2K M_u ell T`.
pub fn build_relay_superchannel(
    real: &ChannelRealization,
    ell: usize,
    cfg: &MarcConfig,
) -> Result<RMatrix> {
    let sym = SymbolChannels::new(real, cfg)?;
    check_slot(ell, cfg)?;
    Ok(relay_from_symbols(&sym, ell, cfg))
}

pub(crate) fn relay_from_symbols(sym: &SymbolChannels, ell: usize, cfg: &MarcConfig) -> RMatrix {
    let reps = ell * cfg.slot_len;
    let blocks: Vec<RMatrix> = sym
        .relay_users
        .iter()
        .map(|b| kron_identity(reps, b))
        .collect();
    let rows = blocks[0].nrows();
    let width = blocks[0].ncols();
    let mut h = RMatrix::zeros(rows, width * blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        h.columns_mut(i * width, width).copy_from(b);
    }
    h
}

/// Real super-channels of one realization with the relay's decision slot.
#[derive(Debug, Clone)]
pub struct SuperChannel {
    /// Destination channel, `2NLT x 2(K M_u + M_r)LT`.
    pub h_dst: RMatrix,
    /// Decision slot in `1..=L`; `L` means the relay is silent.
    pub ell1: usize,
    symbols: SymbolChannels,
    cfg: MarcConfig,
}

impl SuperChannel {
    pub fn assemble(real: &ChannelRealization, ell1: usize, cfg: &MarcConfig) -> Result<Self> {
        let symbols = SymbolChannels::new(real, cfg)?;
        check_slot(ell1, cfg)?;
        Ok(Self {
            h_dst: dst_from_symbols(&symbols, ell1, cfg),
            ell1,
            symbols,
            cfg: cfg.clone(),
        })
    }

    /// Relay super-channel after `ell` listening slots.
    pub fn relay(&self, ell: usize) -> Result<RMatrix> {
        check_slot(ell, &self.cfg)?;
        Ok(relay_from_symbols(&self.symbols, ell, &self.cfg))
    }

    /// Relay super-channel after `ell` slots, widened with zero columns so it
    /// acts on the users' full codewords (`2M_r ell T x 2K M_u L T`).
    pub fn relay_full_width(&self, ell: usize) -> Result<RMatrix> {
        let heard = self.relay(ell)?;
        let width = heard.ncols() / self.cfg.users;
        let mut h = RMatrix::zeros(heard.nrows(), self.cfg.users * self.cfg.user_dim());
        for i in 0..self.cfg.users {
            h.view_mut((0, i * self.cfg.user_dim()), (heard.nrows(), width))
                .copy_from(&heard.columns(i * width, width));
        }
        Ok(h)
    }

    /// Same realization with a different decision slot.
    pub fn with_decision(&self, ell1: usize) -> Result<Self> {
        check_slot(ell1, &self.cfg)?;
        Ok(Self {
            h_dst: dst_from_symbols(&self.symbols, ell1, &self.cfg),
            ell1,
            symbols: self.symbols.clone(),
            cfg: self.cfg.clone(),
        })
    }

    pub fn symbols(&self) -> &SymbolChannels {
        &self.symbols
    }

    pub fn relay_silent(&self) -> bool {
        self.ell1 == self.cfg.slots
    }

    pub fn config(&self) -> &MarcConfig {
        &self.cfg
    }
}

/// Convenience for tests and CLI input: a complex matrix from row-major
/// `(re, im)` pairs.
pub fn complex_matrix(rows: usize, cols: usize, entries: &[(f64, f64)]) -> CMatrix {
    DMatrix::from_row_iterator(rows, cols, entries.iter().map(|&(re, im)| Complex64::new(re, im)))
}
