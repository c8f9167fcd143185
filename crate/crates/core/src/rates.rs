//! Rate constraints, DDF decision time and outage events.
//!
//! All rates are in bits per channel use (base-2 logs). Because the fading
//! is constant over a codeword, every super-channel log-det is a weighted sum
//! of per-symbol log-dets, which is what these functions evaluate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, MarcConfig, SymbolChannels};
use crate::error::{Error, Result};
use crate::linalg::{half_log2_det_gram, RMatrix};
use crate::mapper::MapperKind;

/// Largest user count for which subsets are enumerated.
pub const MAX_USERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// One-to-one relay mapping.
    Omlc,
    /// Modulo-sum relay mapping.
    Msmlc,
}

impl Scheme {
    pub fn mapper_kind(self) -> MapperKind {
        match self {
            Scheme::Omlc => MapperKind::OneToOneLinear,
            Scheme::Msmlc => MapperKind::ModuloSum,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Omlc => "omlc",
            Scheme::Msmlc => "msmlc",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omlc" | "o-mlc" => Ok(Scheme::Omlc),
            "msmlc" | "ms-mlc" => Ok(Scheme::Msmlc),
            _ => Err(Error::Parse(format!("unknown scheme `{s}` (expected omlc or msmlc)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    /// Successive tree decoder with `K!` candidates.
    KStage,
    /// Single joint coset decoder.
    OneStage,
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::KStage => "kstage",
            DecoderKind::OneStage => "onestage",
        })
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kstage" | "k-stage" => Ok(DecoderKind::KStage),
            "onestage" | "one-stage" => Ok(DecoderKind::OneStage),
            _ => Err(Error::Parse(format!(
                "unknown decoder `{s}` (expected kstage or onestage)"
            ))),
        }
    }
}

/// Which rate region to test a rate vector against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRegionSpec {
    pub scheme: Scheme,
    pub decoder: DecoderKind,
    pub rates: Vec<f64>,
    pub relay_rate: f64,
    /// Also declare outage whenever the relay never decodes.
    #[serde(default)]
    pub silent_relay_is_outage: bool,
}

impl RateRegionSpec {
    pub fn new(scheme: Scheme, decoder: DecoderKind, rates: Vec<f64>, relay_rate: f64) -> Result<Self> {
        if rates.iter().chain([&relay_rate]).any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Argument("rates must be finite and non-negative".into()));
        }
        Ok(Self {
            scheme,
            decoder,
            rates,
            relay_rate,
            silent_relay_is_outage: false,
        })
    }

    /// Rates taken from `cfg`.
    pub fn from_config(cfg: &MarcConfig, scheme: Scheme, decoder: DecoderKind) -> Result<Self> {
        Self::new(scheme, decoder, cfg.rates.clone(), cfg.relay_rate)
    }

    fn check(&self, cfg: &MarcConfig) -> Result<()> {
        if self.rates.len() != cfg.users {
            return Err(Error::Config(format!(
                "{} rates given for {} users",
                self.rates.len(),
                cfg.users
            )));
        }
        if cfg.users > MAX_USERS {
            return Err(Error::Unsupported(format!(
                "subset enumeration is capped at {MAX_USERS} users"
            )));
        }
        Ok(())
    }
}

/// `½ log2 det(I + HᵀH)`: the rate of an unstructured Gaussian codebook
/// over real channel `H`.
pub fn rate_un_g(h: &RMatrix) -> f64 {
    half_log2_det_gram(h)
}

/// Per-symbol capacities of one user subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetCapacity {
    /// Users in the subset (0-based, increasing).
    pub users: Vec<usize>,
    /// Users to relay.
    pub relay: f64,
    /// Users to destination.
    pub dst_users: f64,
    /// Users and relay to destination.
    pub dst_with_relay: f64,
}

/// Per-symbol capacities for every nonempty subset, in bitmask order.
pub fn subset_capacities(sym: &SymbolChannels, cfg: &MarcConfig) -> Vec<SubsetCapacity> {
    let k = cfg.users;
    (1u32..(1 << k))
        .map(|mask| {
            let users: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let hcat = |blocks: &[RMatrix], extra: Option<&RMatrix>| {
                let rows = blocks[0].nrows();
                let cols: usize = users.iter().map(|&i| blocks[i].ncols()).sum::<usize>()
                    + extra.map_or(0, RMatrix::ncols);
                let mut h = RMatrix::zeros(rows, cols);
                let mut c = 0;
                for b in users.iter().map(|&i| &blocks[i]).chain(extra) {
                    h.columns_mut(c, b.ncols()).copy_from(b);
                    c += b.ncols();
                }
                h
            };
            SubsetCapacity {
                relay: rate_un_g(&hcat(&sym.relay_users, None)),
                dst_users: rate_un_g(&hcat(&sym.dst_users, None)),
                dst_with_relay: rate_un_g(&hcat(&sym.dst_users, Some(&sym.dst_relay))),
                users,
            }
        })
        .collect()
}

fn log2(x: f64) -> f64 {
    x.log2()
}

/// Relay-side one-stage loss `M_u |S| log(K/|S|)`.
pub fn relay_one_stage_loss(cfg: &MarcConfig, size: usize) -> f64 {
    cfg.user_antennas as f64 * size as f64 * log2(cfg.users as f64 / size as f64)
}

/// Destination one-stage loss `(M_u|S| + M_r) log((K M_u + M_r)/(|S| M_u + M_r))`.
pub fn dst_one_stage_loss(cfg: &MarcConfig, size: usize) -> f64 {
    let (mu, mr, k, s) = (
        cfg.user_antennas as f64,
        cfg.relay_antennas as f64,
        cfg.users as f64,
        size as f64,
    );
    (mu * s + mr) * log2((k * mu + mr) / (s * mu + mr))
}

/// Loss in the modulo-sum ambiguity constraint.
pub fn modulo_sum_loss(cfg: &MarcConfig, size: usize, decoder: DecoderKind) -> f64 {
    let (mu, mr, k, s) = (
        cfg.user_antennas as f64,
        cfg.relay_antennas as f64,
        cfg.users as f64,
        size as f64,
    );
    match decoder {
        DecoderKind::KStage => mu * s * log2((s * mu + mr) / (s * mu)),
        DecoderKind::OneStage => mu * s * log2((k * mu + mr) / (s * mu)),
    }
}

fn subset_rate(spec: &RateRegionSpec, users: &[usize]) -> f64 {
    users.iter().map(|&i| spec.rates[i]).sum()
}

fn relay_violations(caps: &[SubsetCapacity], ell: usize, spec: &RateRegionSpec, cfg: &MarcConfig) -> Vec<Vec<usize>> {
    let frac = ell as f64 / cfg.slots as f64;
    caps.iter()
        .filter(|c| {
            let loss = match spec.decoder {
                DecoderKind::KStage => 0.0,
                DecoderKind::OneStage => relay_one_stage_loss(cfg, c.users.len()),
            };
            subset_rate(spec, &c.users) >= frac * c.relay - loss
        })
        .map(|c| c.users.clone())
        .collect()
}

/// Decision slot from precomputed subset capacities.
pub fn decision_time_from(caps: &[SubsetCapacity], spec: &RateRegionSpec, cfg: &MarcConfig) -> usize {
    (1..cfg.slots)
        .find(|&ell| relay_violations(caps, ell, spec, cfg).is_empty())
        .unwrap_or(cfg.slots)
}

/// Earliest slot `ell` in `1..L` after which the relay can decode every user
/// subset; `L` when it never can (relay silent).
pub fn decision_time(real: &ChannelRealization, spec: &RateRegionSpec, cfg: &MarcConfig) -> Result<usize> {
    spec.check(cfg)?;
    let sym = SymbolChannels::new(real, cfg)?;
    Ok(decision_time_from(&subset_capacities(&sym, cfg), spec, cfg))
}

/// Outage decision for one channel realization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutageVerdict {
    pub in_outage: bool,
    /// Decision slot in `1..=L`.
    pub ell1: usize,
    /// Subsets (0-based users) whose constraints fail.
    pub violated_subsets: Vec<Vec<usize>>,
}

/// Destination-side verdict from precomputed capacities and decision slot.
pub fn verdict_from(caps: &[SubsetCapacity], ell1: usize, spec: &RateRegionSpec, cfg: &MarcConfig) -> OutageVerdict {
    let l = cfg.slots as f64;
    let w1 = ell1 as f64 / l;
    let mut violated = Vec::new();
    for c in caps {
        let s = c.users.len();
        let rate = subset_rate(spec, &c.users);
        let mut bound = w1 * c.dst_users + (1.0 - w1) * c.dst_with_relay;
        if spec.decoder == DecoderKind::OneStage {
            bound -= dst_one_stage_loss(cfg, s);
        }
        let mut fails = rate >= bound;
        if spec.scheme == Scheme::Msmlc && s > 1 {
            let extra = c.dst_users - modulo_sum_loss(cfg, s, spec.decoder) + spec.relay_rate;
            fails |= rate >= extra;
        }
        if fails {
            violated.push(c.users.clone());
        }
    }
    if violated.is_empty() && spec.silent_relay_is_outage && ell1 == cfg.slots {
        violated = relay_violations(caps, cfg.slots - 1, spec, cfg);
    }
    OutageVerdict {
        in_outage: !violated.is_empty(),
        ell1,
        violated_subsets: violated,
    }
}

/// Outage indicator: decision slot from the relay rule, then every user
/// subset checked against the destination region of `spec`.
pub fn outage_indicator(real: &ChannelRealization, spec: &RateRegionSpec, cfg: &MarcConfig) -> Result<OutageVerdict> {
    spec.check(cfg)?;
    let sym = SymbolChannels::new(real, cfg)?;
    let caps = subset_capacities(&sym, cfg);
    let ell1 = decision_time_from(&caps, spec, cfg);
    Ok(verdict_from(&caps, ell1, spec, cfg))
}

/// Counts of region-ordering violations over random rate vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InclusionReport {
    pub samples: usize,
    /// Feasible for one-stage O-MLC but not for K-stage O-MLC.
    pub one_stage_violations: usize,
    /// Feasible for K-stage MS-MLC but not for K-stage O-MLC.
    pub modulo_sum_violations: usize,
}

/// Samples rate vectors uniformly up to the sum capacity and checks that the
/// smaller regions are contained in the K-stage O-MLC region.
pub fn region_inclusion_check<R: Rng + ?Sized>(
    real: &ChannelRealization,
    cfg: &MarcConfig,
    samples: usize,
    rng: &mut R,
) -> Result<InclusionReport> {
    let sym = SymbolChannels::new(real, cfg)?;
    let caps = subset_capacities(&sym, cfg);
    let full = caps.last().map_or(0.0, |c| c.dst_with_relay.max(c.relay));
    let top = (1.2 * full).max(0.1);
    let mut report = InclusionReport {
        samples,
        one_stage_violations: 0,
        modulo_sum_violations: 0,
    };
    for _ in 0..samples {
        let rates: Vec<f64> = (0..cfg.users).map(|_| rng.random_range(0.0..top / cfg.users as f64)).collect();
        let relay_rate = rng.random_range(0.0..top);
        let feasible = |scheme, decoder| {
            let spec = RateRegionSpec::new(scheme, decoder, rates.clone(), relay_rate)?;
            spec.check(cfg)?;
            let ell1 = decision_time_from(&caps, &spec, cfg);
            Ok::<_, Error>(!verdict_from(&caps, ell1, &spec, cfg).in_outage)
        };
        let base = feasible(Scheme::Omlc, DecoderKind::KStage)?;
        if feasible(Scheme::Omlc, DecoderKind::OneStage)? && !base {
            report.one_stage_violations += 1;
        }
        if feasible(Scheme::Msmlc, DecoderKind::KStage)? && !base {
            report.modulo_sum_violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dst_superchannel, build_relay_superchannel, sample_rayleigh};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(scheme: Scheme, decoder: DecoderKind, cfg: &MarcConfig) -> RateRegionSpec {
        RateRegionSpec::from_config(cfg, scheme, decoder).unwrap()
    }

    #[test]
    fn rate_un_g_closed_forms() {
        assert_eq!(rate_un_g(&RMatrix::zeros(3, 2)), 0.0);
        assert!((rate_un_g(&RMatrix::from_element(1, 1, 1.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rate_un_g_matches_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let h = RMatrix::from_fn(3, 2, |_, _| rng.random_range(-2.0..2.0));
            let svd = h.clone().svd(false, false);
            let oracle: f64 = svd.singular_values.iter().map(|s| 0.5 * (1.0 + s * s).log2()).sum();
            assert!((rate_un_g(&h) - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn losses_vanish_for_full_set() {
        let cfg = MarcConfig {
            users: 3,
            rates: vec![1.0; 3],
            relay_antennas: 2,
            ..MarcConfig::default()
        };
        assert_eq!(relay_one_stage_loss(&cfg, 3), 0.0);
        assert_eq!(dst_one_stage_loss(&cfg, 3), 0.0);
        assert!(relay_one_stage_loss(&cfg, 1) > 0.0);
        assert!(dst_one_stage_loss(&cfg, 2) > 0.0);
    }

    #[test]
    fn subset_capacities_match_dense_super_channels() {
        let cfg = MarcConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let real = sample_rayleigh(&cfg, &mut rng);
        let sym = SymbolChannels::new(&real, &cfg).unwrap();
        let caps = subset_capacities(&sym, &cfg);
        let lt = cfg.symbols() as f64;
        for ell1 in 1..=cfg.slots {
            let h = build_dst_superchannel(&real, ell1, &cfg).unwrap();
            for c in &caps {
                let mut ranges: Vec<(usize, usize)> = c.users.iter().map(|&i| cfg.dst_columns(i)).collect();
                ranges.push(cfg.dst_columns(cfg.users));
                let dense = rate_un_g(&crate::linalg::select_columns(&h, &ranges)) / lt;
                let w = ell1 as f64 / cfg.slots as f64;
                let fast = w * c.dst_users + (1.0 - w) * c.dst_with_relay;
                assert!((dense - fast).abs() < 1e-9);
            }
        }
        let hr = build_relay_superchannel(&real, 1, &cfg).unwrap();
        let dense = rate_un_g(&hr) / lt;
        assert!((dense - 0.5 * caps.last().unwrap().relay).abs() < 1e-9);
    }

    #[test]
    fn zero_channels_are_in_outage_everywhere() {
        let cfg = MarcConfig::default();
        let real = ChannelRealization::zeros(&cfg);
        let s = spec(Scheme::Omlc, DecoderKind::KStage, &cfg);
        assert_eq!(decision_time(&real, &s, &cfg).unwrap(), cfg.slots);
        let v = outage_indicator(&real, &s, &cfg).unwrap();
        assert!(v.in_outage);
        assert_eq!(v.violated_subsets.len(), 3);
    }

    #[test]
    fn zero_rates_never_outage() {
        let cfg = MarcConfig {
            rates: vec![0.0, 0.0],
            ..MarcConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let real = sample_rayleigh(&cfg, &mut rng);
            for scheme in [Scheme::Omlc, Scheme::Msmlc] {
                for decoder in [DecoderKind::KStage, DecoderKind::OneStage] {
                    let v = outage_indicator(&real, &spec(scheme, decoder, &cfg), &cfg).unwrap();
                    assert!(!v.in_outage, "{scheme} {decoder}");
                }
            }
        }
    }

    #[test]
    fn strong_relay_links_decide_in_first_slot() {
        let cfg = MarcConfig {
            sr_offset_db: 60.0,
            ..MarcConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let real = sample_rayleigh(&cfg, &mut rng);
        let s = spec(Scheme::Omlc, DecoderKind::KStage, &cfg);
        assert_eq!(decision_time(&real, &s, &cfg).unwrap(), 1);
    }

    #[test]
    fn decision_time_is_a_linear_scan() {
        let cfg = MarcConfig {
            slots: 4,
            ..MarcConfig::default()
        };
        let s = spec(Scheme::Omlc, DecoderKind::KStage, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let real = sample_rayleigh(&cfg, &mut rng);
            let expected = (1..cfg.slots)
                .find(|&ell| {
                    let h = build_relay_superchannel(&real, ell, &cfg).unwrap();
                    (1u32..4).all(|mask| {
                        let users: Vec<usize> = (0..2).filter(|i| mask & (1 << i) != 0).collect();
                        let width = h.ncols() / 2;
                        let ranges: Vec<(usize, usize)> = users.iter().map(|&i| (i * width, width)).collect();
                        let cap = rate_un_g(&crate::linalg::select_columns(&h, &ranges)) / cfg.symbols() as f64;
                        users.iter().map(|&i| cfg.rates[i]).sum::<f64>() < cap
                    })
                })
                .unwrap_or(cfg.slots);
            assert_eq!(decision_time(&real, &s, &cfg).unwrap(), expected);
        }
    }

    #[test]
    fn stricter_regions_are_contained() {
        let cfg = MarcConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let real = sample_rayleigh(&cfg, &mut rng);
            let report = region_inclusion_check(&real, &cfg, 200, &mut rng).unwrap();
            assert_eq!(report.one_stage_violations, 0);
            assert_eq!(report.modulo_sum_violations, 0);
        }
    }

    #[test]
    fn large_relay_rate_removes_modulo_sum_penalty() {
        let cfg = MarcConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let real = sample_rayleigh(&cfg, &mut rng);
            let mut ms = spec(Scheme::Msmlc, DecoderKind::KStage, &cfg);
            ms.relay_rate = 1e3;
            let o = spec(Scheme::Omlc, DecoderKind::KStage, &cfg);
            assert_eq!(
                outage_indicator(&real, &ms, &cfg).unwrap(),
                outage_indicator(&real, &o, &cfg).unwrap()
            );
        }
    }

    #[test]
    fn silent_relay_flag() {
        let mut cfg = MarcConfig::default();
        cfg.rates = vec![0.1, 0.1];
        let mut real = ChannelRealization::zeros(&cfg);
        real.h_dst[0][(0, 0)] = num_complex::Complex64::new(3.0, 0.0);
        real.h_dst[1][(0, 0)] = num_complex::Complex64::new(0.0, 3.0);
        let mut s = spec(Scheme::Omlc, DecoderKind::KStage, &cfg);
        assert!(!outage_indicator(&real, &s, &cfg).unwrap().in_outage);
        s.silent_relay_is_outage = true;
        let v = outage_indicator(&real, &s, &cfg).unwrap();
        assert!(v.in_outage && !v.violated_subsets.is_empty());
    }

    #[test]
    fn parse_names() {
        assert_eq!("MSMLC".parse::<Scheme>().unwrap(), Scheme::Msmlc);
        assert_eq!("kstage".parse::<DecoderKind>().unwrap(), DecoderKind::KStage);
        assert!("x".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Omlc.to_string(), "omlc");
        assert_eq!(DecoderKind::OneStage.to_string(), "onestage");
    }

    #[test]
    fn rejects_rate_count_mismatch() {
        let cfg = MarcConfig::default();
        let s = RateRegionSpec::new(Scheme::Omlc, DecoderKind::KStage, vec![1.0], 1.0).unwrap();
        assert!(outage_indicator(&ChannelRealization::zeros(&cfg), &s, &cfg).is_err());
        assert!(RateRegionSpec::new(Scheme::Omlc, DecoderKind::KStage, vec![-1.0], 1.0).is_err());
    }
}
