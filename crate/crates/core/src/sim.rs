//! Monte Carlo engines for outage and coded block-error curves.
//!
//! Each trial draws from its own random stream keyed by the master seed, the
//! SNR point and the trial index, and per-point results are plain counts, so
//! curves are identical for any number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_rayleigh, MarcConfig, SuperChannel};
use crate::codec::{decode, relay_decision, Dithers, Observation, Transmission};
use crate::error::{Error, Result};
use crate::lattice::{NestedLatticeCode, NORMALIZATION_SAMPLES};
use crate::linalg::{RMatrix, RVector};
use crate::mapper::RelayMapper;
use crate::rates::{outage_indicator, DecoderKind, RateRegionSpec, Scheme};
use crate::rng::{stream_rng, trial_rng, CODE_STREAM};
use crate::sphere::{SearchConfig, DEFAULT_BUDGET};

/// Exact CSV header of every curve file.
pub const CSV_HEADER: &str = "mode,scheme,decoder,snr_db,trials,failures,probability,wilson_halfwidth,seed";

/// Two-sided 95% normal quantile used for Wilson intervals.
pub const WILSON_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Outage,
    Coded,
}

impl std::fmt::Display for SimMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimMode::Outage => "outage",
            SimMode::Coded => "coded",
        })
    }
}

/// Construction-A parameters of one transmitter's code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    pub p: u64,
    pub k: usize,
    /// Initial scale; power normalization rescales it.
    pub gamma: f64,
}

/// Everything needed to reproduce one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    pub mode: SimMode,
    pub cfg: MarcConfig,
    pub spec: RateRegionSpec,
    pub snr_grid_db: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
    pub user_code: CodeParams,
    pub relay_code: CodeParams,
    pub normalization_samples: usize,
    pub search_budget: u64,
    /// Receiver noise on; switching it off gives a loopback run.
    pub noise: bool,
    /// Worker threads (0 = one per core). Does not affect results.
    #[serde(skip)]
    pub threads: usize,
}

impl SimPlan {
    /// Desk-scale theoretical outage run: two single-antenna users, L = 2,
    /// 2 BPCU each, source-relay links 10 dB stronger.
    pub fn outage_default() -> Self {
        Self {
            mode: SimMode::Outage,
            cfg: MarcConfig::default(),
            spec: RateRegionSpec::from_config(&MarcConfig::default(), Scheme::Omlc, DecoderKind::KStage)
                .expect("default rates are valid"),
            snr_grid_db: (0..=8).map(|i| 5.0 * i as f64).collect(),
            trials: 100_000,
            master_seed: 1,
            user_code: CodeParams { p: 97, k: 3, gamma: 1.0 },
            relay_code: CodeParams { p: 97, k: 3, gamma: 1.0 },
            normalization_samples: NORMALIZATION_SAMPLES,
            search_budget: DEFAULT_BUDGET,
            noise: true,
            threads: 0,
        }
    }

    /// Desk-scale coded run for `scheme`: O-MLC uses a two-antenna relay and a
    /// single-antenna destination with (p, k) = (97, 3); MS-MLC a
    /// single-antenna relay, two destination antennas, source-relay links
    /// 15 dB stronger and (47, 3).
    pub fn coded_default(scheme: Scheme) -> Self {
        let (relay_antennas, dest_antennas, relay_rate, sr_offset_db, p) = match scheme {
            Scheme::Omlc => (2, 1, 4.0, 10.0, 97),
            Scheme::Msmlc => (1, 2, 2.0, 15.0, 47),
        };
        let cfg = MarcConfig {
            relay_antennas,
            dest_antennas,
            relay_rate,
            sr_offset_db,
            ..MarcConfig::default()
        };
        let code = CodeParams { p, k: 3, gamma: 1.0 };
        Self {
            mode: SimMode::Coded,
            spec: RateRegionSpec::from_config(&cfg, scheme, DecoderKind::OneStage).expect("default rates are valid"),
            cfg,
            snr_grid_db: (0..=4).map(|i| 20.0 + 5.0 * i as f64).collect(),
            trials: 1_000,
            user_code: code,
            relay_code: code,
            ..Self::outage_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.trials == 0 || self.trials > u64::from(u32::MAX) {
            return Err(Error::Config(format!("trials must be in 1..=2^32-1, got {}", self.trials)));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid must be non-empty and finite".into()));
        }
        if self.snr_grid_db.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("SNR grid must be strictly increasing".into()));
        }
        if self.spec.rates.len() != self.cfg.users {
            return Err(Error::Config(format!(
                "{} rates for {} users",
                self.spec.rates.len(),
                self.cfg.users
            )));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

/// Aggregated result at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub trials: u64,
    pub failures: u64,
    pub probability: f64,
    pub wilson_halfwidth: f64,
    /// Failures caused by an exhausted sphere-decoder budget.
    #[serde(default)]
    pub budget_failures: u64,
}

impl CurvePoint {
    pub fn new(snr_db: f64, trials: u64, failures: u64) -> Self {
        Self {
            snr_db,
            trials,
            failures,
            probability: failures as f64 / trials as f64,
            wilson_halfwidth: wilson_halfwidth(failures, trials),
            budget_failures: 0,
        }
    }
}

/// A probability-versus-SNR curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub mode: SimMode,
    pub scheme: Scheme,
    pub decoder: DecoderKind,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.mode, self.scheme, self.decoder, p.snr_db, p.trials, p.failures, p.probability, p.wilson_halfwidth, self.seed
            );
        }
        s
    }
}

/// Half-width of the 95% Wilson score interval.
pub fn wilson_halfwidth(failures: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    WILSON_Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

/// Least-squares slope of `log10(probability)` against `snr_db / 10` over
/// points with `lo <= snr_db <= hi` and at least one failure.
pub fn estimate_slope(points: &[CurvePoint], window: (f64, f64)) -> Result<f64> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.snr_db >= window.0 && p.snr_db <= window.1 && p.failures > 0)
        .map(|p| (p.snr_db / 10.0, p.probability.log10()))
        .collect();
    if used.len() < 2 {
        return Err(Error::Numerical(format!(
            "slope needs two points with failures in [{}, {}] dB, found {}",
            window.0,
            window.1,
            used.len()
        )));
    }
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Theoretical outage probability at every SNR of the plan.
pub fn run_outage(plan: &SimPlan) -> Result<Curve> {
    plan.validate()?;
    let pool = plan.pool()?;
    let mut points = Vec::with_capacity(plan.snr_grid_db.len());
    for (pi, &snr) in plan.snr_grid_db.iter().enumerate() {
        let cfg = plan.cfg.at_snr(snr);
        let failures = pool.install(|| {
            (0..plan.trials as u32)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(plan.master_seed, pi as u32, t);
                    let real = sample_rayleigh(&cfg, &mut rng);
                    Ok::<_, Error>(u64::from(outage_indicator(&real, &plan.spec, &cfg)?.in_outage))
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))
        })?;
        log::info!("outage {snr} dB: {failures}/{}", plan.trials);
        points.push(CurvePoint::new(snr, plan.trials, failures));
    }
    Ok(Curve {
        mode: SimMode::Outage,
        scheme: plan.spec.scheme,
        decoder: plan.spec.decoder,
        seed: plan.master_seed,
        points,
    })
}

/// Generates and power-normalizes the user and relay codes of a plan from
/// the reserved code stream.
pub fn build_codes(plan: &SimPlan) -> Result<RelayMapper> {
    plan.validate()?;
    let cfg = &plan.cfg;
    let mut rng = stream_rng(plan.master_seed, CODE_STREAM);
    let mut make = |n, params: CodeParams, rate, antennas| {
        NestedLatticeCode::random(n, params.p, params.k, params.gamma, rate, antennas, &mut rng)?
            .normalize_power(&mut rng, plan.normalization_samples)
    };
    let users = plan
        .spec
        .rates
        .iter()
        .map(|&r| make(cfg.user_dim(), plan.user_code, r, cfg.user_antennas))
        .collect::<Result<Vec<_>>>()?;
    let relay = make(cfg.relay_dim(), plan.relay_code, plan.spec.relay_rate, cfg.relay_antennas)?;
    RelayMapper::new(plan.spec.scheme.mapper_kind(), users, relay)
}

/// Outcome of one coded trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub failed: bool,
    pub budget_exhausted: bool,
    pub ell1: usize,
}

fn noise_vector<R: Rng + ?Sized>(n: usize, on: bool, rng: &mut R) -> RVector {
    let normal = Normal::new(0.0, 0.5f64.sqrt()).expect("valid normal");
    let v = RVector::from_fn(n, |_, _| normal.sample(rng));
    if on {
        v
    } else {
        v * 0.0
    }
}

/// One coded transmission: fading, DDF relay decision with the genie rule,
/// destination decoding.
pub fn coded_trial<R: Rng + ?Sized>(
    plan: &SimPlan,
    cfg: &MarcConfig,
    mapper: &RelayMapper,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let search = SearchConfig {
        budget: plan.search_budget,
        ..SearchConfig::default()
    };
    let real = sample_rayleigh(cfg, rng);
    let messages: Vec<Vec<i64>> = mapper
        .user_codes()
        .iter()
        .map(|c| (0..c.dim()).map(|_| rng.random_range(0..c.tau() as i64)).collect())
        .collect();
    let dithers = Dithers::sample(mapper, rng);
    let sent = Transmission::new(mapper, &messages, &dithers)?;
    let relay_noise = noise_vector(cfg.relay_dim(), plan.noise, rng);
    let dst_noise = noise_vector(cfg.dst_dim(), plan.noise, rng);

    let listening = SuperChannel::assemble(&real, cfg.slots, cfg)?;
    let ell1 = relay_decision(&listening, mapper, &dithers, &sent, &messages, &relay_noise, plan.spec.decoder, search)?;
    let channel = listening.with_decision(ell1)?;
    let with_relay = !channel.relay_silent();
    let h: RMatrix = if with_relay {
        channel.h_dst.clone()
    } else {
        channel.h_dst.columns(0, cfg.users * cfg.user_dim()).into_owned()
    };
    let y = &h * sent.stacked(with_relay) + dst_noise;
    let decoded = decode(
        &Observation {
            y: &y,
            h: &h,
            mapper,
            dithers: &dithers,
            with_relay,
            search,
        },
        plan.spec.decoder,
    )?;
    if decoded.budget_exhausted {
        log::debug!("sphere decoder budget exhausted in a trial");
    }
    Ok(TrialOutcome {
        failed: decoded.messages.as_deref() != Some(&messages[..]),
        budget_exhausted: decoded.budget_exhausted,
        ell1,
    })
}

/// Coded block-error rate at every SNR of the plan, with the codes used.
pub fn run_coded_bler(plan: &SimPlan) -> Result<(Curve, RelayMapper)> {
    plan.validate()?;
    let mapper = build_codes(plan)?;
    let curve = run_coded_with(plan, &mapper)?;
    Ok((curve, mapper))
}

/// Coded block-error rate with caller-supplied codes.
pub fn run_coded_with(plan: &SimPlan, mapper: &RelayMapper) -> Result<Curve> {
    plan.validate()?;
    let pool = plan.pool()?;
    let mut points = Vec::with_capacity(plan.snr_grid_db.len());
    for (pi, &snr) in plan.snr_grid_db.iter().enumerate() {
        let cfg = plan.cfg.at_snr(snr);
        let (failures, budget) = pool.install(|| {
            (0..plan.trials as u32)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(plan.master_seed, pi as u32, t);
                    let o = coded_trial(plan, &cfg, mapper, &mut rng)?;
                    Ok::<_, Error>((u64::from(o.failed), u64::from(o.budget_exhausted && o.failed)))
                })
                .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))
        })?;
        if budget > 0 {
            log::warn!("{snr} dB: {budget} failures from sphere-decoder budget exhaustion");
        }
        log::info!("coded {snr} dB: {failures}/{}", plan.trials);
        let mut point = CurvePoint::new(snr, plan.trials, failures);
        point.budget_failures = budget;
        points.push(point);
    }
    Ok(Curve {
        mode: SimMode::Coded,
        scheme: plan.spec.scheme,
        decoder: plan.spec.decoder,
        seed: plan.master_seed,
        points,
    })
}

/// Run description written next to every CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub csv: String,
    pub plan: SimPlan,
    pub points: Vec<CurvePoint>,
    /// Text descriptions of the user codes and the relay code.
    pub user_codes: Vec<String>,
    pub relay_code: Option<String>,
}

/// Writes `<stem>.csv` and `<stem>.manifest.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    stem: &str,
    plan: &SimPlan,
    curve: &Curve,
    mapper: Option<&RelayMapper>,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    fs::write(&csv, curve.to_csv())?;
    let manifest = Manifest {
        csv: format!("{stem}.csv"),
        plan: plan.clone(),
        points: curve.points.clone(),
        user_codes: mapper.map_or_else(Vec::new, |m| m.user_codes().iter().map(NestedLatticeCode::to_text).collect()),
        relay_code: mapper.map(|m| m.relay_code().to_text()),
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok((csv, manifest_path))
}
