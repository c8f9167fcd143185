//! Flat TOML run configuration. Every key is optional; unknown keys are an
//! error. Values are layered as built-in defaults, then the file, then
//! command-line flags.

use std::fs;
use std::path::Path;

use marc_core::rates::{DecoderKind, RateRegionSpec, Scheme};
use marc_core::sim::SimPlan;
use serde::Deserialize;

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub users: Option<usize>,
    pub user_antennas: Option<usize>,
    pub relay_antennas: Option<usize>,
    pub dest_antennas: Option<usize>,
    pub slots: Option<usize>,
    pub slot_len: Option<usize>,
    pub sr_offset_db: Option<f64>,
    pub rates: Option<Vec<f64>>,
    pub relay_rate: Option<f64>,
    pub scheme: Option<Scheme>,
    pub decoder: Option<DecoderKind>,
    pub silent_relay_is_outage: Option<bool>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub snr_from: Option<f64>,
    pub snr_to: Option<f64>,
    pub snr_step: Option<f64>,
    pub threads: Option<usize>,
    pub p: Option<u64>,
    pub k: Option<usize>,
    pub relay_p: Option<u64>,
    pub relay_k: Option<usize>,
    pub normalization_samples: Option<usize>,
    pub search_budget: Option<u64>,
    pub noise: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))
    }

    /// Later layers win: `self` is overridden by every `Some` in `other`.
    pub fn overlay(self, other: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FileConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            users, user_antennas, relay_antennas, dest_antennas, slots, slot_len, sr_offset_db, rates,
            relay_rate, scheme, decoder, silent_relay_is_outage, seed, trials, snr_from, snr_to, snr_step,
            threads, p, k, relay_p, relay_k, normalization_samples, search_budget, noise
        )
    }

    /// Applies the layer to `base`. The rate region is rebuilt so that it
    /// follows the final rates, scheme and decoder.
    pub fn apply(&self, mut plan: SimPlan) -> Result<SimPlan, String> {
        let cfg = &mut plan.cfg;
        macro_rules! set {
            ($($src:ident => $dst:expr),*) => { $(if let Some(v) = self.$src.clone() { $dst = v; })* };
        }
        set!(
            users => cfg.users,
            user_antennas => cfg.user_antennas,
            relay_antennas => cfg.relay_antennas,
            dest_antennas => cfg.dest_antennas,
            slots => cfg.slots,
            slot_len => cfg.slot_len,
            sr_offset_db => cfg.sr_offset_db,
            rates => cfg.rates,
            relay_rate => cfg.relay_rate,
            seed => plan.master_seed,
            trials => plan.trials,
            threads => plan.threads,
            p => plan.user_code.p,
            k => plan.user_code.k,
            relay_p => plan.relay_code.p,
            relay_k => plan.relay_code.k,
            normalization_samples => plan.normalization_samples,
            search_budget => plan.search_budget,
            noise => plan.noise
        );
        if self.users.is_some() && self.rates.is_none() && plan.cfg.rates.len() != plan.cfg.users {
            let r = plan.cfg.rates.first().copied().unwrap_or(2.0);
            plan.cfg.rates = vec![r; plan.cfg.users];
        }
        let scheme = self.scheme.unwrap_or(plan.spec.scheme);
        let decoder = self.decoder.unwrap_or(plan.spec.decoder);
        let silent = self.silent_relay_is_outage.unwrap_or(plan.spec.silent_relay_is_outage);
        plan.spec = RateRegionSpec::from_config(&plan.cfg, scheme, decoder).map_err(|e| e.to_string())?;
        plan.spec.silent_relay_is_outage = silent;

        if self.snr_from.is_some() || self.snr_to.is_some() || self.snr_step.is_some() {
            let grid = &plan.snr_grid_db;
            let from = self.snr_from.unwrap_or(grid.first().copied().unwrap_or(0.0));
            let to = self.snr_to.unwrap_or(grid.last().copied().unwrap_or(from));
            let step = self
                .snr_step
                .unwrap_or(if grid.len() > 1 { grid[1] - grid[0] } else { 5.0 });
            plan.snr_grid_db = snr_grid(from, to, step)?;
        }
        Ok(plan)
    }
}

/// Inclusive grid `from, from + step, ..., <= to`.
pub fn snr_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() || to < from {
        return Err(format!("bad SNR grid: from {from} to {to} step {step}"));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    if n > 10_000 {
        return Err(format!("SNR grid of {n} points is too long"));
    }
    Ok((0..n).map(|i| from + step * i as f64).collect())
}
