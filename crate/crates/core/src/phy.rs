//! Link abstraction: per-receiver, per-TTI SINR under partial cancellation
//! and the threshold decode rule.
//!
//! Everything here is linear milliwatts. Interference sums always run over
//! the contributions in record order (descending power), so results do not
//! depend on insertion order.

use std::sync::Arc;

use crate::allocation::{Resource, SciPayload};
use crate::channel::db_to_linear;
use crate::config::SimConfig;
use crate::error::PhyError;

/// One transmission as seen by one receiver.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub tx: u32,
    pub packet_id: u64,
    pub rx_power_mw: f64,
    /// Fraction of the transmit power landing in the band of interest.
    pub eta: f64,
    pub resource: Resource,
    pub sci: Arc<SciPayload>,
}

/// Everything a receiver captured in one TTI, with per-contribution
/// cancellation flags.
#[derive(Debug, Clone)]
pub struct TtiRecord {
    pub tti: u64,
    contributions: Vec<Contribution>,
    cancelled: Vec<bool>,
    /// Noise power in the bandwidth of one packet.
    pub noise_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub gamma_bar_linear: f64,
    /// Residual fraction of a cancelled signal's power.
    pub kn_linear: f64,
}

impl DecodeParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            gamma_bar_linear: db_to_linear(cfg.mcs_sinr_threshold_db),
            kn_linear: db_to_linear(cfg.kn_db),
        }
    }
}

impl TtiRecord {
    pub fn new(tti: u64, mut contributions: Vec<Contribution>, noise_mw: f64) -> Self {
        contributions.sort_by(|a, b| {
            b.rx_power_mw
                .total_cmp(&a.rx_power_mw)
                .then(a.tx.cmp(&b.tx))
        });
        let cancelled = vec![false; contributions.len()];
        Self {
            tti,
            contributions,
            cancelled,
            noise_mw,
        }
    }

    pub fn contributions(&self) -> &[Contribution] {
        &self.contributions
    }

    pub fn len(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contributions.is_empty()
    }

    pub fn index_of(&self, tx: u32) -> Option<usize> {
        self.contributions.iter().position(|c| c.tx == tx)
    }

    pub fn is_cancelled(&self, idx: usize) -> bool {
        self.cancelled[idx]
    }

    pub fn cancelled_txs(&self) -> impl Iterator<Item = u32> + '_ {
        self.contributions
            .iter()
            .zip(&self.cancelled)
            .filter(|(_, &x)| x)
            .map(|(c, _)| c.tx)
    }

    /// Set the cancellation flag of `tx`. Idempotent.
    pub fn mark_cancelled(&mut self, tx: u32) -> Result<(), PhyError> {
        let idx = self
            .index_of(tx)
            .ok_or(PhyError::UnknownTransmitter(tx, self.tti))?;
        self.cancelled[idx] = true;
        Ok(())
    }

    pub fn mark_cancelled_at(&mut self, idx: usize) {
        self.cancelled[idx] = true;
    }

    /// Total received power, in mW, including noise, over one packet band.
    pub fn total_power_mw(&self) -> f64 {
        self.noise_mw + self.contributions.iter().map(|c| c.rx_power_mw).sum::<f64>()
    }
}

/// Fraction of `target`'s subchannels that `other` occupies.
pub fn overlap_fraction(other: &Resource, target: &Resource) -> f64 {
    let lo = other.subch_start.max(target.subch_start);
    let hi = (other.subch_start + other.subch_count).min(target.subch_start + target.subch_count);
    if hi <= lo || target.subch_count == 0 {
        0.0
    } else {
        f64::from(hi - lo) / f64::from(target.subch_count)
    }
}

fn effective_eta(rec: &TtiRecord, j: usize, z: usize) -> f64 {
    let cj = &rec.contributions[j];
    cj.eta * overlap_fraction(&cj.resource, &rec.contributions[z].resource)
}

/// SINR of the strongest contribution with nothing cancelled.
/// `None` when the record is empty.
pub fn sinr_legacy(rec: &TtiRecord) -> Option<f64> {
    let first = rec.contributions.first()?;
    let mut interference = 0.0;
    for j in 1..rec.contributions.len() {
        interference += effective_eta(rec, j, 0) * rec.contributions[j].rx_power_mw;
    }
    Some(first.rx_power_mw / (rec.noise_mw + interference))
}

/// SINR of contribution `z` when every stronger contribution has been
/// cancelled with residual factor `kn` and every weaker one is intact.
pub fn sinr_sic(rec: &TtiRecord, z: usize, kn: f64) -> f64 {
    // Same term order and grouping as `sinr_at`, so the two agree exactly.
    let mut interference = 0.0;
    for j in 0..rec.contributions.len() {
        if j < z {
            interference += kn * effective_eta(rec, j, z) * rec.contributions[j].rx_power_mw;
        } else if j > z {
            interference += effective_eta(rec, j, z) * rec.contributions[j].rx_power_mw;
        }
    }
    rec.contributions[z].rx_power_mw / (rec.noise_mw + interference)
}

/// General SINR of contribution index `z` under the record's current
/// cancellation flags.
pub fn sinr_at(rec: &TtiRecord, z: usize, kn: f64) -> f64 {
    let mut interference = 0.0;
    for j in 0..rec.contributions.len() {
        if j == z {
            continue;
        }
        let xi = if rec.cancelled[j] { 1.0 } else { 0.0 };
        let weight = (1.0 - xi) + kn * xi;
        interference += weight * effective_eta(rec, j, z) * rec.contributions[j].rx_power_mw;
    }
    rec.contributions[z].rx_power_mw / (rec.noise_mw + interference)
}

pub fn sinr_rbnoma(rec: &TtiRecord, target_tx: u32, params: &DecodeParams) -> Result<f64, PhyError> {
    let z = rec
        .index_of(target_tx)
        .ok_or(PhyError::UnknownTransmitter(target_tx, rec.tti))?;
    Ok(sinr_at(rec, z, params.kn_linear))
}

/// Threshold rule, inclusive at the threshold, chained on the previous
/// step of the cancellation sequence.
pub fn decode(gamma_linear: f64, prev_ok: bool, params: &DecodeParams) -> bool {
    prev_ok && gamma_linear >= params.gamma_bar_linear
}
