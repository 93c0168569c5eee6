//! Repetition-based NOMA receiver.
//!
//! Per receiver this keeps a frame store (future copies of already decoded
//! packets, cancelled on arrival), a signal store of recent TTI records
//! (backward cancellation only) and the set of delivered packets. The
//! "parallel process" started when a decoded packet has copies in stored
//! TTIs runs here as depth-first recursion, so a tick completes all of its
//! reprocessing before the simulator moves on.

use std::collections::{BTreeMap, BTreeSet};

use crate::allocation::{Direction, SciPayload};
use crate::config::{ReceiverMode, SimConfig};
use crate::error::ReceiverError;
use crate::phy::{decode, sinr_at, sinr_legacy, DecodeParams, TtiRecord};

/// Copy pointers never reach further than this from the carrying TTI.
pub const POINTER_HORIZON_TTIS: u64 = 32;

/// Decoded packets older than this are forgotten; copies of one packet
/// span at most one SCI window, so nothing can refer to them any more.
const DECODED_MEMORY_TTIS: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxParams {
    pub mode: ReceiverMode,
    pub decode: DecodeParams,
    /// Cancel-and-retry cycles per pass; `u32::MAX` is unlimited.
    pub max_sic_iterations: u32,
    pub bkc_window_ttis: u64,
}

impl RxParams {
    pub fn from_config(cfg: &SimConfig, mode: ReceiverMode) -> Self {
        Self {
            mode,
            decode: DecodeParams::from_config(cfg),
            max_sic_iterations: cfg.max_sic_iterations,
            bkc_window_ttis: u64::from(cfg.bkc_window_ttis),
        }
    }
}

/// A packet delivered to the upper layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub packet_id: u64,
    pub tx: u32,
    /// TTI whose record yielded the packet; earlier than the current TTI
    /// for backward recoveries.
    pub record_tti: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceKind {
    Decode,
    FrcCancel,
    BkcCancel,
    BkcReprocess,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Decode => "decode",
            TraceKind::FrcCancel => "frc_cancel",
            TraceKind::BkcCancel => "bkc_cancel",
            TraceKind::BkcReprocess => "bkc_reprocess",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    /// TTI of the record being worked on.
    pub tti: u64,
    pub kind: TraceKind,
    pub tx: u32,
    pub packet_id: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RxStats {
    /// Backward cancellations whose target TTI had left the signal store.
    pub evicted_targets: u64,
    pub rejected_pointers: u64,
    pub passes: u64,
}

#[derive(Debug, Clone)]
pub struct RxState {
    params: RxParams,
    current_tti: u64,
    /// (tti, tx) -> packet expected there.
    frame: BTreeMap<(u64, u32), u64>,
    signal: BTreeMap<u64, TtiRecord>,
    decoded: BTreeMap<u64, u64>,
    stats: RxStats,
    trace: Option<Vec<TraceEvent>>,
}

impl RxState {
    pub fn new(params: RxParams) -> Self {
        Self {
            params,
            current_tti: 0,
            frame: BTreeMap::new(),
            signal: BTreeMap::new(),
            decoded: BTreeMap::new(),
            stats: RxStats::default(),
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn params(&self) -> &RxParams {
        &self.params
    }

    pub fn stats(&self) -> RxStats {
        self.stats
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn is_decoded(&self, packet_id: u64) -> bool {
        self.decoded.contains_key(&packet_id)
    }

    pub fn frame_entries(&self) -> impl Iterator<Item = (u64, u32, u64)> + '_ {
        self.frame.iter().map(|(&(t, tx), &p)| (t, tx, p))
    }

    pub fn stored_record(&self, tti: u64) -> Option<&TtiRecord> {
        self.signal.get(&tti)
    }

    fn log(&mut self, tti: u64, kind: TraceKind, tx: u32, packet_id: u64) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent { tti, kind, tx, packet_id });
        }
    }

    /// Feed this receiver's record for the current TTI. Returns the packets
    /// delivered during the tick, in decoding order.
    pub fn process_tti(&mut self, rec: TtiRecord) -> Vec<Delivery> {
        let t0 = rec.tti;
        self.advance_to(t0);
        let mut out = Vec::new();
        match self.params.mode {
            ReceiverMode::Legacy => {
                if let Some(g) = sinr_legacy(&rec) {
                    if decode(g, true, &self.params.decode) {
                        let c = &rec.contributions()[0];
                        self.deliver(t0, c.tx, c.packet_id, &mut out);
                    }
                }
            }
            _ => {
                self.signal.insert(t0, rec);
                self.run_pass(t0, &mut out);
                if !self.params.mode.backward_cancellation() {
                    self.signal.remove(&t0);
                }
            }
        }
        out
    }

    fn advance_to(&mut self, t0: u64) {
        self.current_tti = t0;
        self.frame = self.frame.split_off(&(t0, 0));
        let keep_from = (t0 + 1).saturating_sub(self.params.bkc_window_ttis);
        self.signal = self.signal.split_off(&keep_from);
        if t0 % DECODED_MEMORY_TTIS == 0 {
            let horizon = t0.saturating_sub(DECODED_MEMORY_TTIS);
            self.decoded.retain(|_, &mut t| t >= horizon);
        }
    }

    fn deliver(&mut self, tti: u64, tx: u32, packet_id: u64, out: &mut Vec<Delivery>) -> bool {
        self.log(tti, TraceKind::Decode, tx, packet_id);
        if self.decoded.contains_key(&packet_id) {
            return false;
        }
        self.decoded.insert(packet_id, self.current_tti);
        out.push(Delivery { packet_id, tx, record_tti: tti });
        true
    }

    /// Store every forward copy of `sci` that has not elapsed yet.
    pub fn register_forward_copies(&mut self, sci: &SciPayload, carrying_tti: u64) -> Result<usize, ReceiverError> {
        let mut added = 0;
        for p in &sci.copy_pointers {
            let t = p.resource.tti;
            let distance = t.abs_diff(carrying_tti);
            if distance > POINTER_HORIZON_TTIS {
                return Err(ReceiverError::PointerBeyondHorizon {
                    pointer_tti: t,
                    current_tti: carrying_tti,
                    distance,
                    horizon: POINTER_HORIZON_TTIS,
                });
            }
            if t > self.current_tti && self.frame.insert((t, sci.source), sci.packet_id).is_none() {
                added += 1;
            }
        }
        Ok(added)
    }

    /// Cancel the copy of `packet_id` sent by `tx` in the stored record of
    /// `target_tti` and reprocess that record.
    pub fn reprocess_past_tti(&mut self, target_tti: u64, tx: u32, packet_id: u64) -> Vec<Delivery> {
        let mut out = Vec::new();
        self.backward_cancel(target_tti, tx, packet_id, &mut out);
        out
    }

    fn backward_cancel(&mut self, target_tti: u64, tx: u32, packet_id: u64, out: &mut Vec<Delivery>) {
        let Some(rec) = self.signal.get_mut(&target_tti) else {
            if target_tti + self.params.bkc_window_ttis <= self.current_tti {
                self.stats.evicted_targets += 1;
            }
            return;
        };
        let Some(idx) = rec.index_of(tx) else { return };
        if rec.contributions()[idx].packet_id != packet_id || rec.is_cancelled(idx) {
            return;
        }
        rec.mark_cancelled_at(idx);
        self.log(target_tti, TraceKind::BkcCancel, tx, packet_id);
        self.log(target_tti, TraceKind::BkcReprocess, tx, packet_id);
        self.run_pass(target_tti, out);
    }

    /// One processing pass over the stored record `t`.
    fn run_pass(&mut self, t: u64, out: &mut Vec<Delivery>) {
        self.stats.passes += 1;
        let mode = self.params.mode;

        if mode.forward_cancellation() {
            let rec = self.signal.get_mut(&t).expect("pass on a stored record");
            let mut frc = Vec::new();
            for idx in 0..rec.len() {
                let c = &rec.contributions()[idx];
                if !rec.is_cancelled(idx) && self.frame.get(&(t, c.tx)) == Some(&c.packet_id) {
                    frc.push((idx, c.tx, c.packet_id));
                }
            }
            for &(idx, _, _) in &frc {
                rec.mark_cancelled_at(idx);
            }
            for (_, tx, pid) in frc {
                self.log(t, TraceKind::FrcCancel, tx, pid);
            }
        }

        let mut retries_left = self.params.max_sic_iterations;
        loop {
            let rec = self.signal.get(&t).expect("pass on a stored record");
            let Some(z) = (0..rec.len()).find(|&i| !rec.is_cancelled(i)) else { break };
            if !decode(sinr_at(rec, z, self.params.decode.kn_linear), true, &self.params.decode) {
                break;
            }
            let c = rec.contributions()[z].clone();
            self.signal.get_mut(&t).expect("stored").mark_cancelled_at(z);
            self.deliver(t, c.tx, c.packet_id, out);

            if mode.forward_cancellation() {
                if let Err(e) = self.register_forward_copies(&c.sci, t) {
                    log::warn!("{e}");
                    self.stats.rejected_pointers += 1;
                }
            }
            if mode.backward_cancellation() {
                for p in &c.sci.copy_pointers {
                    let tn = p.resource.tti;
                    debug_assert!(p.direction == Direction::Backward || tn > t);
                    if tn != t && tn <= self.current_tti {
                        self.backward_cancel(tn, c.tx, c.packet_id, out);
                    }
                }
            }

            if retries_left == 0 {
                break;
            }
            retries_left -= 1;
        }
    }

    /// Packets decoded so far that are still remembered.
    pub fn decoded_packets(&self) -> BTreeSet<u64> {
        self.decoded.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{CopyPointer, Resource};
    use crate::channel::db_to_linear;
    use crate::phy::Contribution;
    use std::sync::Arc;

    const PN: f64 = 1e-10;

    fn params(mode: ReceiverMode, iters: u32) -> RxParams {
        RxParams {
            mode,
            decode: DecodeParams { gamma_bar_linear: db_to_linear(3.6), kn_linear: 1e-3 },
            max_sic_iterations: iters,
            bkc_window_ttis: 32,
        }
    }

    fn res(tti: u64) -> Resource {
        Resource { tti, subch_start: 0, subch_count: 10 }
    }

    /// Contribution of packet `tx` whose copies sit at `copies`, this one
    /// being the copy at `tti`.
    fn copy(tx: u32, p: f64, tti: u64, copies: &[u64]) -> Contribution {
        let idx = copies.iter().position(|&c| c == tti).unwrap();
        let pointers = copies
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != idx)
            .map(|(i, &c)| CopyPointer {
                resource: res(c),
                direction: if i < idx { Direction::Backward } else { Direction::Forward },
            })
            .collect();
        Contribution {
            tx,
            packet_id: u64::from(tx),
            rx_power_mw: p,
            eta: 1.0,
            resource: res(tti),
            sci: Arc::new(SciPayload {
                source: tx,
                packet_id: u64::from(tx),
                rri_ms: None,
                copy_pointers: pointers,
                copy_index: idx as u32,
                n_copies: copies.len() as u32,
            }),
        }
    }

    fn ids(d: &[Delivery]) -> Vec<u64> {
        d.iter().map(|d| d.packet_id).collect()
    }

    #[test]
    fn lone_transmitter_is_decoded_without_frame_entries() {
        for mode in ReceiverMode::ALL {
            let mut rx = RxState::new(params(mode, 1));
            let out = rx.process_tti(TtiRecord::new(5, vec![copy(1, 1e-8, 5, &[5])], PN));
            assert_eq!(ids(&out), vec![1], "{mode}");
            assert_eq!(rx.frame_entries().count(), 0);
        }
    }

    #[test]
    fn equal_powers_block_each_other() {
        for mode in ReceiverMode::ALL {
            let mut rx = RxState::new(params(mode, u32::MAX));
            let rec = TtiRecord::new(0, vec![copy(1, 1e-8, 0, &[0]), copy(2, 1e-8, 0, &[0])], PN);
            assert!(rx.process_tti(rec).is_empty(), "{mode}");
        }
    }

    #[test]
    fn budget_limits_decodes_per_pass() {
        // Each clears the threshold once the stronger ones are gone.
        let rec = || {
            TtiRecord::new(
                0,
                vec![copy(1, 1e-6, 0, &[0]), copy(2, 1e-7, 0, &[0]), copy(3, 1e-8, 0, &[0])],
                PN,
            )
        };
        let mut rx = RxState::new(params(ReceiverMode::Sic, 1));
        assert_eq!(ids(&rx.process_tti(rec())), vec![1, 2]);
        let mut rx = RxState::new(params(ReceiverMode::Sic, u32::MAX));
        assert_eq!(ids(&rx.process_tti(rec())), vec![1, 2, 3]);
        let mut rx = RxState::new(params(ReceiverMode::Legacy, u32::MAX));
        assert_eq!(ids(&rx.process_tti(rec())), vec![1]);
    }

    #[test]
    fn forward_copies_are_registered_once() {
        let mut rx = RxState::new(params(ReceiverMode::SicFrc, 1));
        let c = copy(4, 1e-8, 10, &[10, 12, 20]);
        assert_eq!(rx.process_tti(TtiRecord::new(10, vec![c.clone()], PN)).len(), 1);
        assert_eq!(rx.frame_entries().collect::<Vec<_>>(), vec![(12, 4, 4), (20, 4, 4)]);
        assert_eq!(rx.register_forward_copies(&c.sci, 10), Ok(0));
        assert_eq!(rx.frame_entries().count(), 2);
    }

    #[test]
    fn far_pointer_is_rejected() {
        let mut rx = RxState::new(params(ReceiverMode::SicFrc, 1));
        let c = copy(4, 1e-8, 10, &[10, 60]);
        let err = rx.register_forward_copies(&c.sci, 10).unwrap_err();
        assert!(matches!(err, ReceiverError::PointerBeyondHorizon { distance: 50, .. }));
    }

    #[test]
    fn backward_recovery_of_a_weaker_packet() {
        // TTI 0: A and B too close in power for either to clear the
        // threshold. TTI 1 carries A alone and points back to TTI 0.
        let a0 = copy(1, 2e-8, 0, &[0, 1]);
        let b0 = copy(2, 1.5e-8, 0, &[0]);
        let mut rx = RxState::new(params(ReceiverMode::SicFrcBkc, 1)).with_trace();
        assert!(rx.process_tti(TtiRecord::new(0, vec![a0, b0], PN)).is_empty());
        let out = rx.process_tti(TtiRecord::new(1, vec![copy(1, 2e-8, 1, &[0, 1])], PN));
        assert_eq!(ids(&out), vec![1, 2]);
        assert_eq!(out[1].record_tti, 0);
        let kinds: Vec<TraceKind> = rx.trace().iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![TraceKind::Decode, TraceKind::BkcCancel, TraceKind::BkcReprocess, TraceKind::Decode]
        );
    }

    #[test]
    fn hopeless_reprocess_yields_nothing() {
        let mut rx = RxState::new(params(ReceiverMode::SicFrcBkc, 1));
        rx.process_tti(TtiRecord::new(
            0,
            vec![copy(1, 2e-8, 0, &[0, 1]), copy(2, 1.5e-8, 0, &[0]), copy(3, 1.5e-8, 0, &[0])],
            PN,
        ));
        let out = rx.reprocess_past_tti(0, 1, 1);
        assert!(out.is_empty());
    }

    #[test]
    fn evicted_target_is_counted() {
        let mut rx = RxState::new(params(ReceiverMode::SicFrcBkc, 1));
        rx.process_tti(TtiRecord::new(0, vec![copy(1, 2e-8, 0, &[0]), copy(2, 2e-8, 0, &[0])], PN));
        rx.process_tti(TtiRecord::new(40, vec![], PN));
        assert!(rx.reprocess_past_tti(0, 1, 1).is_empty());
        assert_eq!(rx.stats().evicted_targets, 1);
    }

    #[test]
    fn unknown_packet_is_never_cancelled() {
        // B is never decoded, so none of its copies are touched.
        let mut rx = RxState::new(params(ReceiverMode::SicFrcBkc, u32::MAX)).with_trace();
        for t in 0..3 {
            rx.process_tti(TtiRecord::new(
                t,
                vec![copy(2, 1e-8, t, &[0, 1, 2]), copy(3, 1e-8, t, &[0, 1, 2])],
                PN,
            ));
        }
        assert!(rx.trace().is_empty());
    }
}
