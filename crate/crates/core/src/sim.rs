//! TTI-stepped simulation loop.
//!
//! Each TTI runs, in order: mobility and channel refresh (every
//! `channel_update_ms`), the transmissions scheduled for the TTI, packet
//! generation and resource selection, and finally reception at every
//! vehicle that is not transmitting. Transmitter state only ever depends on
//! the placement, traffic, shadowing and allocation streams plus what was
//! sensed with the legacy decoder, so one schedule can feed several receiver
//! types at once; [`run_simulation_multi`] does exactly that.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::allocation::{
    build_sci, on_counter_expiry, period_resources, sbds_select, sbsps_select, sorted_allocation,
    ExpiryDecision, Resource, SciFormat, SciPayload, SensingMemory, TxSchedule,
};
use crate::channel::{dbm_to_mw, mw_to_dbm, noise_power_dbm, ChannelState};
use crate::config::{AllocationMode, ReceiverMode, SimConfig};
use crate::error::SimError;
use crate::metrics::{busy_subchannels, compute_range, eed_ms, CbrTracker, PrrAccumulator, WbspTracker};
use crate::output::{RunOutputs, RunSummary, SimStats};
use crate::phy::{decode, sinr_legacy, Contribution, DecodeParams, TtiRecord};
use crate::receiver::{RxParams, RxState, TraceEvent};
use crate::rng::RunRngs;
use crate::scenario::{advance_mobility, next_packet_interval, spawn_vehicles};

/// Length of one blind-spot observation slot and of one CBR window.
pub const OBSERVATION_SLOT_MS: u32 = 100;
/// Blind-spot window lengths reported, in slots.
pub const WBSP_WINDOW_SLOTS: [usize; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
/// Tracked packets are settled this many TTIs after their first copy.
const TRACK_TTIS: u64 = 64;

#[derive(Debug, Clone)]
struct Pending {
    packet_id: u64,
    gen_time_ms: f64,
    resources: Vec<Resource>,
    scis: Vec<Arc<SciPayload>>,
    next: usize,
}

#[derive(Debug, Clone)]
struct TxState {
    sps: Option<TxSchedule>,
    pending: Option<Pending>,
    mem: SensingMemory,
    /// Sorted allocation: newest packet waiting for the vehicle's slot.
    waiting: Option<(u64, f64)>,
    slot: Vec<Resource>,
}

#[derive(Debug, Clone)]
struct Tracked {
    gen_time_ms: f64,
    first_tti: u64,
    /// `(receiver, prr bin)`, sorted by receiver.
    rxs: Vec<(u32, usize)>,
}

struct ModeState {
    mode: ReceiverMode,
    rx: Vec<RxState>,
    prr: PrrAccumulator,
    wbsp: WbspTracker,
    eed: Vec<f64>,
    stats: SimStats,
}

struct Transmission {
    tx: u32,
    packet_id: u64,
    resource: Resource,
    sci: Arc<SciPayload>,
}

/// Run one configuration with its own receiver mode.
pub fn run_simulation(cfg: &SimConfig) -> Result<RunOutputs, SimError> {
    let mut out = run_simulation_multi(cfg, &[cfg.receiver_mode])?;
    Ok(out.pop().expect("one mode requested"))
}

/// Run one schedule and evaluate it with several receiver types. The
/// returned outputs are in the order of `modes` and equal what separate runs
/// with each mode would give.
pub fn run_simulation_multi(cfg: &SimConfig, modes: &[ReceiverMode]) -> Result<Vec<RunOutputs>, SimError> {
    Ok(Engine::new(cfg, modes, None)?.run())
}

/// Like [`run_simulation`], also returning the receiver event trace of one
/// vehicle.
pub fn run_simulation_traced(cfg: &SimConfig, vehicle: u32) -> Result<(RunOutputs, Vec<TraceEvent>), SimError> {
    let mut engine = Engine::new(cfg, &[cfg.receiver_mode], Some(vehicle))?;
    engine.run_loop();
    let trace = engine
        .modes
        .first()
        .and_then(|m| m.rx.get(vehicle as usize))
        .map(|rx| rx.trace().to_vec())
        .unwrap_or_default();
    let mut out = engine.finish();
    Ok((out.pop().expect("one mode requested"), trace))
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    rngs: RunRngs,
    vehicles: Vec<crate::scenario::Vehicle>,
    channel: ChannelState,
    tx: Vec<TxState>,
    modes: Vec<ModeState>,
    cbr: CbrTracker,
    tracked: BTreeMap<u64, Tracked>,
    next_packet_id: u64,
    sci_format: SciFormat,
    sensing_params: DecodeParams,
    noise_packet_mw: f64,
    noise_subch_mw: f64,
    cbr_threshold_mw: f64,
    tti_ms: f64,
    warm_tti: u64,
    end_tti: u64,
    total_ttis: u64,
    slot_ttis: u64,
    update_ttis: u64,
    stats: SimStats,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, modes: &[ReceiverMode], trace_vehicle: Option<u32>) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut rngs = RunRngs::new(cfg.rng_seed);
        let vehicles = spawn_vehicles(cfg, &mut rngs.placement);
        let channel = ChannelState::new(&vehicles, cfg, &mut rngs.shadowing)?;
        let n = vehicles.len();
        let tpm = cfg.ttis_per_ms();
        let warm_tti = cfg.ms_to_ttis_floor(cfg.warmup_s * 1000.0);
        let slot_ttis = u64::from(OBSERVATION_SLOT_MS) * tpm;
        let measured = cfg.ms_to_ttis_floor(cfg.sim_duration_s * 1000.0);
        let n_slots = (measured / slot_ttis) as usize;
        let end_tti = warm_tti + measured;
        let total_ttis = end_tti + cfg.t2_ttis() + u64::from(cfg.bkc_window_ttis) + 2;
        let window_ttis = u64::from(cfg.sensing_window_ms) * tpm;

        let sci_format = if modes.iter().any(|m| m.forward_cancellation()) {
            SciFormat::Extended
        } else {
            SciFormat::Legacy
        };
        let packet_bw = cfg.bandwidth_mhz * f64::from(cfg.packet_subchannels) / f64::from(cfg.n_subchannels);
        let subch_bw = cfg.bandwidth_mhz / f64::from(cfg.n_subchannels);

        let mode_states = modes
            .iter()
            .enumerate()
            .map(|(k, &mode)| {
                let params = RxParams::from_config(cfg, mode);
                ModeState {
                    mode,
                    rx: (0..n)
                        .map(|v| {
                            let rx = RxState::new(params);
                            if k == 0 && trace_vehicle == Some(v as u32) {
                                rx.with_trace()
                            } else {
                                rx
                            }
                        })
                        .collect(),
                    prr: PrrAccumulator::new(cfg.prr_bin_m, cfg.prr_max_distance_m),
                    wbsp: WbspTracker::new(n_slots, f64::from(OBSERVATION_SLOT_MS)),
                    eed: Vec::new(),
                    stats: SimStats::default(),
                }
            })
            .collect();

        Ok(Self {
            cfg,
            rngs,
            channel,
            tx: vec![
                TxState {
                    sps: None,
                    pending: None,
                    mem: SensingMemory::new(window_ttis),
                    waiting: None,
                    slot: Vec::new(),
                };
                n
            ],
            vehicles,
            modes: mode_states,
            cbr: CbrTracker::new(n, cfg.n_subchannels, slot_ttis, warm_tti as f64 * cfg.tti_ms()),
            tracked: BTreeMap::new(),
            next_packet_id: 0,
            sci_format,
            sensing_params: DecodeParams::from_config(cfg),
            noise_packet_mw: dbm_to_mw(noise_power_dbm(packet_bw, cfg.noise_figure_db)),
            noise_subch_mw: dbm_to_mw(noise_power_dbm(subch_bw, cfg.noise_figure_db)),
            cbr_threshold_mw: dbm_to_mw(cfg.cbr_threshold_dbm),
            tti_ms: cfg.tti_ms(),
            warm_tti,
            end_tti,
            total_ttis,
            slot_ttis,
            update_ttis: u64::from(cfg.channel_update_ms) * tpm,
            stats: SimStats { vehicles: n as u64, ..SimStats::default() },
        })
    }

    fn run(mut self) -> Vec<RunOutputs> {
        self.run_loop();
        self.finish()
    }

    fn measuring(&self, t: u64) -> bool {
        (self.warm_tti..self.end_tti).contains(&t)
    }

    fn run_loop(&mut self) {
        for t in 0..self.total_ttis {
            self.step(t);
        }
    }

    fn step(&mut self, t: u64) {
        if t > 0 && t % self.update_ttis == 0 {
            advance_mobility(&mut self.vehicles, self.cfg.road_length_m, f64::from(self.cfg.channel_update_ms));
            self.channel
                .update(&self.vehicles, self.cfg, &mut self.rngs.shadowing)
                .expect("distances are clamped positive");
        }
        if self.measuring(t) && (t - self.warm_tti) % self.slot_ttis == 0 {
            self.snapshot_pairs(((t - self.warm_tti) / self.slot_ttis) as usize);
        }
        if self.cfg.allocation_mode == AllocationMode::Sorted {
            self.sorted_period(t);
        }
        let txs = self.transmissions(t);
        self.generate(t);
        self.receive(t, &txs);
        if self.measuring(t) {
            self.cbr.tick(f64::from(OBSERVATION_SLOT_MS));
        }
        if t % TRACK_TTIS == 0 {
            let cutoff = t.saturating_sub(TRACK_TTIS);
            self.tracked.retain(|_, tr| tr.first_tti >= cutoff);
            for s in &mut self.tx {
                s.mem.evict(t);
            }
        }
    }

    fn snapshot_pairs(&mut self, slot: usize) {
        let n = self.vehicles.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let eligible = self.channel.distance_m(i, j) <= self.cfg.wbsp_distance_m;
                for m in &mut self.modes {
                    m.wbsp.set_eligible(i as u32, j as u32, slot, eligible);
                }
            }
        }
    }

    fn sorted_period(&mut self, t: u64) {
        let period = self.cfg.rri_ttis();
        if t % period == 0 {
            let resources = period_resources(t, period, self.cfg);
            let positions: Vec<f64> = self.vehicles.iter().map(|v| v.position_m).collect();
            let assignment = sorted_allocation(&positions, resources.len(), self.cfg.n_copies());
            for (s, idx) in self.tx.iter_mut().zip(assignment) {
                s.slot = idx.into_iter().map(|i| resources[i]).collect();
            }
        }
        for v in 0..self.tx.len() {
            let due = self.tx[v].slot.first().is_some_and(|r| r.tti == t);
            if !due || self.tx[v].pending.is_some() {
                continue;
            }
            if let Some((packet_id, gen_time_ms)) = self.tx[v].waiting.take() {
                let sched = TxSchedule {
                    reserved: self.tx[v].slot.clone(),
                    resel_counter: 0,
                    rri_ms: None,
                };
                self.tx[v].pending = Some(self.make_pending(v as u32, packet_id, gen_time_ms, &sched));
            }
        }
    }

    fn make_pending(&self, source: u32, packet_id: u64, gen_time_ms: f64, sched: &TxSchedule) -> Pending {
        let scis = (0..sched.reserved.len())
            .map(|k| Arc::new(build_sci(sched, k, self.sci_format, source, packet_id)))
            .collect();
        Pending {
            packet_id,
            gen_time_ms,
            resources: sched.reserved.clone(),
            scis,
            next: 0,
        }
    }

    fn transmissions(&mut self, t: u64) -> Vec<Transmission> {
        let mut out = Vec::new();
        for v in 0..self.tx.len() {
            let Some(p) = self.tx[v].pending.as_mut() else { continue };
            if p.resources[p.next].tti != t {
                debug_assert!(p.resources[p.next].tti > t, "missed a scheduled copy");
                continue;
            }
            let k = p.next;
            p.next += 1;
            out.push(Transmission {
                tx: v as u32,
                packet_id: p.packet_id,
                resource: p.resources[k],
                sci: Arc::clone(&p.scis[k]),
            });
            let (packet_id, gen_time_ms) = (p.packet_id, p.gen_time_ms);
            if p.next == p.resources.len() {
                self.tx[v].pending = None;
            }
            if k == 0 {
                self.register_packet(v, packet_id, gen_time_ms, t);
            }
        }
        self.stats.transmissions += out.len() as u64;
        out
    }

    /// Remember the packet's generation time and, for packets generated in
    /// the measurement period, count one PRR attempt per receiver in range.
    fn register_packet(&mut self, source: usize, packet_id: u64, gen_time_ms: f64, t: u64) {
        let warm_ms = self.warm_tti as f64 * self.tti_ms;
        let end_ms = self.end_tti as f64 * self.tti_ms;
        if !(warm_ms..end_ms).contains(&gen_time_ms) {
            self.tracked.insert(packet_id, Tracked { gen_time_ms, first_tti: t, rxs: Vec::new() });
            return;
        }
        self.stats.packets_tracked += 1;
        let mut rxs = Vec::new();
        for rx in 0..self.vehicles.len() {
            if rx == source {
                continue;
            }
            let Some(bin) = self.modes.first().and_then(|m| m.prr.bin_of(self.channel.distance_m(source, rx))) else {
                continue;
            };
            rxs.push((rx as u32, bin));
            for m in &mut self.modes {
                m.prr.add_attempt(bin);
            }
        }
        self.tracked.insert(packet_id, Tracked { gen_time_ms, first_tti: t, rxs });
    }

    fn generate(&mut self, t: u64) {
        let horizon_ms = (t + 1) as f64 * self.tti_ms;
        for v in 0..self.vehicles.len() {
            while self.vehicles[v].next_gen_time_ms < horizon_ms {
                let gen_time_ms = self.vehicles[v].next_gen_time_ms;
                self.vehicles[v].next_gen_time_ms += next_packet_interval(self.cfg.traffic_mode, &mut self.rngs.traffic);
                let packet_id = self.next_packet_id;
                self.next_packet_id += 1;
                self.stats.packets_generated += 1;
                self.allocate(v, packet_id, gen_time_ms, t);
            }
        }
    }

    fn allocate(&mut self, v: usize, packet_id: u64, gen_time_ms: f64, t: u64) {
        let cfg = self.cfg;
        match cfg.allocation_mode {
            AllocationMode::Sorted => {
                if self.tx[v].waiting.replace((packet_id, gen_time_ms)).is_some() {
                    self.stats.packets_dropped += 1;
                }
                return;
            }
            AllocationMode::Sbds => {
                let sched = sbds_select(&self.tx[v].mem, t, cfg, &[], &mut self.rngs.allocation);
                self.stats.reselections += 1;
                self.tx[v].pending = Some(self.make_pending(v as u32, packet_id, gen_time_ms, &sched));
            }
            AllocationMode::Sbsps => {
                let sched = self.sps_schedule(v, t);
                self.tx[v].pending = Some(self.make_pending(v as u32, packet_id, gen_time_ms, &sched));
                self.tx[v].sps = Some(sched);
            }
        }
    }

    /// Reuse the previous reservation one RRI later while the counter lasts
    /// and it still fits the new selection window, else select afresh.
    fn sps_schedule(&mut self, v: usize, t: u64) -> TxSchedule {
        let cfg = self.cfg;
        let (lo, hi) = (t + cfg.t1_ttis(), t + cfg.t2_ttis());
        if let Some(prev) = self.tx[v].sps.as_ref() {
            let shifted: Vec<Resource> = prev.reserved.iter().map(|r| r.shifted(cfg.rri_ttis())).collect();
            let fits = shifted.iter().all(|r| (lo..=hi).contains(&r.tti));
            let counter = if prev.resel_counter > 0 {
                Some(prev.resel_counter - 1)
            } else {
                match on_counter_expiry(cfg.keep_probability, &mut self.rngs.allocation) {
                    ExpiryDecision::Keep => {
                        Some(crate::allocation::draw_resel_counter(cfg.rri_ms, &mut self.rngs.allocation) - 1)
                    }
                    ExpiryDecision::Reselect => None,
                }
            };
            if let (Some(resel_counter), true) = (counter, fits) {
                return TxSchedule { reserved: shifted, resel_counter, rri_ms: prev.rri_ms };
            }
        }
        self.stats.reselections += 1;
        let mut sched = sbsps_select(&self.tx[v].mem, t, cfg, &[], &mut self.rngs.allocation);
        // The packet that triggered the selection uses the first period.
        sched.resel_counter -= 1;
        sched
    }

    fn receive(&mut self, t: u64, txs: &[Transmission]) {
        let measuring = self.measuring(t);
        let n_sub = self.cfg.n_subchannels as usize;
        let mut sensed = vec![0.0; n_sub];
        let sensing = self.cfg.allocation_mode != AllocationMode::Sorted;
        let rri_tpm = self.cfg.ttis_per_ms();

        for r in 0..self.vehicles.len() {
            if txs.iter().any(|x| x.tx as usize == r) {
                if measuring {
                    self.cbr.add(r, n_sub as u64);
                }
                continue;
            }
            if txs.is_empty() {
                if measuring {
                    sensed.fill(self.noise_subch_mw);
                    self.cbr.add(r, busy_subchannels(&sensed, self.cbr_threshold_mw));
                }
                continue;
            }

            let contributions: Vec<Contribution> = txs
                .iter()
                .map(|x| Contribution {
                    tx: x.tx,
                    packet_id: x.packet_id,
                    rx_power_mw: self.channel.power_mw(r, x.tx as usize),
                    eta: 1.0,
                    resource: x.resource,
                    sci: Arc::clone(&x.sci),
                })
                .collect();

            if measuring {
                sensed.fill(self.noise_subch_mw);
                for c in &contributions {
                    let share = c.rx_power_mw / f64::from(c.resource.subch_count);
                    let end = (c.resource.subch_start + c.resource.subch_count) as usize;
                    for s in &mut sensed[c.resource.subch_start as usize..end.min(n_sub)] {
                        *s += share;
                    }
                }
                self.cbr.add(r, busy_subchannels(&sensed, self.cbr_threshold_mw));
            }

            let rec = TtiRecord::new(t, contributions, self.noise_packet_mw);

            if sensing {
                if let Some(g) = sinr_legacy(&rec) {
                    if decode(g, true, &self.sensing_params) {
                        let c = &rec.contributions()[0];
                        let rri = c.sci.rri_ms.map(|ms| u64::from(ms) * rri_tpm);
                        self.tx[r].mem.record(c.resource, &c.sci, rri, mw_to_dbm(c.rx_power_mw));
                    }
                }
            }

            let n_modes = self.modes.len();
            let mut rec = Some(rec);
            for k in 0..n_modes {
                let this = if k + 1 == n_modes { rec.take().expect("record") } else { rec.clone().expect("record") };
                let delivered = self.modes[k].rx[r].process_tti(this);
                for d in delivered {
                    self.credit(k, r as u32, d.tx, d.packet_id, d.record_tti, t);
                }
            }
        }
    }

    fn credit(&mut self, k: usize, rx: u32, tx: u32, packet_id: u64, record_tti: u64, t: u64) {
        let measuring = self.measuring(t);
        let slot = if measuring { Some(((t - self.warm_tti) / self.slot_ttis) as usize) } else { None };
        let tti_ms = self.tti_ms;
        let budget_ms = self.cfg.t2_ms + tti_ms;
        let m = &mut self.modes[k];
        m.stats.deliveries += 1;
        if record_tti < t {
            m.stats.backward_recoveries += 1;
        }
        let Some(tr) = self.tracked.get(&packet_id) else { return };
        let eed = eed_ms(t, tti_ms, tr.gen_time_ms);
        // A packet recovered from a stored TTI after its delay budget is stale
        // for the application; it still served for cancellation.
        if record_tti < t && eed > budget_ms + 1e-9 {
            m.stats.late_deliveries += 1;
            return;
        }
        if let Ok(i) = tr.rxs.binary_search_by_key(&rx, |e| e.0) {
            m.prr.add_success(tr.rxs[i].1);
            m.eed.push(eed);
        }
        if let Some(slot) = slot {
            m.wbsp.record_success(tx, rx, slot, (t + 1) as f64 * tti_ms);
        }
    }

    fn finish(self) -> Vec<RunOutputs> {
        let cfg = self.cfg;
        let base = self.stats;
        let cbr = self.cbr.into_series();
        self.modes
            .into_iter()
            .map(|m| {
                let bins = m.prr.bins();
                let mut eed = m.eed;
                eed.sort_by(f64::total_cmp);
                let evicted: u64 = m.rx.iter().map(|rx| rx.stats().evicted_targets).sum();
                RunOutputs {
                    summary: Some(RunSummary {
                        receiver_mode: m.mode,
                        traffic_mode: cfg.traffic_mode,
                        n_retx: cfg.n_retx,
                        density: cfg.density_veh_per_km,
                    }),
                    cbr_series: cbr.clone(),
                    range_m: compute_range(&bins, cfg.prr_bin_m),
                    prr_by_distance: bins,
                    wbsp_samples: m.wbsp.gap_samples(),
                    wbsp_by_window: m.wbsp.wbsp_curve(&WBSP_WINDOW_SLOTS),
                    eed_samples: eed,
                    eed_step_ms: cfg.tti_ms(),
                    stats: SimStats {
                        deliveries: m.stats.deliveries,
                        backward_recoveries: m.stats.backward_recoveries,
                        late_deliveries: m.stats.late_deliveries,
                        evicted_bkc_targets: evicted,
                        ..base
                    },
                }
            })
            .collect()
    }
}
