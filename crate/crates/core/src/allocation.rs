//! Transmitter-side MAC: sensing-based selection (semi-persistent and
//! dynamic), blind-repetition resources, SCI construction, reselection
//! counters, the position-sorted baseline and the SCI overhead calculator.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::{SimConfig, MAX_COPY_SPAN_TTIS};

/// Each threshold increase during selection.
pub const THRESHOLD_STEP_DB: f64 = 3.0;
/// Threshold increases tried before falling back to least-RSRP picking.
pub const MAX_THRESHOLD_STEPS: u32 = 40;

/// A cell of the time-frequency grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Resource {
    pub tti: u64,
    pub subch_start: u32,
    pub subch_count: u32,
}

impl Resource {
    pub fn overlaps(&self, other: &Resource) -> bool {
        self.tti == other.tti
            && self.subch_start < other.subch_start + other.subch_count
            && other.subch_start < self.subch_start + self.subch_count
    }

    pub fn shifted(self, ttis: u64) -> Resource {
        Resource { tti: self.tti + ttis, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CopyPointer {
    pub resource: Resource,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SciFormat {
    /// At most the next two copies, forward only.
    Legacy,
    /// Every other copy of the packet, each with a direction bit.
    Extended,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SciPayload {
    pub source: u32,
    pub packet_id: u64,
    pub rri_ms: Option<u32>,
    pub copy_pointers: Vec<CopyPointer>,
    pub copy_index: u32,
    pub n_copies: u32,
}

impl SciPayload {
    /// What a legacy receiver can parse: the first two forward pointers.
    pub fn legacy_forward(&self) -> impl Iterator<Item = &Resource> {
        self.copy_pointers
            .iter()
            .filter(|p| p.direction == Direction::Forward)
            .take(2)
            .map(|p| &p.resource)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxSchedule {
    /// Resources of the current period, sorted by TTI.
    pub reserved: Vec<Resource>,
    pub resel_counter: u32,
    pub rri_ms: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpiryDecision {
    Keep,
    Reselect,
}

pub fn build_sci(
    sched: &TxSchedule,
    copy_index: usize,
    format: SciFormat,
    source: u32,
    packet_id: u64,
) -> SciPayload {
    debug_assert!(copy_index < sched.reserved.len());
    let copy_pointers = match format {
        SciFormat::Legacy => sched.reserved[copy_index + 1..]
            .iter()
            .take(2)
            .map(|&resource| CopyPointer { resource, direction: Direction::Forward })
            .collect(),
        SciFormat::Extended => sched
            .reserved
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != copy_index)
            .map(|(i, &resource)| CopyPointer {
                resource,
                direction: if i < copy_index { Direction::Backward } else { Direction::Forward },
            })
            .collect(),
    };
    SciPayload {
        source,
        packet_id,
        rri_ms: sched.rri_ms,
        copy_pointers,
        copy_index: copy_index as u32,
        n_copies: sched.reserved.len() as u32,
    }
}

/// Extra SCI bits needed to address every copy beyond the two a legacy SCI
/// already carries, plus one direction bit per copy when backward
/// cancellation is supported.
pub fn sci_overhead_bits(n_copies: u32, n_dtti_max: u32, n_subch: u32, with_bkc: bool) -> u32 {
    assert!(n_copies >= 1, "a packet has at least one copy");
    let cells = u64::from(n_dtti_max) * u64::from(n_subch);
    let per_pointer = if cells <= 1 { 0 } else { 64 - (cells - 1).leading_zeros() };
    let base = n_copies.saturating_sub(2) * per_pointer;
    if with_bkc {
        base + n_copies
    } else {
        base
    }
}

pub fn on_counter_expiry<R: Rng + ?Sized>(keep_probability: f64, rng: &mut R) -> ExpiryDecision {
    if rng.random::<f64>() < keep_probability {
        ExpiryDecision::Keep
    } else {
        ExpiryDecision::Reselect
    }
}

/// Reservation lifetime uniform in [0.5, 1.5] s, expressed in periods.
pub fn draw_resel_counter<R: Rng + ?Sized>(rri_ms: u32, rng: &mut R) -> u32 {
    let rri = f64::from(rri_ms);
    let lo = ((500.0 / rri).round() as u32).max(1);
    let hi = ((1500.0 / rri).round() as u32).max(lo);
    rng.random_range(lo..=hi)
}

/// One decoded reservation, already projected onto the future resources it
/// blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedReservation {
    pub observed_tti: u64,
    pub source: u32,
    pub rsrp_dbm: f64,
    pub reserved: Vec<Resource>,
}

/// Reservations learned from decoded SCIs over the sensing window.
#[derive(Debug, Clone, Default)]
pub struct SensingMemory {
    window_ttis: u64,
    entries: VecDeque<SensedReservation>,
}

impl SensingMemory {
    pub fn new(window_ttis: u64) -> Self {
        Self { window_ttis, entries: VecDeque::new() }
    }

    /// Register an SCI decoded at `observed` (its own resource) with the
    /// given RSRP. Only the legacy view of the SCI is used: the periodic
    /// reservation and up to two forward pointers.
    pub fn record(&mut self, observed: Resource, sci: &SciPayload, rri_ttis: Option<u64>, rsrp_dbm: f64) {
        let mut reserved: Vec<Resource> = sci.legacy_forward().copied().collect();
        if let Some(rri) = rri_ttis {
            let base: Vec<Resource> = std::iter::once(observed).chain(reserved.iter().copied()).collect();
            reserved.extend(base.into_iter().map(|r| r.shifted(rri)));
        }
        if reserved.is_empty() {
            return;
        }
        self.entries.push_back(SensedReservation {
            observed_tti: observed.tti,
            source: sci.source,
            rsrp_dbm,
            reserved,
        });
    }

    /// Drop entries observed before `now - window`.
    pub fn evict(&mut self, now: u64) {
        let oldest = now.saturating_sub(self.window_ttis);
        while self.entries.front().is_some_and(|e| e.observed_tti < oldest) {
            self.entries.pop_front();
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &SensedReservation> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Selection-window candidate with the strongest RSRP among the
/// reservations overlapping it (`-inf` when free).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub resource: Resource,
    pub blocking_rsrp_dbm: f64,
}

/// Every placement in `[gen + T1, gen + T2]`, minus `exclude_ttis`, with its
/// blocking RSRP.
pub fn candidates(mem: &SensingMemory, gen_tti: u64, cfg: &SimConfig, exclude_ttis: &[u64]) -> Vec<Candidate> {
    let lo = gen_tti + cfg.t1_ttis();
    let hi = gen_tti + cfg.t2_ttis();
    let mut blocking: BTreeMap<u64, Vec<(Resource, f64)>> = BTreeMap::new();
    for e in mem.entries() {
        for r in &e.reserved {
            if (lo..=hi).contains(&r.tti) {
                blocking.entry(r.tti).or_default().push((*r, e.rsrp_dbm));
            }
        }
    }
    let width = cfg.packet_subchannels;
    let mut out = Vec::new();
    for tti in lo..=hi {
        if exclude_ttis.contains(&tti) {
            continue;
        }
        let mut start = 0;
        while start + width <= cfg.n_subchannels {
            let resource = Resource { tti, subch_start: start, subch_count: width };
            let blocking_rsrp_dbm = blocking
                .get(&tti)
                .into_iter()
                .flatten()
                .filter(|(r, _)| r.overlaps(&resource))
                .map(|&(_, p)| p)
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(Candidate { resource, blocking_rsrp_dbm });
            start += width;
        }
    }
    out
}

/// Indices of the candidates available at `threshold_dbm`.
pub fn available(cands: &[Candidate], threshold_dbm: f64) -> Vec<usize> {
    (0..cands.len())
        .filter(|&i| cands[i].blocking_rsrp_dbm < threshold_dbm)
        .collect()
}

/// Raise the threshold until enough of the window survives; `None` if the
/// step budget runs out first.
pub fn surviving_set(cands: &[Candidate], cfg: &SimConfig) -> Option<Vec<usize>> {
    let needed = (cfg.min_available_fraction * cands.len() as f64).ceil().max(1.0) as usize;
    let mut threshold = cfg.rsrp_threshold_dbm;
    for _ in 0..=MAX_THRESHOLD_STEPS {
        let avail = available(cands, threshold);
        if avail.len() >= needed {
            return Some(avail);
        }
        threshold += THRESHOLD_STEP_DB;
    }
    None
}

/// Distinct TTI and the whole set still within one SCI span.
fn compatible(chosen: &[Resource], r: &Resource) -> bool {
    let (mut lo, mut hi) = (r.tti, r.tti);
    for c in chosen {
        if c.tti == r.tti {
            return false;
        }
        lo = lo.min(c.tti);
        hi = hi.max(c.tti);
    }
    hi - lo <= MAX_COPY_SPAN_TTIS
}

/// The selection procedure shared by both scheduling flavours: `n_copies`
/// distinct-TTI resources within one SCI span, sorted by TTI.
pub fn select_resources<R: Rng + ?Sized>(
    mem: &SensingMemory,
    gen_tti: u64,
    cfg: &SimConfig,
    exclude_ttis: &[u64],
    rng: &mut R,
) -> Vec<Resource> {
    let n = cfg.n_copies();
    let cands = candidates(mem, gen_tti, cfg, exclude_ttis);
    let mut chosen: Vec<Resource> = Vec::with_capacity(n);

    if let Some(mut pool) = surviving_set(&cands, cfg) {
        while chosen.len() < n {
            pool.retain(|&i| compatible(&chosen, &cands[i].resource));
            if pool.is_empty() {
                break;
            }
            let k = rng.random_range(0..pool.len());
            chosen.push(cands[pool.swap_remove(k)].resource);
        }
    }

    if chosen.len() < n {
        // Least-interfered first, ties in random order.
        let mut order: Vec<usize> = (0..cands.len()).collect();
        order.shuffle(rng);
        order.sort_by(|&a, &b| cands[a].blocking_rsrp_dbm.total_cmp(&cands[b].blocking_rsrp_dbm));
        for relax_span in [false, true] {
            for &i in &order {
                if chosen.len() == n {
                    break;
                }
                let r = cands[i].resource;
                let ok = if relax_span {
                    chosen.iter().all(|c| c.tti != r.tti)
                } else {
                    compatible(&chosen, &r)
                };
                if ok {
                    chosen.push(r);
                }
            }
        }
    }

    chosen.sort();
    chosen
}

pub fn sbsps_select<R: Rng + ?Sized>(
    mem: &SensingMemory,
    gen_tti: u64,
    cfg: &SimConfig,
    exclude_ttis: &[u64],
    rng: &mut R,
) -> TxSchedule {
    let reserved = select_resources(mem, gen_tti, cfg, exclude_ttis, rng);
    TxSchedule {
        reserved,
        resel_counter: draw_resel_counter(cfg.rri_ms, rng),
        rri_ms: Some(cfg.rri_ms),
    }
}

pub fn sbds_select<R: Rng + ?Sized>(
    mem: &SensingMemory,
    gen_tti: u64,
    cfg: &SimConfig,
    exclude_ttis: &[u64],
    rng: &mut R,
) -> TxSchedule {
    TxSchedule {
        reserved: select_resources(mem, gen_tti, cfg, exclude_ttis, rng),
        resel_counter: 0,
        rri_ms: None,
    }
}

/// Position-sorted reuse pattern.
///
/// `positions[v]` is vehicle `v`'s abscissa. The period's resources are split
/// into `n_copies` interleaved groups (`i mod n_copies`); the vehicle ranked
/// `j` by position takes index `(j mod G) * n_copies + g` in every group `g`,
/// where `G = n_resources / n_copies`. Its copies are therefore adjacent in
/// the resource order and same-resource users are `G` ranks apart.
pub fn sorted_allocation(positions: &[f64], n_resources: usize, n_copies: usize) -> Vec<Vec<usize>> {
    assert!(n_copies >= 1 && n_resources >= n_copies);
    let groups = n_resources / n_copies;
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]).then(a.cmp(&b)));
    let mut out = vec![Vec::new(); positions.len()];
    for (rank, &v) in order.iter().enumerate() {
        let base = (rank % groups) * n_copies;
        out[v] = (0..n_copies).map(|g| base + g).collect();
    }
    out
}

/// Resources of one sorted-allocation period, placement-major so that
/// consecutive indices are consecutive TTIs.
pub fn period_resources(period_start_tti: u64, period_ttis: u64, cfg: &SimConfig) -> Vec<Resource> {
    let width = cfg.packet_subchannels;
    let placements = cfg.n_subchannels / width;
    (0..placements)
        .flat_map(|p| {
            (0..period_ttis).map(move |t| Resource {
                tti: period_start_tti + t,
                subch_start: p * width,
                subch_count: width,
            })
        })
        .collect()
}
