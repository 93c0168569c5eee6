//! Channel busy ratio, packet reception ratio by distance, range, wireless
//! blind spots and end-to-end delay.

use std::collections::BTreeMap;

/// Bins with fewer attempts than this are left out of the range estimate.
pub const MIN_RANGE_ATTEMPTS: u64 = 100;
/// PRR a bin must exceed to count towards the range.
pub const RANGE_PRR_TARGET: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrWindow {
    pub start_ms: f64,
    pub busy_count: u64,
    pub total_count: u64,
}

impl CbrWindow {
    pub fn cbr(&self) -> f64 {
        if self.total_count == 0 {
            0.0
        } else {
            self.busy_count as f64 / self.total_count as f64
        }
    }
}

/// Subchannels whose sensed power (mW) is above `threshold_mw`.
pub fn busy_subchannels(sensed_mw: &[f64], threshold_mw: f64) -> u64 {
    sensed_mw.iter().filter(|&&p| p > threshold_mw).count() as u64
}

/// Per-vehicle busy counters over consecutive observation windows.
#[derive(Debug, Clone)]
pub struct CbrTracker {
    total_per_window: u64,
    start_ms: f64,
    busy: Vec<u64>,
    ticks: u64,
    ticks_per_window: u64,
    series: Vec<(f64, f64)>,
}

impl CbrTracker {
    pub fn new(n_vehicles: usize, n_subchannels: u32, ticks_per_window: u64, start_ms: f64) -> Self {
        Self {
            total_per_window: u64::from(n_subchannels) * ticks_per_window,
            start_ms,
            busy: vec![0; n_vehicles],
            ticks: 0,
            ticks_per_window,
            series: Vec::new(),
        }
    }

    pub fn add(&mut self, vehicle: usize, busy: u64) {
        self.busy[vehicle] += busy;
    }

    /// Close one TTI; `window_ms` is the window duration used to stamp the
    /// next window.
    pub fn tick(&mut self, window_ms: f64) {
        self.ticks += 1;
        if self.ticks == self.ticks_per_window {
            for b in &mut self.busy {
                let w = CbrWindow {
                    start_ms: self.start_ms,
                    busy_count: *b,
                    total_count: self.total_per_window,
                };
                self.series.push((w.start_ms, w.cbr()));
                *b = 0;
            }
            self.start_ms += window_ms;
            self.ticks = 0;
        }
    }

    /// Completed windows: one entry per vehicle per window.
    pub fn into_series(self) -> Vec<(f64, f64)> {
        self.series
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrrBin {
    pub center_m: f64,
    pub successes: u64,
    pub attempts: u64,
}

impl PrrBin {
    pub fn prr(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.successes as f64 / self.attempts as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrrAccumulator {
    bin_m: f64,
    max_m: f64,
    successes: Vec<u64>,
    attempts: Vec<u64>,
}

impl PrrAccumulator {
    pub fn new(bin_m: f64, max_m: f64) -> Self {
        let n = (max_m / bin_m).ceil() as usize;
        Self {
            bin_m,
            max_m,
            successes: vec![0; n],
            attempts: vec![0; n],
        }
    }

    /// Bin of a receiver at `distance_m`, or `None` beyond the logging range.
    pub fn bin_of(&self, distance_m: f64) -> Option<usize> {
        if !(0.0..self.max_m).contains(&distance_m) {
            return None;
        }
        Some(((distance_m / self.bin_m) as usize).min(self.attempts.len() - 1))
    }

    pub fn add_attempt(&mut self, bin: usize) {
        self.attempts[bin] += 1;
    }

    pub fn add_success(&mut self, bin: usize) {
        self.successes[bin] += 1;
    }

    /// Register a finished packet/receiver outcome in one go.
    pub fn record_reception(&mut self, distance_m: f64, success: bool) {
        if let Some(b) = self.bin_of(distance_m) {
            self.add_attempt(b);
            if success {
                self.add_success(b);
            }
        }
    }

    pub fn bins(&self) -> Vec<PrrBin> {
        (0..self.attempts.len())
            .map(|i| PrrBin {
                center_m: (i as f64 + 0.5) * self.bin_m,
                successes: self.successes[i],
                attempts: self.attempts[i],
            })
            .collect()
    }
}

/// Upper edge of the farthest bin such that it and every closer bin have
/// PRR above the target. Bins with too few attempts are skipped.
pub fn compute_range(bins: &[PrrBin], bin_m: f64) -> f64 {
    compute_range_with(bins, bin_m, MIN_RANGE_ATTEMPTS)
}

pub fn compute_range_with(bins: &[PrrBin], bin_m: f64, min_attempts: u64) -> f64 {
    let mut range = 0.0;
    for b in bins {
        if b.attempts < min_attempts {
            if b.attempts > 0 {
                log::warn!(
                    "PRR bin at {} m has only {} attempts; excluded from range",
                    b.center_m,
                    b.attempts
                );
            }
            continue;
        }
        if b.prr() > RANGE_PRR_TARGET {
            range = b.center_m + bin_m / 2.0;
        } else {
            break;
        }
    }
    range
}

#[derive(Debug, Clone, Default)]
struct PairSlots {
    eligible: Vec<bool>,
    success: Vec<bool>,
    in_range: bool,
    last_success_ms: Option<f64>,
}

/// Per unordered pair, which observation slots started with the pair
/// within range and which slots saw a successful reception either way.
#[derive(Debug, Clone)]
pub struct WbspTracker {
    n_slots: usize,
    slot_ms: f64,
    pairs: BTreeMap<(u32, u32), PairSlots>,
    gaps: Vec<f64>,
}

fn key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl WbspTracker {
    pub fn new(n_slots: usize, slot_ms: f64) -> Self {
        Self {
            n_slots,
            slot_ms,
            pairs: BTreeMap::new(),
            gaps: Vec::new(),
        }
    }

    /// Eligibility at the start of `slot`.
    pub fn set_eligible(&mut self, a: u32, b: u32, slot: usize, eligible: bool) {
        let n = self.n_slots;
        if eligible {
            let p = self.pairs.entry(key(a, b)).or_insert_with(|| PairSlots {
                eligible: vec![false; n],
                success: vec![false; n],
                in_range: true,
                last_success_ms: None,
            });
            p.eligible[slot] = true;
            p.in_range = true;
        } else if let Some(p) = self.pairs.get_mut(&key(a, b)) {
            p.in_range = false;
            p.last_success_ms = None;
        }
    }

    pub fn is_tracked(&self, a: u32, b: u32) -> bool {
        self.pairs.contains_key(&key(a, b))
    }

    /// A packet from one of the two was received by the other.
    pub fn record_success(&mut self, a: u32, b: u32, slot: usize, time_ms: f64) {
        if let Some(p) = self.pairs.get_mut(&key(a, b)) {
            p.success[slot] = true;
            if p.in_range {
                if let Some(last) = p.last_success_ms {
                    self.gaps.push(time_ms - last);
                }
                p.last_success_ms = Some(time_ms);
            }
        }
    }

    /// Fraction of eligible `window_slots`-long tumbling windows without a
    /// single success in either direction.
    pub fn wbsp(&self, window_slots: usize) -> f64 {
        let (mut blind, mut total) = (0u64, 0u64);
        let n_windows = self.n_slots / window_slots;
        for p in self.pairs.values() {
            for w in 0..n_windows {
                let start = w * window_slots;
                if !p.eligible[start] {
                    continue;
                }
                total += 1;
                if !p.success[start..start + window_slots].iter().any(|&s| s) {
                    blind += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            blind as f64 / total as f64
        }
    }

    /// `(window_ms, wbsp)` for each requested window length in slots.
    pub fn wbsp_curve(&self, window_slots: &[usize]) -> Vec<(f64, f64)> {
        window_slots
            .iter()
            .map(|&m| (m as f64 * self.slot_ms, self.wbsp(m)))
            .collect()
    }

    /// Inter-success gaps observed while pairs stayed in range, sorted.
    pub fn gap_samples(&self) -> Vec<f64> {
        let mut g = self.gaps.clone();
        g.sort_by(f64::total_cmp);
        g
    }
}

/// `P(X > x)` for `x = 0, step, 2 step, ...` up to the first grid point at
/// or above the largest sample.
pub fn ccdf_on_grid(samples: &[f64], step: f64) -> Vec<(f64, f64)> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = *sorted.last().expect("non-empty");
    let n = sorted.len() as f64;
    let steps = (max / step - 1e-9).ceil().max(0.0) as usize;
    (0..=steps)
        .map(|k| {
            let x = k as f64 * step;
            let above = sorted.len() - sorted.partition_point(|&s| s <= x);
            (x, above as f64 / n)
        })
        .collect()
}

/// End-to-end delay of a reception completed at the end of TTI `tti`.
pub fn eed_ms(decode_tti: u64, tti_ms: f64, gen_time_ms: f64) -> f64 {
    (decode_tti + 1) as f64 * tti_ms - gen_time_ms
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
