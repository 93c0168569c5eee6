//! Shared fixtures: small hand-built receiver scenarios and two reference
//! receivers written without any of the library's receiver code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use sidelink_core::allocation::{CopyPointer, Direction};
use sidelink_core::{Contribution, DecodeParams, ReceiverMode, Resource, RxParams, RxState, SciPayload, TtiRecord};

pub const GAMMA_BAR_DB: f64 = 3.6;
pub const KN_DB: f64 = -30.0;

pub fn lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// A few transmitters, each sending one packet (id = transmitter index) as
/// copies at distinct TTIs with per-copy received power.
#[derive(Debug, Clone)]
pub struct Micro {
    pub n_ttis: u64,
    /// `copies[tx]` = sorted `(tti, power_mw)`.
    pub copies: Vec<Vec<(u64, f64)>>,
    pub noise_mw: f64,
}

fn res(tti: u64) -> Resource {
    Resource { tti, subch_start: 0, subch_count: 10 }
}

impl Micro {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let n_tx = rng.random_range(1..=4usize);
        let n_ttis = rng.random_range(1..=4u64);
        let copies = (0..n_tx)
            .map(|_| {
                let mut v = Vec::new();
                for t in 0..n_ttis {
                    if rng.random_bool(0.6) {
                        v.push((t, 1e-9 * lin(rng.random_range(0.0..15.0))));
                    }
                }
                if v.is_empty() {
                    let t = rng.random_range(0..n_ttis);
                    v.push((t, 1e-9 * lin(rng.random_range(0.0..15.0))));
                }
                v
            })
            .collect();
        Self { n_ttis, copies, noise_mw: 1e-10 }
    }

    /// Powers keyed by `(tti, tx)`.
    fn grid(&self) -> BTreeMap<(u64, u32), f64> {
        let mut g = BTreeMap::new();
        for (tx, cs) in self.copies.iter().enumerate() {
            for &(t, p) in cs {
                g.insert((t, tx as u32), p);
            }
        }
        g
    }

    pub fn record(&self, tti: u64) -> TtiRecord {
        let mut contributions = Vec::new();
        for (tx, cs) in self.copies.iter().enumerate() {
            let Some(idx) = cs.iter().position(|&(t, _)| t == tti) else { continue };
            let copy_pointers = cs
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != idx)
                .map(|(i, &(t, _))| CopyPointer {
                    resource: res(t),
                    direction: if i < idx { Direction::Backward } else { Direction::Forward },
                })
                .collect();
            contributions.push(Contribution {
                tx: tx as u32,
                packet_id: tx as u64,
                rx_power_mw: cs[idx].1,
                eta: 1.0,
                resource: res(tti),
                sci: Arc::new(SciPayload {
                    source: tx as u32,
                    packet_id: tx as u64,
                    rri_ms: None,
                    copy_pointers,
                    copy_index: idx as u32,
                    n_copies: cs.len() as u32,
                }),
            });
        }
        TtiRecord::new(tti, contributions, self.noise_mw)
    }
}

pub fn rx_params(mode: ReceiverMode, budget: u32) -> RxParams {
    RxParams {
        mode,
        decode: DecodeParams { gamma_bar_linear: lin(GAMMA_BAR_DB), kn_linear: lin(KN_DB) },
        max_sic_iterations: budget,
        bkc_window_ttis: 32,
    }
}

/// Packets delivered by the library receiver, in delivery order.
pub fn run_receiver(m: &Micro, mode: ReceiverMode, budget: u32) -> Vec<u64> {
    let mut rx = RxState::new(rx_params(mode, budget));
    let mut out = Vec::new();
    for t in 0..m.n_ttis {
        out.extend(rx.process_tti(m.record(t)).into_iter().map(|d| d.packet_id));
    }
    out
}

fn sinr(powers: &[(u32, f64)], z: usize, cancelled: &BTreeSet<u32>, noise: f64, kn: f64) -> f64 {
    let mut i = 0.0;
    for (j, &(tx, p)) in powers.iter().enumerate() {
        if j != z {
            i += if cancelled.contains(&tx) { kn * p } else { p };
        }
    }
    powers[z].1 / (noise + i)
}

/// Descending power, ties by transmitter.
fn sorted_powers(grid: &BTreeMap<(u64, u32), f64>, t: u64) -> Vec<(u32, f64)> {
    let mut v: Vec<(u32, f64)> = grid.range((t, 0)..(t + 1, 0)).map(|(&(_, tx), &p)| (tx, p)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Everything learnable with unlimited effort: once a packet is known all of
/// its copies are cancelled everywhere; in each TTI the strongest remaining
/// signal is retried until it fails. Iterated to a fixed point.
pub fn fixed_point(m: &Micro) -> BTreeSet<u64> {
    let grid = m.grid();
    let (gamma, kn) = (lin(GAMMA_BAR_DB), lin(KN_DB));
    let mut known: BTreeSet<u32> = BTreeSet::new();
    loop {
        let before = known.len();
        for t in 0..m.n_ttis {
            let powers = sorted_powers(&grid, t);
            loop {
                let Some(z) = powers.iter().position(|(tx, _)| !known.contains(tx)) else { break };
                if sinr(&powers, z, &known, m.noise_mw, kn) < gamma {
                    break;
                }
                known.insert(powers[z].0);
            }
        }
        if known.len() == before {
            return known.into_iter().map(u64::from).collect();
        }
    }
}

/// Step-by-step replay of the receiver procedure with a per-pass budget:
/// known-copy cancellation when a TTI arrives, strongest-first decoding,
/// and (with backward cancellation) depth-first reprocessing of earlier
/// TTIs holding copies of each newly decoded packet.
pub struct DfsOracle {
    grid: BTreeMap<(u64, u32), f64>,
    copies: Vec<Vec<u64>>,
    cancelled: BTreeSet<(u64, u32)>,
    known: BTreeSet<u32>,
    order: Vec<u64>,
    current: u64,
    backward: bool,
    budget: u32,
    noise: f64,
}

impl DfsOracle {
    pub fn run(m: &Micro, backward: bool, budget: u32) -> Vec<u64> {
        let mut o = DfsOracle {
            grid: m.grid(),
            copies: m.copies.iter().map(|c| c.iter().map(|&(t, _)| t).collect()).collect(),
            cancelled: BTreeSet::new(),
            known: BTreeSet::new(),
            order: Vec::new(),
            current: 0,
            backward,
            budget,
            noise: m.noise_mw,
        };
        for t in 0..m.n_ttis {
            o.current = t;
            let known_now: Vec<u32> = o.known.iter().copied().collect();
            for tx in known_now {
                if o.grid.contains_key(&(t, tx)) {
                    o.cancelled.insert((t, tx));
                }
            }
            o.pass(t);
        }
        o.order
    }

    fn pass(&mut self, t: u64) {
        let powers = sorted_powers(&self.grid, t);
        let mut retries = self.budget;
        loop {
            let cancelled_here: BTreeSet<u32> =
                powers.iter().filter(|(tx, _)| self.cancelled.contains(&(t, *tx))).map(|&(tx, _)| tx).collect();
            let Some(z) = powers.iter().position(|(tx, _)| !cancelled_here.contains(tx)) else { break };
            if sinr(&powers, z, &cancelled_here, self.noise, lin(KN_DB)) < lin(GAMMA_BAR_DB) {
                break;
            }
            let tx = powers[z].0;
            self.cancelled.insert((t, tx));
            if self.known.insert(tx) {
                self.order.push(u64::from(tx));
            }
            if self.backward {
                for tn in self.copies[tx as usize].clone() {
                    if tn != t && tn <= self.current && self.cancelled.insert((tn, tx)) {
                        self.pass(tn);
                    }
                }
            }
            if retries == 0 {
                break;
            }
            retries -= 1;
        }
    }
}

/// Three vehicles, three TTIs: `Ta = {V2, V3}`, `Tb = {V2}`, `Tc = {V1, V3}`.
/// `p` = powers of (V2@Ta, V3@Ta, V2@Tb, V1@Tc, V3@Tc); vehicle `k` is
/// transmitter / packet `k`.
pub fn three_vehicle_scenario(p: [f64; 5]) -> Micro {
    let mut copies = vec![Vec::new(); 4];
    copies[2] = vec![(0, p[0]), (1, p[2])];
    copies[3] = vec![(0, p[1]), (2, p[4])];
    copies[1] = vec![(2, p[3])];
    Micro { n_ttis: 3, copies, noise_mw: 1e-11 }
}

/// Powers following the narrative: the two signals in `Ta` and in `Tc` are
/// too close to be separated directly, `V2` is alone in `Tb`.
pub const THREE_VEHICLE_POWERS: [f64; 5] = [1e-8, 0.9e-8, 1e-8, 1e-8, 0.9e-8];

pub fn decoded_set(m: &Micro, mode: ReceiverMode) -> BTreeSet<u64> {
    run_receiver(m, mode, 1).into_iter().collect()
}
