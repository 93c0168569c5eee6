//! Highway layout, vehicle mobility and application traffic.
//!
//! The road is a ring of `road_length_m`; every distance is geodesic on the
//! ring. Lanes are kept for bookkeeping only, so two vehicles in different
//! lanes at the same abscissa are treated as co-located.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::config::{SimConfig, TrafficMode};

pub const PERIODIC_INTERVAL_MS: f64 = 100.0;
pub const APERIODIC_FIXED_MS: f64 = 50.0;
pub const APERIODIC_MEAN_VARIABLE_MS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u32,
    pub position_m: f64,
    pub lane: u32,
    /// +1 or -1.
    pub direction: i8,
    pub speed_ms: f64,
    pub next_gen_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub source: u32,
    pub gen_time_ms: f64,
    pub size_bytes: u32,
}

/// Geodesic distance between two abscissas on a ring of length `ring_m`.
pub fn ring_distance(a: f64, b: f64, ring_m: f64) -> f64 {
    let d = (a - b).abs() % ring_m;
    d.min(ring_m - d)
}

/// Place `round(density * L / 1000)` vehicles, spread evenly over lanes, with
/// i.i.d. uniform positions and truncated-Gaussian speeds.
pub fn spawn_vehicles<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Vec<Vehicle> {
    let count = cfg.vehicle_count();
    let n_lanes = 2 * cfg.lanes_per_direction;
    let speed = Normal::new(cfg.mean_speed_kmh, cfg.speed_std_kmh.max(0.0))
        .expect("speed std validated non-negative");
    let first_interval = match cfg.traffic_mode {
        TrafficMode::Periodic => PERIODIC_INTERVAL_MS,
        TrafficMode::Aperiodic => APERIODIC_FIXED_MS + APERIODIC_MEAN_VARIABLE_MS,
    };
    (0..count)
        .map(|i| {
            let lane = i as u32 % n_lanes;
            let direction = if lane < cfg.lanes_per_direction { 1 } else { -1 };
            let position_m = rng.random_range(0.0..cfg.road_length_m);
            let speed_kmh: f64 = speed.sample(rng);
            let next_gen_time_ms = rng.random_range(0.0..first_interval);
            Vehicle {
                id: i as u32,
                position_m,
                lane,
                direction,
                speed_ms: speed_kmh.max(0.0) / 3.6,
                next_gen_time_ms,
            }
        })
        .collect()
}

/// Constant-speed motion along the ring.
pub fn advance_mobility(vehicles: &mut [Vehicle], road_length_m: f64, dt_ms: f64) {
    debug_assert!(dt_ms > 0.0);
    for v in vehicles {
        let step = f64::from(v.direction) * v.speed_ms * dt_ms / 1000.0;
        v.position_m = (v.position_m + step).rem_euclid(road_length_m);
        if v.position_m >= road_length_m {
            v.position_m = 0.0;
        }
    }
}

/// Time until the next packet: 100 ms for periodic traffic, 50 ms plus an
/// exponential part with mean 50 ms for aperiodic traffic.
pub fn next_packet_interval<R: Rng + ?Sized>(mode: TrafficMode, rng: &mut R) -> f64 {
    match mode {
        TrafficMode::Periodic => PERIODIC_INTERVAL_MS,
        TrafficMode::Aperiodic => {
            let exp = Exp::new(1.0 / APERIODIC_MEAN_VARIABLE_MS).expect("positive rate");
            APERIODIC_FIXED_MS + exp.sample(rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn cfg(density: f64, road: f64) -> SimConfig {
        SimConfig {
            density_veh_per_km: density,
            road_length_m: road,
            ..SimConfig::default()
        }
    }

    #[test]
    fn vehicle_counts_follow_density() {
        let mut rng = stream(1, Stream::Placement);
        assert_eq!(spawn_vehicles(&cfg(12.5, 4000.0), &mut rng).len(), 50);
        assert_eq!(spawn_vehicles(&cfg(50.0, 2000.0), &mut rng).len(), 100);
    }

    #[test]
    fn spawn_respects_invariants() {
        let c = SimConfig {
            speed_std_kmh: 80.0,
            ..cfg(100.0, 2000.0)
        };
        let mut rng = stream(3, Stream::Placement);
        let vs = spawn_vehicles(&c, &mut rng);
        let mut per_lane = [0usize; 6];
        for v in &vs {
            assert!(v.speed_ms >= 0.0);
            assert!((0.0..2000.0).contains(&v.position_m));
            assert!(v.lane < 6);
            assert_eq!(v.direction, if v.lane < 3 { 1 } else { -1 });
            per_lane[v.lane as usize] += 1;
        }
        let (lo, hi) = (per_lane.iter().min().unwrap(), per_lane.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn mobility_wraps_on_the_ring() {
        let mut vs = vec![Vehicle {
            id: 0,
            position_m: 3990.0,
            lane: 0,
            direction: 1,
            speed_ms: 20.0,
            next_gen_time_ms: 0.0,
        }];
        advance_mobility(&mut vs, 4000.0, 1000.0);
        assert!((vs[0].position_m - 10.0).abs() < 1e-9);

        vs[0].direction = -1;
        vs[0].position_m = 5.0;
        advance_mobility(&mut vs, 4000.0, 1000.0);
        assert!((vs[0].position_m - 3985.0).abs() < 1e-9);

        vs[0].speed_ms = 0.0;
        advance_mobility(&mut vs, 4000.0, 1000.0);
        assert!((vs[0].position_m - 3985.0).abs() < 1e-9);
    }

    #[test]
    fn periodic_interval_is_fixed() {
        let mut rng = stream(1, Stream::Traffic);
        assert_eq!(next_packet_interval(TrafficMode::Periodic, &mut rng), 100.0);
    }

    #[test]
    fn aperiodic_interval_mean_and_floor() {
        let mut rng = stream(11, Stream::Traffic);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = next_packet_interval(TrafficMode::Aperiodic, &mut rng);
            assert!(x >= 50.0);
            sum += x;
        }
        let mean = sum / n as f64;
        assert!((mean - 100.0).abs() < 2.0, "mean {mean}");
    }

    #[test]
    fn aperiodic_interval_matches_shifted_exponential_ks() {
        let mut rng = stream(5, Stream::Traffic);
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| next_packet_interval(TrafficMode::Aperiodic, &mut rng))
            .collect();
        xs.sort_by(f64::total_cmp);
        let cdf = |x: f64| 1.0 - (-(x - 50.0) / 50.0).exp();
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at alpha = 0.01.
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    proptest! {
        #[test]
        fn ring_distance_is_symmetric_and_bounded(a in 0.0..2000.0f64, b in 0.0..2000.0f64) {
            let d = ring_distance(a, b, 2000.0);
            prop_assert_eq!(d, ring_distance(b, a, 2000.0));
            prop_assert!(d >= 0.0 && d <= 1000.0);
        }
    }
}
