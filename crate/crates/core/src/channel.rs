//! Large-scale propagation: dual-slope log-distance path loss, per-link
//! correlated log-normal shadowing, antenna gains and thermal noise.
//!
//! The shipped [`PathlossParams::default`] is an "ECC-rural-like" curve:
//! free-space loss at 5.9 GHz up to the two-ray breakpoint of 1.5 m antennas,
//! then a fourth-power law. Standards-grade comparisons should load the exact
//! ETSI coefficients through the `pl.*` config keys.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SimConfig;
use crate::error::ChannelError;
use crate::scenario::{ring_distance, Vehicle};

/// Thermal noise density at 290 K.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Links shorter than this are evaluated at this distance.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossParams {
    /// Loss at 1 m.
    pub a0_db: f64,
    /// Exponent below the breakpoint (loss grows by `10 * slope1` dB/decade).
    pub slope1: f64,
    /// Exponent above the breakpoint.
    pub slope2: f64,
    pub breakpoint_m: f64,
}

impl Default for PathlossParams {
    fn default() -> Self {
        Self {
            a0_db: 47.86,
            slope1: 2.0,
            slope2: 4.0,
            breakpoint_m: 177.0,
        }
    }
}

impl PathlossParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.a0_db.is_finite() && self.slope1.is_finite() && self.slope2.is_finite()) {
            return Err(ChannelError::InvalidParams("coefficients must be finite".into()));
        }
        if !(self.breakpoint_m.is_finite() && self.breakpoint_m > 0.0) {
            return Err(ChannelError::InvalidParams("breakpoint_m must be > 0".into()));
        }
        if self.slope1 < 0.0 || self.slope2 < self.slope1 {
            return Err(ChannelError::InvalidParams(
                "slopes must satisfy slope2 >= slope1 >= 0".into(),
            ));
        }
        Ok(())
    }
}

pub fn path_loss_db(d_m: f64, p: &PathlossParams) -> Result<f64, ChannelError> {
    if !(d_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(d_m));
    }
    let near = d_m.min(p.breakpoint_m);
    let far = (d_m / p.breakpoint_m).max(1.0);
    Ok(p.a0_db + 10.0 * p.slope1 * near.log10() + 10.0 * p.slope2 * far.log10())
}

/// Shadowing state of one unordered vehicle pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowLink {
    pub value_db: f64,
    pub last_positions: (f64, f64),
}

/// First-order autoregressive update with correlation `exp(-moved / decorr)`.
/// `moved_m` is the summed displacement of both endpoints since the last
/// update. The marginal stays `N(0, sigma^2)`.
pub fn shadowing_step<R: Rng + ?Sized>(
    link: &mut ShadowLink,
    moved_m: f64,
    sigma_db: f64,
    decorr_m: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(moved_m >= 0.0);
    if moved_m > 0.0 {
        let rho = (-moved_m / decorr_m).exp();
        let z: f64 = StandardNormal.sample(rng);
        link.value_db = rho * link.value_db + (1.0 - rho * rho).sqrt() * sigma_db * z;
    }
    link.value_db
}

/// Positive shadowing is extra loss.
pub fn received_power_dbm(tx_dbm: f64, gains_dbi_sum: f64, pl_db: f64, shadow_db: f64) -> f64 {
    tx_dbm + gains_dbi_sum - pl_db - shadow_db
}

pub fn noise_power_dbm(bandwidth_mhz: f64, nf_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * (bandwidth_mhz * 1e6).log10() + nf_db
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Pairwise large-scale channel between all vehicles, refreshed on demand.
///
/// Received powers are symmetric: both directions of a link share path loss,
/// shadowing and antenna gains.
#[derive(Debug, Clone)]
pub struct ChannelState {
    n: usize,
    road_length_m: f64,
    links: Vec<ShadowLink>,
    distance_m: Vec<f64>,
    power_mw: Vec<f64>,
}

impl ChannelState {
    pub fn new<R: Rng + ?Sized>(
        vehicles: &[Vehicle],
        cfg: &SimConfig,
        rng: &mut R,
    ) -> Result<Self, ChannelError> {
        let n = vehicles.len();
        let mut links = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let z: f64 = StandardNormal.sample(rng);
                links.push(ShadowLink {
                    value_db: cfg.shadowing_std_db * z,
                    last_positions: (vehicles[i].position_m, vehicles[j].position_m),
                });
            }
        }
        let mut state = Self {
            n,
            road_length_m: cfg.road_length_m,
            links,
            distance_m: vec![0.0; n * n],
            power_mw: vec![0.0; n * n],
        };
        state.recompute(vehicles, cfg)?;
        Ok(state)
    }

    /// Advance shadowing to the current positions and recompute powers.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        vehicles: &[Vehicle],
        cfg: &SimConfig,
        rng: &mut R,
    ) -> Result<(), ChannelError> {
        let mut k = 0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let link = &mut self.links[k];
                let (pi, pj) = (vehicles[i].position_m, vehicles[j].position_m);
                let moved = ring_distance(pi, link.last_positions.0, self.road_length_m)
                    + ring_distance(pj, link.last_positions.1, self.road_length_m);
                shadowing_step(link, moved, cfg.shadowing_std_db, cfg.shadowing_decorr_m, rng);
                link.last_positions = (pi, pj);
                k += 1;
            }
        }
        self.recompute(vehicles, cfg)
    }

    fn recompute(&mut self, vehicles: &[Vehicle], cfg: &SimConfig) -> Result<(), ChannelError> {
        let gains = 2.0 * cfg.antenna_gain_dbi;
        let mut k = 0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d = ring_distance(vehicles[i].position_m, vehicles[j].position_m, self.road_length_m);
                let pl = path_loss_db(d.max(MIN_LINK_DISTANCE_M), &cfg.pathloss_params)?;
                let p = dbm_to_mw(received_power_dbm(cfg.tx_power_dbm, gains, pl, self.links[k].value_db));
                self.distance_m[i * self.n + j] = d;
                self.distance_m[j * self.n + i] = d;
                self.power_mw[i * self.n + j] = p;
                self.power_mw[j * self.n + i] = p;
                k += 1;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Power received at `rx` from `tx`, in mW.
    pub fn power_mw(&self, rx: usize, tx: usize) -> f64 {
        self.power_mw[rx * self.n + tx]
    }

    pub fn distance_m(&self, a: usize, b: usize) -> f64 {
        self.distance_m[a * self.n + b]
    }
}
