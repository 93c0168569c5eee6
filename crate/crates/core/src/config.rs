//! Scenario configuration.
//!
//! The on-disk format is a flat `key = value` document. Blank lines and
//! everything after a `#` are ignored. Keys match the field names of
//! [`SimConfig`]; path-loss coefficients use the `pl.` prefix
//! (`pl.a0_db`, `pl.slope1`, `pl.slope2`, `pl.breakpoint_m`). Keys that are
//! not present keep their defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::channel::PathlossParams;
use crate::error::ConfigError;

/// Longest span, in TTIs, between the first and last copy of a packet.
/// Every copy must sit inside the 32-TTI window addressable by an SCI.
pub const MAX_COPY_SPAN_TTIS: u64 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrafficMode {
    Periodic,
    Aperiodic,
}

/// Receiver capability, ordered from least to most capable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReceiverMode {
    Legacy,
    Sic,
    SicFrc,
    SicFrcBkc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AllocationMode {
    Sbsps,
    Sbds,
    Sorted,
}

impl ReceiverMode {
    pub const ALL: [ReceiverMode; 4] = [
        ReceiverMode::Legacy,
        ReceiverMode::Sic,
        ReceiverMode::SicFrc,
        ReceiverMode::SicFrcBkc,
    ];

    pub fn cancels(self) -> bool {
        self != ReceiverMode::Legacy
    }

    pub fn forward_cancellation(self) -> bool {
        matches!(self, ReceiverMode::SicFrc | ReceiverMode::SicFrcBkc)
    }

    pub fn backward_cancellation(self) -> bool {
        self == ReceiverMode::SicFrcBkc
    }
}

macro_rules! name_enum {
    ($ty:ty, $($variant:ident => $name:literal),+ $(,)?) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $(if s.eq_ignore_ascii_case($name) { return Ok(Self::$variant); })+
                Err(format!("expected one of: {}", [$($name),+].join(", ")))
            }
        }
    };
}

name_enum!(TrafficMode, Periodic => "Periodic", Aperiodic => "Aperiodic");
name_enum!(ReceiverMode, Legacy => "Legacy", Sic => "Sic", SicFrc => "SicFrc", SicFrcBkc => "SicFrcBkc");
name_enum!(AllocationMode, Sbsps => "Sbsps", Sbds => "Sbds", Sorted => "Sorted");

/// Full scenario description. `Default` gives the reference settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub road_length_m: f64,
    pub density_veh_per_km: f64,
    pub lanes_per_direction: u32,
    pub mean_speed_kmh: f64,
    pub speed_std_kmh: f64,
    pub traffic_mode: TrafficMode,
    pub receiver_mode: ReceiverMode,
    pub allocation_mode: AllocationMode,
    pub n_retx: u32,
    /// Measured simulated time, after warm-up.
    pub sim_duration_s: f64,
    /// Simulated time discarded from every metric before measurement starts.
    pub warmup_s: f64,
    pub rng_seed: u64,
    pub numerology_mu: u32,
    pub n_subchannels: u32,
    pub subchannel_prbs: u32,
    /// Subchannels occupied by one packet transmission.
    pub packet_subchannels: u32,
    pub packet_size_bytes: u32,
    pub mcs_sinr_threshold_db: f64,
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub rri_ms: u32,
    pub sensing_window_ms: u32,
    /// Minimum fraction of the selection window that must stay available.
    pub min_available_fraction: f64,
    pub rsrp_threshold_dbm: f64,
    pub keep_probability: f64,
    pub kn_db: f64,
    /// `u32::MAX` means unlimited.
    pub max_sic_iterations: u32,
    pub bkc_window_ttis: u32,
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub noise_figure_db: f64,
    pub bandwidth_mhz: f64,
    pub shadowing_std_db: f64,
    pub shadowing_decorr_m: f64,
    pub channel_update_ms: u32,
    pub pathloss_params: PathlossParams,
    pub cbr_threshold_dbm: f64,
    pub prr_bin_m: f64,
    pub prr_max_distance_m: f64,
    pub wbsp_distance_m: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            road_length_m: 2000.0,
            density_veh_per_km: 12.5,
            lanes_per_direction: 3,
            mean_speed_kmh: 70.0,
            speed_std_kmh: 7.0,
            traffic_mode: TrafficMode::Periodic,
            receiver_mode: ReceiverMode::Legacy,
            allocation_mode: AllocationMode::Sbsps,
            n_retx: 0,
            sim_duration_s: 10.0,
            warmup_s: 2.0,
            rng_seed: 1,
            numerology_mu: 0,
            n_subchannels: 10,
            subchannel_prbs: 10,
            packet_subchannels: 10,
            packet_size_bytes: 1000,
            mcs_sinr_threshold_db: 3.6,
            t1_ms: 1.0,
            t2_ms: 50.0,
            rri_ms: 100,
            sensing_window_ms: 1000,
            min_available_fraction: 0.2,
            rsrp_threshold_dbm: -126.0,
            keep_probability: 0.0,
            kn_db: -30.0,
            max_sic_iterations: 1,
            bkc_window_ttis: 32,
            tx_power_dbm: 23.0,
            antenna_gain_dbi: 3.0,
            noise_figure_db: 9.0,
            bandwidth_mhz: 20.0,
            shadowing_std_db: 3.0,
            shadowing_decorr_m: 25.0,
            channel_update_ms: 100,
            pathloss_params: PathlossParams::default(),
            cbr_threshold_dbm: -94.0,
            prr_bin_m: 20.0,
            prr_max_distance_m: 1000.0,
            wbsp_distance_m: 100.0,
        }
    }
}

fn parse_value<T: FromStr>(field: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        field: field.to_string(),
        value: raw.to_string(),
        reason: e.to_string(),
    })
}

fn parse_iterations(field: &str, raw: &str) -> Result<u32, ConfigError> {
    match raw.to_ascii_lowercase().as_str() {
        "inf" | "unlimited" => Ok(u32::MAX),
        _ => parse_value(field, raw),
    }
}

impl SimConfig {
    /// Assign one field by its config key. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<bool, ConfigError> {
        let raw = raw.trim();
        match key {
            "road_length_m" => self.road_length_m = parse_value(key, raw)?,
            "density_veh_per_km" => self.density_veh_per_km = parse_value(key, raw)?,
            "lanes_per_direction" => self.lanes_per_direction = parse_value(key, raw)?,
            "mean_speed_kmh" => self.mean_speed_kmh = parse_value(key, raw)?,
            "speed_std_kmh" => self.speed_std_kmh = parse_value(key, raw)?,
            "traffic_mode" => self.traffic_mode = parse_value(key, raw)?,
            "receiver_mode" => self.receiver_mode = parse_value(key, raw)?,
            "allocation_mode" => self.allocation_mode = parse_value(key, raw)?,
            "n_retx" => self.n_retx = parse_value(key, raw)?,
            "sim_duration_s" => self.sim_duration_s = parse_value(key, raw)?,
            "warmup_s" => self.warmup_s = parse_value(key, raw)?,
            "rng_seed" => self.rng_seed = parse_value(key, raw)?,
            "numerology_mu" => self.numerology_mu = parse_value(key, raw)?,
            "n_subchannels" => self.n_subchannels = parse_value(key, raw)?,
            "subchannel_prbs" => self.subchannel_prbs = parse_value(key, raw)?,
            "packet_subchannels" => self.packet_subchannels = parse_value(key, raw)?,
            "packet_size_bytes" => self.packet_size_bytes = parse_value(key, raw)?,
            "mcs_sinr_threshold_db" => self.mcs_sinr_threshold_db = parse_value(key, raw)?,
            "t1_ms" => self.t1_ms = parse_value(key, raw)?,
            "t2_ms" => self.t2_ms = parse_value(key, raw)?,
            "rri_ms" => self.rri_ms = parse_value(key, raw)?,
            "sensing_window_ms" => self.sensing_window_ms = parse_value(key, raw)?,
            "min_available_fraction" => self.min_available_fraction = parse_value(key, raw)?,
            "rsrp_threshold_dbm" => self.rsrp_threshold_dbm = parse_value(key, raw)?,
            "keep_probability" => self.keep_probability = parse_value(key, raw)?,
            "kn_db" => self.kn_db = parse_value(key, raw)?,
            "max_sic_iterations" => self.max_sic_iterations = parse_iterations(key, raw)?,
            "bkc_window_ttis" => self.bkc_window_ttis = parse_value(key, raw)?,
            "tx_power_dbm" => self.tx_power_dbm = parse_value(key, raw)?,
            "antenna_gain_dbi" => self.antenna_gain_dbi = parse_value(key, raw)?,
            "noise_figure_db" => self.noise_figure_db = parse_value(key, raw)?,
            "bandwidth_mhz" => self.bandwidth_mhz = parse_value(key, raw)?,
            "shadowing_std_db" => self.shadowing_std_db = parse_value(key, raw)?,
            "shadowing_decorr_m" => self.shadowing_decorr_m = parse_value(key, raw)?,
            "channel_update_ms" => self.channel_update_ms = parse_value(key, raw)?,
            "pl.a0_db" => self.pathloss_params.a0_db = parse_value(key, raw)?,
            "pl.slope1" => self.pathloss_params.slope1 = parse_value(key, raw)?,
            "pl.slope2" => self.pathloss_params.slope2 = parse_value(key, raw)?,
            "pl.breakpoint_m" => self.pathloss_params.breakpoint_m = parse_value(key, raw)?,
            "cbr_threshold_dbm" => self.cbr_threshold_dbm = parse_value(key, raw)?,
            "prr_bin_m" => self.prr_bin_m = parse_value(key, raw)?,
            "prr_max_distance_m" => self.prr_max_distance_m = parse_value(key, raw)?,
            "wbsp_distance_m" => self.wbsp_distance_m = parse_value(key, raw)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parse a config document on top of the defaults and validate it.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_document(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_document(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            let known = self.set(key, value).map_err(|e| match e {
                ConfigError::InvalidValue { field, value, reason } => ConfigError::Parse {
                    line: line_no,
                    message: format!("invalid value `{value}` for `{field}`: {reason}"),
                },
                other => other,
            })?;
            if !known {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Apply `key=value` overrides (as given on the command line) and re-validate.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for ov in overrides {
            let ov = ov.as_ref();
            let Some((key, value)) = ov.split_once('=') else {
                return Err(ConfigError::InvalidValue {
                    field: "override".into(),
                    value: ov.to_string(),
                    reason: "expected key=value".into(),
                });
            };
            let key = key.trim();
            if !self.set(key, value)? {
                return Err(ConfigError::InvalidValue {
                    field: "override".into(),
                    value: ov.to_string(),
                    reason: format!("unknown key `{key}`"),
                });
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(field: &str, reason: impl Into<String>) -> Result<(), ConfigError> {
            Err(ConfigError::Invariant {
                field: field.to_string(),
                reason: reason.into(),
            })
        }

        let finite = [
            ("road_length_m", self.road_length_m),
            ("density_veh_per_km", self.density_veh_per_km),
            ("mean_speed_kmh", self.mean_speed_kmh),
            ("speed_std_kmh", self.speed_std_kmh),
            ("sim_duration_s", self.sim_duration_s),
            ("warmup_s", self.warmup_s),
            ("mcs_sinr_threshold_db", self.mcs_sinr_threshold_db),
            ("t1_ms", self.t1_ms),
            ("t2_ms", self.t2_ms),
            ("rsrp_threshold_dbm", self.rsrp_threshold_dbm),
            ("kn_db", self.kn_db),
            ("tx_power_dbm", self.tx_power_dbm),
            ("antenna_gain_dbi", self.antenna_gain_dbi),
            ("noise_figure_db", self.noise_figure_db),
            ("bandwidth_mhz", self.bandwidth_mhz),
            ("shadowing_std_db", self.shadowing_std_db),
            ("shadowing_decorr_m", self.shadowing_decorr_m),
            ("cbr_threshold_dbm", self.cbr_threshold_dbm),
            ("prr_bin_m", self.prr_bin_m),
            ("prr_max_distance_m", self.prr_max_distance_m),
            ("wbsp_distance_m", self.wbsp_distance_m),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return bad(name, "must be finite");
            }
        }
        for (name, v) in [
            ("road_length_m", self.road_length_m),
            ("density_veh_per_km", self.density_veh_per_km),
            ("sim_duration_s", self.sim_duration_s),
            ("bandwidth_mhz", self.bandwidth_mhz),
            ("shadowing_decorr_m", self.shadowing_decorr_m),
            ("prr_bin_m", self.prr_bin_m),
            ("prr_max_distance_m", self.prr_max_distance_m),
        ] {
            if v <= 0.0 {
                return bad(name, "must be strictly positive");
            }
        }
        if self.warmup_s < 0.0 {
            return bad("warmup_s", "must not be negative");
        }
        if self.lanes_per_direction == 0 {
            return bad("lanes_per_direction", "must be at least 1");
        }
        if self.speed_std_kmh < 0.0 || self.shadowing_std_db < 0.0 {
            return bad("speed_std_kmh/shadowing_std_db", "standard deviations must be >= 0");
        }
        if self.n_retx > 3 {
            return bad("n_retx", "must be in [0, 3]");
        }
        if self.numerology_mu > 3 {
            return bad("numerology_mu", "must be in [0, 3]");
        }
        if self.n_subchannels == 0 || self.packet_subchannels == 0 {
            return bad("n_subchannels", "subchannel counts must be positive");
        }
        if self.packet_subchannels > self.n_subchannels {
            return bad("packet_subchannels", "cannot exceed n_subchannels");
        }
        if self.packet_size_bytes == 0 {
            return bad("packet_size_bytes", "must be positive");
        }
        if self.t1_ms < 0.0 {
            return bad("t1_ms", "must not be negative");
        }
        if self.t1_ms >= self.t2_ms {
            return bad("t1_ms/t2_ms", format!("t1_ms ({}) must be below t2_ms ({})", self.t1_ms, self.t2_ms));
        }
        let (t1, t2) = (self.t1_ttis(), self.t2_ttis());
        if t1 == 0 {
            return bad("t1_ms", "selection window must start at least one TTI after generation");
        }
        let window = t2.saturating_sub(t1) + 1;
        let copies = u64::from(self.n_retx) + 1;
        if t2 < t1 || window < copies || copies > MAX_COPY_SPAN_TTIS + 1 {
            return bad(
                "n_retx",
                format!("{copies} copies do not fit in the selection window of {window} TTIs"),
            );
        }
        if self.rri_ms == 0 {
            return bad("rri_ms", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.keep_probability) {
            return bad("keep_probability", "must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.min_available_fraction) {
            return bad("min_available_fraction", "must be in [0, 1]");
        }
        if self.kn_db > 0.0 {
            return bad("kn_db", "residual factor must be <= 0 dB");
        }
        if self.bkc_window_ttis == 0 {
            return bad("bkc_window_ttis", "must be positive");
        }
        if self.channel_update_ms == 0 {
            return bad("channel_update_ms", "must be positive");
        }
        if self.sensing_window_ms == 0 {
            return bad("sensing_window_ms", "must be positive");
        }
        self.pathloss_params
            .validate()
            .map_err(|e| ConfigError::Invariant {
                field: "pl".into(),
                reason: e.to_string(),
            })?;
        Ok(())
    }

    pub fn tti_ms(&self) -> f64 {
        1.0 / f64::from(1u32 << self.numerology_mu)
    }

    pub fn ttis_per_ms(&self) -> u64 {
        1u64 << self.numerology_mu
    }

    pub fn ms_to_ttis_ceil(&self, ms: f64) -> u64 {
        (ms * self.ttis_per_ms() as f64 - 1e-9).ceil().max(0.0) as u64
    }

    pub fn ms_to_ttis_floor(&self, ms: f64) -> u64 {
        (ms * self.ttis_per_ms() as f64 + 1e-9).floor().max(0.0) as u64
    }

    pub fn t1_ttis(&self) -> u64 {
        self.ms_to_ttis_ceil(self.t1_ms)
    }

    pub fn t2_ttis(&self) -> u64 {
        self.ms_to_ttis_floor(self.t2_ms)
    }

    pub fn rri_ttis(&self) -> u64 {
        u64::from(self.rri_ms) * self.ttis_per_ms()
    }

    pub fn n_copies(&self) -> usize {
        self.n_retx as usize + 1
    }

    pub fn vehicle_count(&self) -> usize {
        (self.density_veh_per_km * self.road_length_m / 1000.0).round() as usize
    }
}

/// Load and validate a config file. Unspecified keys keep their defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SimConfig::parse_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_reference_defaults() {
        let cfg = SimConfig::parse_str("").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.t1_ms, 1.0);
        assert_eq!(cfg.t2_ms, 50.0);
        assert_eq!(cfg.kn_db, -30.0);
        assert_eq!(cfg.mcs_sinr_threshold_db, 3.6);
        assert_eq!(cfg.rsrp_threshold_dbm, -126.0);
        assert_eq!(cfg.keep_probability, 0.0);
        assert_eq!(cfg.n_subchannels, 10);
        assert_eq!(cfg.max_sic_iterations, 1);
        assert_eq!(cfg.tx_power_dbm, 23.0);
        assert_eq!(cfg.noise_figure_db, 9.0);
        assert_eq!((cfg.t1_ttis(), cfg.t2_ttis()), (1, 50));
    }

    #[test]
    fn reversed_selection_window_names_both_fields() {
        let err = SimConfig::parse_str("t1_ms = 60\nt2_ms = 50\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t1_ms") && msg.contains("t2_ms"), "{msg}");
    }

    #[test]
    fn values_round_trip() {
        let cfg = SimConfig::parse_str("n_retx = 3   # three blind repetitions\ntraffic_mode=Aperiodic\n").unwrap();
        assert_eq!(cfg.n_retx, 3);
        assert_eq!(cfg.traffic_mode, TrafficMode::Aperiodic);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = SimConfig::parse_str("# header\n\nn_retx = two\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = SimConfig::parse_str("n_retx 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
        let err = SimConfig::parse_str("x=1\nbogus_key = 4\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
    }

    #[test]
    fn invariants_are_enforced() {
        for doc in [
            "n_retx = 4",
            "density_veh_per_km = 0",
            "road_length_m = -5",
            "sim_duration_s = 0",
            "keep_probability = 1.5",
            "kn_db = inf",
            "pl.breakpoint_m = 0",
            "packet_subchannels = 11",
        ] {
            assert!(SimConfig::parse_str(doc).is_err(), "{doc} should be rejected");
        }
    }

    #[test]
    fn overrides_apply_after_file() {
        let mut cfg = SimConfig::parse_str("n_retx = 1\n").unwrap();
        cfg.apply_overrides(&["n_retx=2", "receiver_mode=sicfrcbkc", "max_sic_iterations=inf"])
            .unwrap();
        assert_eq!(cfg.n_retx, 2);
        assert_eq!(cfg.receiver_mode, ReceiverMode::SicFrcBkc);
        assert_eq!(cfg.max_sic_iterations, u32::MAX);
        assert!(cfg.apply_overrides(&["nope=1"]).is_err());
    }

    #[test]
    fn numerology_scales_tti_counts() {
        let cfg = SimConfig {
            numerology_mu: 1,
            ..SimConfig::default()
        };
        assert_eq!(cfg.tti_ms(), 0.5);
        assert_eq!(cfg.t2_ttis(), 100);
        assert_eq!(cfg.rri_ttis(), 200);
    }
}
