//! Run results and their CSV rendering.
//!
//! Formatting is fixed so identical runs give byte-identical files: ratios
//! use six significant digits, keys that are whole numbers print without a
//! fractional part.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{ReceiverMode, TrafficMode};
use crate::error::OutputError;
use crate::metrics::{ccdf_on_grid, PrrBin};

pub const CBR_FILE: &str = "cbr.csv";
pub const PRR_FILE: &str = "prr_by_distance.csv";
pub const WBSP_FILE: &str = "wbsp_ccdf.csv";
pub const EED_FILE: &str = "eed_ccdf.csv";
pub const RANGE_FILE: &str = "range_summary.csv";

pub const OUTPUT_FILES: [&str; 5] = [CBR_FILE, PRR_FILE, WBSP_FILE, EED_FILE, RANGE_FILE];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub receiver_mode: ReceiverMode,
    pub traffic_mode: TrafficMode,
    pub n_retx: u32,
    pub density: f64,
}

/// Counters that describe how a run went, not what it measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub vehicles: u64,
    pub packets_generated: u64,
    pub packets_tracked: u64,
    /// Sorted allocation only: packets superseded before their slot came.
    pub packets_dropped: u64,
    pub transmissions: u64,
    pub reselections: u64,
    pub deliveries: u64,
    pub backward_recoveries: u64,
    /// Recovered after the delay budget and therefore not credited.
    pub late_deliveries: u64,
    pub evicted_bkc_targets: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutputs {
    pub summary: Option<RunSummary>,
    /// `(window_start_ms, cbr)`, one entry per vehicle per window.
    pub cbr_series: Vec<(f64, f64)>,
    pub prr_by_distance: Vec<PrrBin>,
    /// Gaps between consecutive receptions of nearby pairs, ms, sorted.
    pub wbsp_samples: Vec<f64>,
    /// `(window_ms, blind-spot probability)`.
    pub wbsp_by_window: Vec<(f64, f64)>,
    /// Sorted, ms.
    pub eed_samples: Vec<f64>,
    pub eed_step_ms: f64,
    pub range_m: f64,
    pub stats: SimStats,
}

/// Six significant digits, trailing zeros kept; zero is `0`.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// Whole numbers without a fractional part, everything else shortest form.
pub fn fmt_key(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub fn cbr_csv(out: &RunOutputs) -> String {
    let mut s = String::from("window_start_ms,cbr\n");
    for &(start, cbr) in &out.cbr_series {
        let _ = writeln!(s, "{},{}", fmt_key(start), fmt_sig6(cbr));
    }
    s
}

pub fn prr_csv(out: &RunOutputs) -> String {
    let mut s = String::from("bin_center_m,successes,attempts,prr\n");
    for b in out.prr_by_distance.iter().filter(|b| b.attempts > 0) {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_key(b.center_m),
            b.successes,
            b.attempts,
            fmt_sig6(b.prr())
        );
    }
    s
}

pub fn wbsp_csv(out: &RunOutputs) -> String {
    let mut s = String::from("gap_ms,ccdf\n");
    for &(w, p) in &out.wbsp_by_window {
        let _ = writeln!(s, "{},{}", fmt_key(w), fmt_sig6(p));
    }
    s
}

pub fn eed_csv(out: &RunOutputs) -> String {
    let mut s = String::from("eed_ms,ccdf\n");
    let step = if out.eed_step_ms > 0.0 { out.eed_step_ms } else { 1.0 };
    for (x, p) in ccdf_on_grid(&out.eed_samples, step) {
        let _ = writeln!(s, "{},{}", fmt_key(x), fmt_sig6(p));
    }
    s
}

pub fn range_csv(out: &RunOutputs) -> String {
    let mut s = String::from("receiver_mode,traffic_mode,n_retx,density,range_m\n");
    if let Some(sum) = &out.summary {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            sum.receiver_mode,
            sum.traffic_mode,
            sum.n_retx,
            fmt_key(sum.density),
            fmt_key(out.range_m)
        );
    }
    s
}

/// Render all five files as `(name, contents)`.
pub fn render_all(out: &RunOutputs) -> [(&'static str, String); 5] {
    [
        (CBR_FILE, cbr_csv(out)),
        (PRR_FILE, prr_csv(out)),
        (WBSP_FILE, wbsp_csv(out)),
        (EED_FILE, eed_csv(out)),
        (RANGE_FILE, range_csv(out)),
    ]
}

pub fn write_metrics_csv(out: &RunOutputs, dir: impl AsRef<Path>) -> Result<(), OutputError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, body) in render_all(out) {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| OutputError::Io { path, source })?;
    }
    Ok(())
}
