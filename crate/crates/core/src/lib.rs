//! Sidelink Mode 2 system-level simulator.
//!
//! Vehicles on a ring highway send periodic or aperiodic packets with blind
//! repetitions over a shared sidelink carrier. Transmitters pick resources
//! by sensing (semi-persistent or dynamic) or from a position-sorted pattern;
//! receivers range from a plain single-packet decoder to successive
//! interference cancellation that also cancels known future and past copies
//! of packets it has already decoded.
//!
//! [`run_simulation`] is the entry point; [`write_metrics_csv`] turns its
//! result into CSV files.

pub mod allocation;
pub mod channel;
pub mod config;
pub mod error;
pub mod metrics;
pub mod output;
pub mod phy;
pub mod receiver;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use allocation::{Resource, SciFormat, SciPayload, TxSchedule};
pub use channel::PathlossParams;
pub use config::{load_config, AllocationMode, ReceiverMode, SimConfig, TrafficMode};
pub use error::{ChannelError, ConfigError, OutputError, PhyError, ReceiverError, SimError};
pub use metrics::PrrBin;
pub use output::{render_all, write_metrics_csv, RunOutputs, RunSummary, SimStats};
pub use phy::{Contribution, DecodeParams, TtiRecord};
pub use receiver::{Delivery, RxParams, RxState, TraceEvent, TraceKind};
pub use sim::{run_simulation, run_simulation_multi, run_simulation_traced};
