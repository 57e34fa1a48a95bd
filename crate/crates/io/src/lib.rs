//! Session logs, replay, synthetic observers and the live session service
//! around the `aaad-core` engine.

pub mod live;
pub mod log;
pub mod reference;
pub mod replay;
pub mod service;
pub mod synth;

pub use live::{ClientMessage, LiveOptions, LiveSession, ServerMessage, LIVE_SCHEMA};
pub use log::{parse_log, split_trials, write_log, LogEvent, LogRecord, LoggedTrial, LOG_SCHEMA};
pub use replay::{replay, Speed};
pub use service::{serve, ServiceConfig};
pub use synth::{simulate, synthesize, Arm, SaccadePolicy, SimulationReport, StopPolicy, SyntheticObserverParams};
