//! Core of the attention allocation aid.
//!
//! The crate turns psychometric data into perceptual performance curves,
//! derives per-setting satisfaction thresholds from them and runs the
//! real-time trial state machine that recommends moving on once time, eye
//! movements and accumulated detectability all say the image has been
//! searched enough.

pub mod bundle;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod export;
pub mod ppc;
pub mod satisfaction;
pub mod sdt;
pub mod setting;
pub mod surface;

pub use error::{Error, Result};
pub use setting::{Level, Scene, Setting, Target};
