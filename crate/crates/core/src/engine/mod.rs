//! Real-time trial processing: oculomotor classification, the three
//! satisfaction channels, the Explore/Move-On state machine and reporting.

pub mod classify;
pub mod metrics;
pub mod trial;

pub use classify::{classify_oculomotor, ClassifierConfig, GazeSample, OculomotorEvent, SaccadeClassifier};
pub use metrics::{aggregate_session, SessionMetrics, TargetRates};
pub use trial::{
    run_trial, shadow_mode, AidState, EngineConfig, EngineOutput, GroundTruth, KeyCode, RatingStage, Responses,
    TraceEntry, TrialConfig, TrialEngine, TrialInput, TrialReport, UserAction, MAP_INTERLUDE_MS, TICK_MS,
};
