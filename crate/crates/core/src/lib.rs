//! Hybrid-rate maximization for RIS-aided networks that serve NOMA users and
//! over-the-air federated learning (AirFL) users on the same resource.

pub mod channel;
pub mod config;
pub mod convex;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod orchestrator;
pub mod power;
pub mod receive;
pub mod reflection;

pub use channel::{ChannelRealization, PhaseMode, ReflectionState, C64};
pub use config::{NetworkConfig, SolverSettings, UserPlacement};
pub use error::{Error, Result};
pub use metrics::{RateBreakdown, TransceiverState};
pub use orchestrator::{alternating_optimize, run_scheme_suite, Scheme, SolveReport, Termination};
