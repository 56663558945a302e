//! Parallel decoding by time-slice partitioning and recursive fusion.

pub mod engine;
pub mod plan;

pub use engine::{FusionDecoder, FusionOutcome, JobEvent, Schedule, TimingReport};
pub use plan::{FusionPlan, PlanKind};
