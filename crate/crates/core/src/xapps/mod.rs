//! The power-allocation and resource-allocation xAPPs and their joint
//! per-slot choreography.

pub mod actions;
pub mod features;
pub mod power;
pub mod rra;
pub mod team;

pub use actions::{power_ladder, JointPowerCodec, PowerIntention, RraIntention};
pub use features::FeatureScale;
pub use power::PowerXapp;
pub use rra::RraXapp;
pub use team::{Decisions, Mode, SlotExperiences, SlotStep, Team, TraceRecord, TrainReport};
