//! Multi-cell downlink simulator where a power-allocation agent and a
//! radio-resource-allocation agent learn with deep Q-networks, either
//! independently or as a team that shares intended actions before acting.

pub mod env;
pub mod error;
pub mod experiment;
pub mod phy;
pub mod rl;
pub mod rng;
pub mod verify;
pub mod xapps;

pub use error::{Result, SimError};
