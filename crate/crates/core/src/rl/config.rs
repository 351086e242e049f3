use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain semi-gradient step, the literal DQN update.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Discount factor gamma.
    pub discount: f64,
    pub batch_size: usize,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    /// Slot at which the linear epsilon ramp reaches `epsilon_final`.
    pub epsilon_decay_slots: u64,
    pub replay_capacity: usize,
    /// Train once every this many slots.
    pub train_every: u64,
    /// Minimum stored experiences before training starts.
    pub warmup: usize,
    pub optimizer: OptimizerKind,
    /// When set, bootstrap targets come from a copy synced every this many
    /// training steps instead of the live network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_sync: Option<u64>,
    pub power_hidden: [usize; 2],
    pub rra_hidden: [usize; 2],
    /// With learning off, agents act from their initial weights.
    pub learning: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            discount: 0.2,
            batch_size: 32,
            epsilon_initial: 0.3,
            epsilon_final: 0.01,
            epsilon_decay_slots: 10_000,
            replay_capacity: 10_000,
            train_every: 1,
            warmup: 500,
            optimizer: OptimizerKind::Sgd,
            target_sync: None,
            power_hidden: [256, 128],
            rra_hidden: [512, 256],
            learning: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |k: &str, m: &str| Err(SimError::config(format!("train.{k}"), m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&self.discount) {
            return err("discount", "must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_initial) {
            return err("epsilon_initial", "must lie in [0, 1]");
        }
        if !(0.0..=self.epsilon_initial).contains(&self.epsilon_final) {
            return err("epsilon_final", "must lie in [0, epsilon_initial]");
        }
        if self.replay_capacity == 0 {
            return err("replay_capacity", "must be positive");
        }
        if self.train_every == 0 {
            return err("train_every", "must be positive");
        }
        if self.target_sync == Some(0) {
            return err("target_sync", "must be positive when set");
        }
        if self.power_hidden.contains(&0) {
            return err("power_hidden", "hidden sizes must be positive");
        }
        if self.rra_hidden.contains(&0) {
            return err("rra_hidden", "hidden sizes must be positive");
        }
        Ok(())
    }
}

/// Linear ramp from `epsilon_initial` at slot 0 to `epsilon_final` at the
/// decay horizon, flat afterwards.
pub fn epsilon_at(slot: u64, cfg: &TrainConfig) -> f64 {
    if cfg.epsilon_decay_slots == 0 || slot >= cfg.epsilon_decay_slots {
        return cfg.epsilon_final;
    }
    let frac = slot as f64 / cfg.epsilon_decay_slots as f64;
    cfg.epsilon_initial + (cfg.epsilon_final - cfg.epsilon_initial) * frac
}
