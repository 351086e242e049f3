//! Deep Q-learning building blocks shared by both xAPPs: the network,
//! replay memory, epsilon-greedy policy and the semi-gradient TD update.

mod agent;
mod config;
mod network;
mod policy;
mod replay;
mod td;

pub use agent::DqnAgent;
pub use config::{epsilon_at, OptimizerKind, TrainConfig};
pub use network::{Dense, Gradients, QNetwork};
pub use policy::{epsilon_greedy, masked_argmax, select_action, td_target};
pub use replay::{Experience, ReplayMemory};
pub use td::{
    sgd_step, stack_rows, td_loss_and_gradients, td_objective, td_targets, train_batch, HeadLayout,
};
