use rand::Rng;

use super::features::{rra_state_dim, rra_user_slots};
use crate::error::{Result, SimError};
use crate::phy::SimParams;
use crate::rl::{DqnAgent, HeadLayout, TrainConfig};

/// Radio-resource-allocation xAPP: one network per BS with one output head
/// per RBG. Head slot d stands for the BS's d-th associated user; slots past
/// the association size are masked off.
#[derive(Debug, Clone)]
pub struct RraXapp {
    pub agents: Vec<DqnAgent>,
    served: Vec<Vec<usize>>,
}

impl RraXapp {
    pub fn new<R: Rng>(
        params: &SimParams,
        served: &[Vec<usize>],
        cfg: &TrainConfig,
        mut init_rng: impl FnMut(usize) -> R,
    ) -> Result<Self> {
        let slots = rra_user_slots(params.n_users, params.n_bs);
        let mut agents = Vec::with_capacity(params.n_bs);
        for (n, users) in served.iter().enumerate() {
            if users.is_empty() {
                return Err(SimError::config(
                    "sim.n_users",
                    format!("BS {n} has no associated users to schedule"),
                ));
            }
            if users.len() > slots {
                return Err(SimError::config(
                    "sim.n_users",
                    format!(
                        "BS {n} serves {} users but the scheduler has only {slots} slots",
                        users.len()
                    ),
                ));
            }
            let layout = HeadLayout {
                heads: params.n_rbg,
                width: slots,
                valid: users.len(),
            };
            agents.push(DqnAgent::new(
                rra_state_dim(params),
                cfg.rra_hidden,
                layout,
                cfg,
                &mut init_rng(n),
            )?);
        }
        Ok(RraXapp {
            agents,
            served: served.to_vec(),
        })
    }

    pub fn served(&self, bs: usize) -> &[usize] {
        &self.served[bs]
    }

    /// Picks a user for every RBG of `bs`. Returns the user ids and the
    /// per-head slot indices used for training.
    pub fn select<R: Rng>(
        &self,
        bs: usize,
        state: &[f64],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let agent = &self.agents[bs];
        let q = agent.network().forward(state)?;
        let heads = agent.act(&q, epsilon, rng)?;
        let users = heads.iter().map(|&d| self.served[bs][d]).collect();
        Ok((users, heads))
    }
}
