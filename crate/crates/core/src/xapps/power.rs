use std::sync::Arc;

use rand::Rng;

use super::actions::{power_ladder, JointPowerCodec, PowerIntention};
use super::features::{power_state_round1_dim, power_state_round2_dim};
use crate::error::Result;
use crate::phy::SimParams;
use crate::rl::{stack_rows, DqnAgent, HeadLayout, TrainConfig};

/// Power-allocation xAPP: a first-round network for the intention shared
/// with the resource allocator and a second-round network for the committed
/// powers. Both are shared across RBGs and pick one joint level vector per RBG.
#[derive(Debug, Clone)]
pub struct PowerXapp {
    pub round1: DqnAgent,
    pub round2: DqnAgent,
    codec: JointPowerCodec,
    ladder: Vec<f64>,
}

impl PowerXapp {
    pub fn new<R: Rng>(
        params: &SimParams,
        cfg: &TrainConfig,
        init_round1: &mut R,
        init_round2: &mut R,
    ) -> Result<Self> {
        let ladder = power_ladder(params)?;
        let codec = JointPowerCodec::new(params.n_bs, ladder.len())?;
        let layout = HeadLayout::single(codec.size());
        let round1 = DqnAgent::new(
            power_state_round1_dim(params.n_bs),
            cfg.power_hidden,
            layout,
            cfg,
            init_round1,
        )?;
        let round2 = DqnAgent::new(
            power_state_round2_dim(params.n_bs),
            cfg.power_hidden,
            layout,
            cfg,
            init_round2,
        )?;
        Ok(PowerXapp {
            round1,
            round2,
            codec,
            ladder,
        })
    }

    pub fn codec(&self) -> &JointPowerCodec {
        &self.codec
    }

    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    /// First-round intention from one state per RBG.
    pub fn select_round1<R: Rng>(
        &self,
        states: &[Arc<[f64]>],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<(PowerIntention, Vec<usize>)> {
        self.select(&self.round1, states, epsilon, rng)
    }

    /// Committed powers from one second-round state per RBG.
    pub fn select_round2<R: Rng>(
        &self,
        states: &[Arc<[f64]>],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<(PowerIntention, Vec<usize>)> {
        self.select(&self.round2, states, epsilon, rng)
    }

    fn select<R: Rng>(
        &self,
        agent: &DqnAgent,
        states: &[Arc<[f64]>],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<(PowerIntention, Vec<usize>)> {
        let x = stack_rows(states.iter().map(|s| &**s), agent.network().input_size())?;
        let q = agent.q_batch(&x)?;
        let mut joint = Vec::with_capacity(states.len());
        for row in q.rows() {
            joint.push(agent.act(row.as_slice().expect("standard layout"), epsilon, rng)?[0]);
        }
        Ok((
            PowerIntention::from_joint(&self.codec, &self.ladder, &joint),
            joint,
        ))
    }
}
