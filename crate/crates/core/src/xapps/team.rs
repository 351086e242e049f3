use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::actions::{PowerIntention, RraIntention};
use super::features::{power_state_round1, power_state_round2, rra_state, FeatureScale};
use super::power::PowerXapp;
use super::rra::RraXapp;
use crate::env::{Environment, SlotOutcome};
use crate::error::Result;
use crate::phy::{Allocation, SimParams};
use crate::rl::{Experience, TrainConfig};
use crate::rng::{SeedStreams, Stream};

/// Team learning with intention exchange, or the independent baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tdl,
    Idl,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Tdl => "tdl",
            Mode::Idl => "idl",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tdl" => Ok(Mode::Tdl),
            "idl" => Ok(Mode::Idl),
            other => Err(format!("unknown mode `{other}`, expected tdl or idl")),
        }
    }
}

/// Everything the agents saw and chose in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Decisions {
    pub round1_states: Vec<Arc<[f64]>>,
    pub round1_actions: Vec<usize>,
    /// First-round powers. Under IDL these are also the committed powers.
    pub power_intention: PowerIntention,
    pub rra_states: Vec<Arc<[f64]>>,
    pub rra: RraIntention,
    /// Empty under IDL.
    pub round2_states: Vec<Arc<[f64]>>,
    pub round2_actions: Vec<usize>,
    pub committed_power: PowerIntention,
}

/// Transitions completed this slot, one list per replay memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotExperiences {
    pub power_round1: Vec<Experience>,
    pub power_round2: Vec<Experience>,
    /// Indexed by BS.
    pub rra: Vec<Experience>,
}

impl SlotExperiences {
    pub fn all(&self) -> impl Iterator<Item = &Experience> {
        self.power_round1
            .iter()
            .chain(&self.power_round2)
            .chain(&self.rra)
    }
}

/// One line of the per-slot trace log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    pub mode: Mode,
    /// Digest of all state vectors built this slot.
    pub state_hash: String,
    pub intended_levels: Vec<Vec<usize>>,
    pub users: Vec<Vec<usize>>,
    pub power_levels: Vec<Vec<usize>>,
    pub reward: f64,
}

#[derive(Debug)]
pub struct SlotStep {
    pub alloc: Allocation,
    pub outcome: SlotOutcome,
    /// Normalized team reward shared by every agent.
    pub reward: f64,
    pub experiences: SlotExperiences,
    pub decisions: Decisions,
    pub trace: TraceRecord,
}

#[derive(Debug, Clone)]
struct Pending {
    reward: f64,
    round1: Vec<(Arc<[f64]>, usize)>,
    round2: Vec<(Arc<[f64]>, usize)>,
    rra: Vec<(Arc<[f64]>, Vec<usize>)>,
}

/// Losses of one training round, `None` for agents still warming up.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub power_round1: Option<f64>,
    pub power_round2: Option<f64>,
    pub rra: Vec<Option<f64>>,
}

/// Both xAPPs plus the bookkeeping that turns consecutive slots into
/// replay transitions.
#[derive(Debug, Clone)]
pub struct Team {
    mode: Mode,
    pub power: PowerXapp,
    pub rra: RraXapp,
    scale: FeatureScale,
    reward_scale: f64,
    pending: Option<Pending>,
}

impl Team {
    /// Builds fresh agents. Weight initialization draws from fixed
    /// sub-streams, so TDL and IDL runs on one seed start from identical nets.
    pub fn new(
        params: &SimParams,
        served: &[Vec<usize>],
        buffer_capacity: u64,
        cfg: &TrainConfig,
        mode: Mode,
        streams: &SeedStreams,
    ) -> Result<Self> {
        cfg.validate()?;
        let power = PowerXapp::new(
            params,
            cfg,
            &mut streams.rng(Stream::WeightInit, 0),
            &mut streams.rng(Stream::WeightInit, 1),
        )?;
        let rra = RraXapp::new(params, served, cfg, |n| {
            streams.rng(Stream::WeightInit, 100 + n as u64)
        })?;
        let scale = FeatureScale::new(params, buffer_capacity);
        Ok(Team {
            mode,
            power,
            rra,
            reward_scale: scale.reward_scale(params),
            scale,
            pending: None,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn scale(&self) -> &FeatureScale {
        &self.scale
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    /// Runs one slot in this team's mode.
    pub fn slot<R: Rng>(
        &mut self,
        env: &mut Environment,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<SlotStep> {
        match self.mode {
            Mode::Tdl => self.tdl_slot(env, epsilon, rng),
            Mode::Idl => self.idl_slot(env, epsilon, rng),
        }
    }

    /// Intention exchange: first-round powers, then user selection given
    /// those powers, then committed powers given the selection.
    pub fn tdl_slot<R: Rng>(
        &mut self,
        env: &mut Environment,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<SlotStep> {
        let snap = env.snapshot();
        let params = snap.params;
        let round1_states: Vec<Arc<[f64]>> = (0..params.n_rbg)
            .map(|m| power_state_round1(&snap, &self.scale, m).into())
            .collect();
        let (power_intention, round1_actions) =
            self.power.select_round1(&round1_states, epsilon, rng)?;

        let rra_states: Vec<Arc<[f64]>> = (0..params.n_bs)
            .map(|n| rra_state(&snap, &self.scale, &power_intention.as_watts, n).into())
            .collect();
        let (rra, rra_heads) = self.select_users(&rra_states, epsilon, rng, params)?;

        let round2_states: Vec<Arc<[f64]>> = (0..params.n_rbg)
            .map(|m| power_state_round2(&snap, &self.scale, &rra, m).into())
            .collect();
        let (committed_power, round2_actions) =
            self.power.select_round2(&round2_states, epsilon, rng)?;

        // The allocation commits exactly the selection the second round saw.
        let alloc = Allocation::new(rra.chosen_user.clone(), committed_power.as_watts.clone())?;
        let decisions = Decisions {
            round1_states,
            round1_actions,
            power_intention,
            rra_states,
            rra,
            round2_states,
            round2_actions,
            committed_power,
        };
        self.commit(env, alloc, decisions, rra_heads)
    }

    /// No communication: both xAPPs act on environment observations only,
    /// and the resource allocator sees the current powers in place of an
    /// intention.
    pub fn idl_slot<R: Rng>(
        &mut self,
        env: &mut Environment,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<SlotStep> {
        let snap = env.snapshot();
        let params = snap.params;
        let round1_states: Vec<Arc<[f64]>> = (0..params.n_rbg)
            .map(|m| power_state_round1(&snap, &self.scale, m).into())
            .collect();
        let (power_intention, round1_actions) =
            self.power.select_round1(&round1_states, epsilon, rng)?;
        let rra_states: Vec<Arc<[f64]>> = (0..params.n_bs)
            .map(|n| rra_state(&snap, &self.scale, snap.alloc.powers(), n).into())
            .collect();
        let (rra, rra_heads) = self.select_users(&rra_states, epsilon, rng, params)?;
        let alloc = Allocation::new(rra.chosen_user.clone(), power_intention.as_watts.clone())?;
        let decisions = Decisions {
            round1_states,
            round1_actions,
            committed_power: power_intention.clone(),
            power_intention,
            rra_states,
            rra,
            round2_states: Vec::new(),
            round2_actions: Vec::new(),
        };
        self.commit(env, alloc, decisions, rra_heads)
    }

    fn select_users<R: Rng>(
        &self,
        states: &[Arc<[f64]>],
        epsilon: f64,
        rng: &mut R,
        params: &SimParams,
    ) -> Result<(RraIntention, Vec<Vec<usize>>)> {
        let mut chosen_user = Array2::zeros((params.n_bs, params.n_rbg));
        let mut heads = Vec::with_capacity(params.n_bs);
        for (n, s) in states.iter().enumerate() {
            let (users, h) = self.rra.select(n, s, epsilon, rng)?;
            for (m, k) in users.into_iter().enumerate() {
                chosen_user[[n, m]] = k;
            }
            heads.push(h);
        }
        Ok((RraIntention { chosen_user }, heads))
    }

    fn commit(
        &mut self,
        env: &mut Environment,
        alloc: Allocation,
        decisions: Decisions,
        rra_heads: Vec<Vec<usize>>,
    ) -> Result<SlotStep> {
        let slot = env.slot();
        let outcome = env.step(&alloc)?;
        let reward = outcome.total_throughput / self.reward_scale;

        let experiences = match self.pending.take() {
            Some(p) => close(p, &decisions),
            None => SlotExperiences::default(),
        };
        let pair = |s: &[Arc<[f64]>], a: &[usize]| -> Vec<(Arc<[f64]>, usize)> {
            s.iter().cloned().zip(a.iter().copied()).collect()
        };
        self.pending = Some(Pending {
            reward,
            round1: pair(&decisions.round1_states, &decisions.round1_actions),
            round2: pair(&decisions.round2_states, &decisions.round2_actions),
            rra: decisions
                .rra_states
                .iter()
                .cloned()
                .zip(rra_heads)
                .collect(),
        });

        let trace = TraceRecord {
            slot,
            mode: self.mode,
            state_hash: state_digest(&decisions),
            intended_levels: rows(&decisions.power_intention.level_index),
            users: rows(alloc.users()),
            power_levels: rows(&decisions.committed_power.level_index),
            reward,
        };
        Ok(SlotStep {
            alloc,
            outcome,
            reward,
            experiences,
            decisions,
            trace,
        })
    }

    /// Stores the completed transitions in each agent's replay memory.
    pub fn record(&mut self, experiences: SlotExperiences) {
        for e in experiences.power_round1 {
            self.power.round1.remember(e);
        }
        for e in experiences.power_round2 {
            self.power.round2.remember(e);
        }
        for (n, e) in experiences.rra.into_iter().enumerate() {
            self.rra.agents[n].remember(e);
        }
    }

    /// One training step for every agent active in this mode.
    pub fn train<R: Rng>(&mut self, rng: &mut R) -> Result<TrainReport> {
        let power_round1 = self.power.round1.train_step(rng)?;
        let power_round2 = match self.mode {
            Mode::Tdl => self.power.round2.train_step(rng)?,
            Mode::Idl => None,
        };
        let rra = self
            .rra
            .agents
            .iter_mut()
            .map(|a| a.train_step(rng))
            .collect::<Result<_>>()?;
        Ok(TrainReport {
            power_round1,
            power_round2,
            rra,
        })
    }
}

fn close(p: Pending, next: &Decisions) -> SlotExperiences {
    let single = |prev: Vec<(Arc<[f64]>, usize)>, next: &[Arc<[f64]>]| -> Vec<Experience> {
        prev.into_iter()
            .zip(next)
            .map(|((s, a), s2)| Experience::new(s, a, p.reward, s2.clone()))
            .collect()
    };
    SlotExperiences {
        power_round1: single(p.round1, &next.round1_states),
        power_round2: single(p.round2, &next.round2_states),
        rra: p
            .rra
            .into_iter()
            .zip(&next.rra_states)
            .map(|((s, a), s2)| Experience::with_heads(s, a, p.reward, s2.clone()))
            .collect(),
    }
}

fn rows(m: &Array2<usize>) -> Vec<Vec<usize>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn state_digest(d: &Decisions) -> String {
    let mut h = Sha256::new();
    for s in d
        .round1_states
        .iter()
        .chain(&d.rra_states)
        .chain(&d.round2_states)
    {
        for v in s.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}
