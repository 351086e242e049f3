use ndarray::{Array1, Array2};
use rand::Rng;

use super::config::{OptimizerKind, TrainConfig};
use super::network::{Gradients, QNetwork};
use super::policy::epsilon_greedy;
use super::replay::{Experience, ReplayMemory};
use super::td::{sgd_step, td_loss_and_gradients, td_targets, HeadLayout};
use crate::error::{Result, SimError};

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    fn new(net: &QNetwork) -> Self {
        let zeros: Vec<_> = net
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, net: &mut QNetwork, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (i, l) in net.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[i];
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            ndarray::Zip::from(&mut l.weight)
                .and(mw)
                .and(vw)
                .and(&g.weight)
                .for_each(|p, m, v, &g| adam_update(p, m, v, g, lr, c1, c2));
            ndarray::Zip::from(&mut l.bias)
                .and(mb)
                .and(vb)
                .and(&g.bias)
                .for_each(|p, m, v, &g| adam_update(p, m, v, g, lr, c1, c2));
        }
    }
}

#[inline]
fn adam_update(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c1: f64, c2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
}

/// A Q-network with its replay memory, optimizer state and action heads.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    net: QNetwork,
    target: Option<QNetwork>,
    memory: ReplayMemory,
    layout: HeadLayout,
    mask: Vec<bool>,
    adam: Option<AdamState>,
    cfg: TrainConfig,
    train_steps: u64,
}

impl DqnAgent {
    pub fn new<R: Rng>(
        input: usize,
        hidden: [usize; 2],
        layout: HeadLayout,
        cfg: &TrainConfig,
        init_rng: &mut R,
    ) -> Result<Self> {
        if layout.valid == 0 || layout.valid > layout.width {
            return Err(SimError::contract(
                "head must have between 1 and width valid actions",
            ));
        }
        let net = QNetwork::new(&[input, hidden[0], hidden[1], layout.outputs()], init_rng)?;
        let adam = (cfg.optimizer == OptimizerKind::Adam).then(|| AdamState::new(&net));
        let target = cfg.target_sync.map(|_| net.clone());
        let mask = (0..layout.width).map(|i| i < layout.valid).collect();
        Ok(DqnAgent {
            net,
            target,
            memory: ReplayMemory::new(cfg.replay_capacity),
            layout,
            mask,
            adam,
            cfg: cfg.clone(),
            train_steps: 0,
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn replace_network(&mut self, net: QNetwork) -> Result<()> {
        if net.layer_sizes() != self.net.layer_sizes() {
            return Err(SimError::contract(
                "replacement network has different layer sizes",
            ));
        }
        if self.target.is_some() {
            self.target = Some(net.clone());
        }
        if self.adam.is_some() {
            self.adam = Some(AdamState::new(&net));
        }
        self.net = net;
        Ok(())
    }

    pub fn layout(&self) -> HeadLayout {
        self.layout
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Q-values for each row of `states`.
    pub fn q_batch(&self, states: &Array2<f64>) -> Result<Array2<f64>> {
        if states.ncols() != self.net.input_size() {
            return Err(SimError::contract(format!(
                "state has {} features, network expects {}",
                states.ncols(),
                self.net.input_size()
            )));
        }
        Ok(self.net.forward_batch(states.view()))
    }

    /// Epsilon-greedy action for every head of one Q-row.
    pub fn act<R: Rng>(&self, q: &[f64], epsilon: f64, rng: &mut R) -> Result<Vec<usize>> {
        let mask = (self.layout.valid < self.layout.width).then_some(self.mask.as_slice());
        (0..self.layout.heads)
            .map(|h| {
                let w = self.layout.width;
                epsilon_greedy(&q[h * w..(h + 1) * w], epsilon, rng, mask)
            })
            .collect()
    }

    pub fn remember(&mut self, e: Experience) {
        self.memory.push(e);
    }

    /// Samples a batch and takes one optimizer step once the warmup is met.
    /// Returns the pre-step mean squared TD error, or `None` while warming up.
    pub fn train_step<R: Rng>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.memory.len() < self.cfg.warmup.max(1) {
            return Ok(None);
        }
        let batch = self.memory.sample(rng, self.cfg.batch_size);
        let bootstrap = self.target.as_ref().unwrap_or(&self.net);
        let targets = td_targets(bootstrap, &batch, self.layout, self.cfg.discount)?;
        let (loss, grads) = td_loss_and_gradients(&self.net, &batch, targets.view(), self.layout)?;
        match &mut self.adam {
            Some(adam) => adam.step(&mut self.net, &grads, self.cfg.learning_rate),
            None => sgd_step(&mut self.net, &grads, self.cfg.learning_rate),
        }
        if !self.net.is_finite() {
            return Err(SimError::Training(format!(
                "parameters became non-finite after step {}",
                self.train_steps
            )));
        }
        self.train_steps += 1;
        if let (Some(every), Some(target)) = (self.cfg.target_sync, self.target.as_mut()) {
            if self.train_steps.is_multiple_of(every) {
                *target = self.net.clone();
            }
        }
        Ok(Some(loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedStreams, Stream};
    use std::sync::Arc;

    fn agent(cfg: &TrainConfig, layout: HeadLayout) -> DqnAgent {
        let mut rng = SeedStreams::new(0).rng(Stream::WeightInit, 0);
        DqnAgent::new(4, [8, 8], layout, cfg, &mut rng).unwrap()
    }

    #[test]
    fn masked_heads_never_pick_padding() {
        let cfg = TrainConfig::default();
        let layout = HeadLayout {
            heads: 3,
            width: 5,
            valid: 2,
        };
        let a = agent(&cfg, layout);
        let mut rng = SeedStreams::new(1).rng(Stream::Exploration, 0);
        let q: Vec<f64> = (0..15).map(|i| i as f64).collect();
        for _ in 0..2000 {
            let acts = a.act(&q, 1.0, &mut rng).unwrap();
            assert_eq!(acts.len(), 3);
            assert!(acts.iter().all(|&x| x < 2));
        }
        assert_eq!(a.act(&q, 0.0, &mut rng).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn warmup_gates_training_and_adam_learns() {
        for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let cfg = TrainConfig {
                warmup: 10,
                batch_size: 10,
                optimizer,
                target_sync: Some(5),
                learning_rate: 1e-2,
                ..Default::default()
            };
            let mut a = agent(&cfg, HeadLayout::single(3));
            let mut rng = SeedStreams::new(2).rng(Stream::Replay, 0);
            let s: Arc<[f64]> = Arc::from(vec![0.5, -0.5, 1.0, 0.0]);
            for i in 0..9 {
                a.remember(Experience::new(s.clone(), i % 3, 1.0, s.clone()));
                assert_eq!(a.train_step(&mut rng).unwrap(), None);
            }
            a.remember(Experience::new(s.clone(), 0, 1.0, s.clone()));
            let first = a.train_step(&mut rng).unwrap().unwrap();
            let mut last = first;
            for _ in 0..300 {
                last = a.train_step(&mut rng).unwrap().unwrap();
            }
            assert!(last < first, "{optimizer:?}: {first} -> {last}");
            assert_eq!(a.train_steps(), 301);
        }
    }
}
