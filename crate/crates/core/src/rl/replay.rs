use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

/// One transition. Multi-head networks carry one chosen action per head.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Arc<[f64]>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub next_state: Arc<[f64]>,
}

impl Experience {
    pub fn new(state: Arc<[f64]>, action: usize, reward: f64, next_state: Arc<[f64]>) -> Self {
        Experience {
            state,
            actions: vec![action],
            reward,
            next_state,
        }
    }

    pub fn with_heads(
        state: Arc<[f64]>,
        actions: Vec<usize>,
        reward: f64,
        next_state: Arc<[f64]>,
    ) -> Self {
        Experience {
            state,
            actions,
            reward,
            next_state,
        }
    }
}

/// Bounded FIFO of experiences; the oldest is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buffer: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, e: Experience) {
        if self.capacity == 0 {
            return;
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(e);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buffer.iter()
    }

    /// Uniform sample without replacement of `min(batch_size, len)` items.
    pub fn sample<R: Rng>(&self, rng: &mut R, batch_size: usize) -> Vec<&Experience> {
        let amount = batch_size.min(self.buffer.len());
        index::sample(rng, self.buffer.len(), amount)
            .into_iter()
            .map(|i| &self.buffer[i])
            .collect()
    }

    pub fn push_and_sample<R: Rng>(
        &mut self,
        e: Experience,
        rng: &mut R,
        batch_size: usize,
    ) -> Vec<&Experience> {
        self.push(e);
        self.sample(rng, batch_size)
    }
}
