use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficParams {
    /// Mean offered load per user, bits/s.
    pub mean_rate: f64,
    /// Arrivals come in whole packets of this many bits.
    pub packet_bits: u64,
    /// Per-user buffer size, bits.
    pub buffer_capacity: u64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            mean_rate: 4e6,
            packet_bits: 4000,
            // 4 slots of the heaviest load (6 Mbps at 100 ms).
            buffer_capacity: 2_400_000,
        }
    }
}

impl TrafficParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_rate.is_finite() && self.mean_rate >= 0.0) {
            return Err(SimError::config(
                "traffic.mean_rate",
                "must be non-negative",
            ));
        }
        if self.packet_bits == 0 {
            return Err(SimError::config("traffic.packet_bits", "must be positive"));
        }
        Ok(())
    }
}

/// Per-user transmission queue with a running bit ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UserBuffer {
    pub queued: u64,
    pub total_arrived: u64,
    pub total_dropped: u64,
    pub total_served: u64,
    pub capacity: u64,
}

impl UserBuffer {
    pub fn new(capacity: u64) -> Self {
        UserBuffer {
            capacity,
            ..Default::default()
        }
    }

    /// Removes up to `bits` from the queue, returning what was actually sent.
    pub fn serve(&mut self, bits: u64) -> u64 {
        let sent = bits.min(self.queued);
        self.queued -= sent;
        self.total_served += sent;
        sent
    }

    pub fn arrive(&mut self, bits: u64) {
        self.queued += bits;
        self.total_arrived += bits;
    }

    /// Discards everything above capacity; returns the discarded bits.
    pub fn truncate(&mut self) -> u64 {
        let excess = self.queued.saturating_sub(self.capacity);
        self.queued -= excess;
        self.total_dropped += excess;
        excess
    }

    pub fn is_conserved(&self) -> bool {
        self.total_arrived == self.total_served + self.total_dropped + self.queued
            && self.queued <= self.capacity
    }
}

/// Poisson packet arrivals for `n_users` users over one slot, in bits.
pub fn generate_arrivals<R: Rng>(
    rng: &mut R,
    mean_rate: f64,
    slot: f64,
    packet_bits: u64,
    n_users: usize,
) -> Vec<u64> {
    let lambda = mean_rate * slot / packet_bits as f64;
    if lambda.is_nan() || lambda <= 0.0 {
        return vec![0; n_users];
    }
    let poisson = Poisson::new(lambda).expect("positive finite lambda");
    (0..n_users)
        .map(|_| poisson.sample(rng) as u64 * packet_bits)
        .collect()
}

/// Dropped over arrived bits across all users; zero when nothing arrived.
pub fn packet_drop_rate(buffers: &[UserBuffer]) -> f64 {
    let arrived: u64 = buffers.iter().map(|b| b.total_arrived).sum();
    let dropped: u64 = buffers.iter().map(|b| b.total_dropped).sum();
    if arrived == 0 {
        0.0
    } else {
        dropped as f64 / arrived as f64
    }
}
