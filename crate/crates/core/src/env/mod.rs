//! Mutable world state: user positions, buffers, channel realization, and the
//! per-slot serve / arrive / drop cycle.

mod mobility;
mod topology;
mod traffic;

pub use mobility::{reflect_walk, step_mobility, MobilityParams};
pub use topology::{grid_sites, HomeRegion, NetworkTopology, Point};
pub use traffic::{generate_arrivals, packet_drop_rate, TrafficParams, UserBuffer};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};
use crate::phy::{
    compute_sinr, path_gain, rbg_capacity, transmission_rate, Allocation, ChannelGains, SimParams,
};
use crate::rng::{SeedStreams, SimRng, Stream};

/// What happened on the air interface during one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    /// Achieved rate R[n, m], bits/s.
    pub rates: Array2<f64>,
    pub served_bits: Vec<u64>,
    pub dropped_bits: Vec<u64>,
    pub arrived_bits: Vec<u64>,
    /// Sum of `rates`, bits/s.
    pub total_throughput: f64,
}

/// Gain matrix from geometry with static per-link shadowing factors.
pub fn refresh_channel(
    topology: &NetworkTopology,
    params: &SimParams,
    shadow: &Array2<f64>,
) -> Result<ChannelGains> {
    let mut g = Array2::zeros((topology.n_bs(), topology.n_users()));
    for ((n, k), v) in g.indexed_iter_mut() {
        let d = topology.distance(n, k).max(params.min_distance);
        *v = path_gain(d, shadow[[n, k]])?;
    }
    ChannelGains::new(g)
}

/// Serves the scheduled users, then credits arrivals, then truncates each
/// buffer to capacity.
///
/// RBGs of a BS are served in index order against the scheduled user's
/// remaining queue, so a user holding several RBGs is never debited more than
/// it has queued.
pub fn apply_allocation(
    alloc: &Allocation,
    gains: &ChannelGains,
    buffers: &mut [UserBuffer],
    params: &SimParams,
    association: &[usize],
    arrivals: &[u64],
) -> Result<SlotOutcome> {
    if alloc.n_bs() != gains.n_bs() || buffers.len() != gains.n_users() {
        return Err(SimError::contract(
            "allocation, gains and buffers disagree in size",
        ));
    }
    if arrivals.len() != buffers.len() {
        return Err(SimError::contract("one arrival count per user expected"));
    }
    for ((n, m), &k) in alloc.users().indexed_iter() {
        if association.get(k) != Some(&n) {
            return Err(SimError::contract(format!(
                "RBG {m} of BS {n} scheduled to user {k}, which BS {n} does not serve"
            )));
        }
    }

    let slot = params.slot_duration;
    let bandwidth = params.rbg_bandwidth();
    let sinr = compute_sinr(alloc, gains, params.noise_watts());
    let n_users = buffers.len();
    let mut rates = Array2::zeros((alloc.n_bs(), alloc.n_rbg()));
    let mut served_bits = vec![0u64; n_users];
    for n in 0..alloc.n_bs() {
        for m in 0..alloc.n_rbg() {
            let k = alloc.user(n, m);
            let capacity = rbg_capacity(sinr.rbg_sum(n, m), bandwidth);
            let queued = buffers[k].queued;
            let rate = transmission_rate(capacity, queued as f64, slot);
            let bits = if capacity * slot < queued as f64 {
                ((capacity * slot).floor() as u64).min(queued)
            } else {
                queued
            };
            served_bits[k] += buffers[k].serve(bits);
            rates[[n, m]] = rate;
        }
    }
    let mut dropped_bits = vec![0u64; n_users];
    for (k, buf) in buffers.iter_mut().enumerate() {
        buf.arrive(arrivals[k]);
        dropped_bits[k] = buf.truncate();
    }
    let total_throughput = rates.sum();
    Ok(SlotOutcome {
        rates,
        served_bits,
        dropped_bits,
        arrived_bits: arrivals.to_vec(),
        total_throughput,
    })
}

/// Read-only view handed to the agents at decision time.
///
/// `alloc` and `rates` describe the previous slot; `gains` and `buffers` are
/// current.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub params: &'a SimParams,
    pub gains: &'a ChannelGains,
    pub alloc: &'a Allocation,
    pub rates: &'a Array2<f64>,
    pub buffers: &'a [UserBuffer],
    pub served: &'a [Vec<usize>],
    pub buffer_capacity: u64,
}

impl Snapshot<'_> {
    /// Queued bits of user `k`.
    pub fn queued(&self, k: usize) -> f64 {
        self.buffers[k].queued as f64
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    params: SimParams,
    mobility: MobilityParams,
    traffic: TrafficParams,
    topology: NetworkTopology,
    shadow: Array2<f64>,
    gains: ChannelGains,
    buffers: Vec<UserBuffer>,
    prev_alloc: Allocation,
    prev_rates: Array2<f64>,
    slot: u64,
    traffic_rng: SimRng,
    mobility_rng: SimRng,
    fading_rng: SimRng,
    trace: Sha256,
}

impl Environment {
    pub fn new(
        params: SimParams,
        mobility: MobilityParams,
        traffic: TrafficParams,
        streams: &SeedStreams,
    ) -> Result<Self> {
        params.validate()?;
        mobility.validate()?;
        traffic.validate()?;
        let topology = NetworkTopology::place(
            &params,
            mobility.region_radius,
            &mut streams.rng(Stream::Placement, 0),
        )?;
        let shadow = if params.shadowing_std_db > 0.0 {
            let normal = Normal::new(0.0, params.shadowing_std_db)
                .map_err(|e| SimError::config("sim.shadowing_std_db", e.to_string()))?;
            let mut rng = streams.rng(Stream::Shadowing, 0);
            Array2::from_shape_simple_fn((params.n_bs, params.n_users), || {
                10f64.powf(normal.sample(&mut rng) / 10.0)
            })
        } else {
            Array2::ones((params.n_bs, params.n_users))
        };
        let mut users = Array2::zeros((params.n_bs, params.n_rbg));
        for ((n, m), u) in users.indexed_iter_mut() {
            let served = topology.served_users(n);
            *u = served[m % served.len()];
        }
        let prev_alloc = Allocation::new(
            users,
            Array2::from_elem((params.n_bs, params.n_rbg), params.p_max_watts()),
        )?;
        let mut env = Environment {
            gains: refresh_channel(&topology, &params, &shadow)?,
            buffers: vec![UserBuffer::new(traffic.buffer_capacity); params.n_users],
            prev_rates: Array2::zeros((params.n_bs, params.n_rbg)),
            prev_alloc,
            slot: 0,
            traffic_rng: streams.rng(Stream::Traffic, 0),
            mobility_rng: streams.rng(Stream::Mobility, 0),
            fading_rng: streams.rng(Stream::Fading, 0),
            trace: Sha256::new(),
            params,
            mobility,
            traffic,
            topology,
            shadow,
        };
        env.apply_fading();
        env.hash_positions();
        Ok(env)
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn traffic(&self) -> &TrafficParams {
        &self.traffic
    }

    pub fn mobility(&self) -> &MobilityParams {
        &self.mobility
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn gains(&self) -> &ChannelGains {
        &self.gains
    }

    pub fn buffers(&self) -> &[UserBuffer] {
        &self.buffers
    }

    pub fn previous_allocation(&self) -> &Allocation {
        &self.prev_alloc
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn packet_drop_rate(&self) -> f64 {
        packet_drop_rate(&self.buffers)
    }

    pub fn snapshot(&self) -> Snapshot<'_> {
        Snapshot {
            params: &self.params,
            gains: &self.gains,
            alloc: &self.prev_alloc,
            rates: &self.prev_rates,
            buffers: &self.buffers,
            served: self.topology.all_served(),
            buffer_capacity: self.traffic.buffer_capacity,
        }
    }

    /// Commits `alloc` for the current slot, then moves users and redraws the
    /// channel for the next one.
    pub fn step(&mut self, alloc: &Allocation) -> Result<SlotOutcome> {
        alloc.check(
            &self.topology.association,
            self.params.p_min_watts(),
            self.params.p_max_watts(),
        )?;
        let arrivals = generate_arrivals(
            &mut self.traffic_rng,
            self.traffic.mean_rate,
            self.params.slot_duration,
            self.traffic.packet_bits,
            self.params.n_users,
        );
        for a in &arrivals {
            self.trace.update(a.to_le_bytes());
        }
        let outcome = apply_allocation(
            alloc,
            &self.gains,
            &mut self.buffers,
            &self.params,
            &self.topology.association,
            &arrivals,
        )?;
        self.prev_alloc = alloc.clone();
        self.prev_rates = outcome.rates.clone();

        step_mobility(
            &mut self.mobility_rng,
            &mut self.topology,
            &self.mobility,
            self.params.slot_duration,
        );
        self.hash_positions();
        self.gains = refresh_channel(&self.topology, &self.params, &self.shadow)?;
        self.apply_fading();
        self.slot += 1;
        Ok(outcome)
    }

    /// Hex digest of every arrival and position drawn so far. Equal digests
    /// mean two runs saw the same traffic and mobility.
    pub fn trace_hash(&self) -> String {
        hex::encode(self.trace.clone().finalize())
    }

    fn hash_positions(&mut self) {
        for p in &self.topology.user_positions {
            self.trace.update(p.x.to_le_bytes());
            self.trace.update(p.y.to_le_bytes());
        }
    }

    fn apply_fading(&mut self) {
        if !self.params.rayleigh_fading {
            return;
        }
        let mut g = self.gains.matrix().clone();
        for v in g.iter_mut() {
            let h: f64 = Exp1.sample(&mut self.fading_rng);
            // Keep gains strictly positive.
            *v *= h.max(1e-12);
        }
        self.gains = ChannelGains::new(g).expect("faded gains stay positive");
    }

    /// Draws a uniform random valid allocation; handy for tests and baselines.
    pub fn random_allocation<R: Rng>(&self, rng: &mut R, ladder: &[f64]) -> Allocation {
        let p = &self.params;
        let mut users = Array2::zeros((p.n_bs, p.n_rbg));
        let mut power = Array2::zeros((p.n_bs, p.n_rbg));
        for n in 0..p.n_bs {
            let served = self.topology.served_users(n);
            for m in 0..p.n_rbg {
                users[[n, m]] = served[rng.random_range(0..served.len())];
                power[[n, m]] = ladder[rng.random_range(0..ladder.len())];
            }
        }
        Allocation::new(users, power).expect("shapes match")
    }
}
