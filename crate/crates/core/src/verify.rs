//! Brute-force reference implementations and the randomized suites that
//! compare the production code against them.
//!
//! The oracles work on the dense 0/1 scheduling tensor `alpha[n][m][k]` and
//! plain nested loops, sharing no code with the optimized paths.

use std::sync::Arc;

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::env::{Snapshot, UserBuffer};
use crate::error::Result;
use crate::phy::{
    compute_sinr, rbg_capacity, transmission_rate, Allocation, ChannelGains, SimParams,
};
use crate::rl::{td_loss_and_gradients, Experience, HeadLayout, QNetwork};
use crate::rng::{SeedStreams, SimRng, Stream};
use crate::xapps::features::{power_state_round1, power_state_round2, rra_state, FeatureScale};
use crate::xapps::RraIntention;

/// SINR of every (n, m, k) straight from the scheduling tensor.
pub fn oracle_sinr(
    alpha: &Array3<u8>,
    power: &Array2<f64>,
    g: &Array2<f64>,
    noise: f64,
) -> Array3<f64> {
    let (n_bs, n_rbg, n_users) = alpha.dim();
    let mut eta = Array3::zeros((n_bs, n_rbg, n_users));
    for n in 0..n_bs {
        for m in 0..n_rbg {
            for k in 0..n_users {
                if alpha[[n, m, k]] == 0 {
                    continue;
                }
                let mut interference = 0.0;
                for n2 in 0..n_bs {
                    if n2 == n {
                        continue;
                    }
                    for k2 in 0..n_users {
                        interference += f64::from(alpha[[n2, m, k2]]) * g[[n2, k]] * power[[n2, m]];
                    }
                }
                eta[[n, m, k]] = g[[n, k]] * power[[n, m]] / (interference + noise);
            }
        }
    }
    eta
}

pub fn oracle_capacity(eta: &Array3<f64>, n: usize, m: usize, bandwidth: f64) -> f64 {
    let total: f64 = (0..eta.dim().2).map(|k| eta[[n, m, k]]).sum();
    bandwidth * (1.0 + total).ln() / std::f64::consts::LN_2
}

pub fn oracle_rate(capacity: f64, queued: f64, slot: f64) -> f64 {
    if queued <= capacity * slot {
        queued / slot
    } else {
        capacity
    }
}

/// Normalized CSI of (n, m) under `alpha`, one entry per other BS.
pub fn oracle_gamma(alpha: &Array3<u8>, g: &Array2<f64>, n: usize, m: usize) -> Vec<f64> {
    let (n_bs, _, n_users) = alpha.dim();
    let own: f64 = (0..n_users)
        .map(|k| f64::from(alpha[[n, m, k]]) * g[[n, k]])
        .sum();
    (0..n_bs)
        .filter(|&n2| n2 != n)
        .map(|n2| {
            let other: f64 = (0..n_users)
                .map(|k| f64::from(alpha[[n2, m, k]]) * g[[n2, k]])
                .sum();
            (1.0 + other / own).log2()
        })
        .collect()
}

fn oracle_queue(alpha: &Array3<u8>, queues: &[f64], n: usize, m: usize) -> f64 {
    (0..queues.len())
        .map(|k| f64::from(alpha[[n, m, k]]) * queues[k])
        .sum()
}

/// Everything a decision-time state depends on, in raw form.
#[derive(Debug, Clone)]
pub struct StateWorld {
    pub params: SimParams,
    pub gains: Array2<f64>,
    pub alpha: Array3<u8>,
    pub power: Array2<f64>,
    pub rates: Array2<f64>,
    pub queues: Vec<u64>,
    pub served: Vec<Vec<usize>>,
    pub buffer_capacity: u64,
}

impl StateWorld {
    pub fn scale(&self) -> FeatureScale {
        FeatureScale::new(&self.params, self.buffer_capacity)
    }
}

pub fn oracle_power_state_round1(w: &StateWorld, m: usize) -> Vec<f64> {
    let sc = w.scale();
    let q: Vec<f64> = w.queues.iter().map(|&x| x as f64).collect();
    let mut s = Vec::new();
    for n in 0..w.params.n_bs {
        s.extend(oracle_gamma(&w.alpha, &w.gains, n, m));
        s.push(w.rates[[n, m]] / sc.rate);
        s.push(w.power[[n, m]] / sc.power);
        s.push(oracle_queue(&w.alpha, &q, n, m) / sc.buffer);
    }
    s
}

pub fn oracle_rra_state(w: &StateWorld, next_power: &Array2<f64>, n: usize) -> Vec<f64> {
    let sc = w.scale();
    let q: Vec<f64> = w.queues.iter().map(|&x| x as f64).collect();
    let slots = 2 * w.params.n_users.div_ceil(w.params.n_bs);
    let mut s = Vec::new();
    for m in 0..w.params.n_rbg {
        for d in 0..slots {
            let a = w.served[n]
                .get(d)
                .map_or(0.0, |&k| f64::from(w.alpha[[n, m, k]]));
            for v in oracle_gamma(&w.alpha, &w.gains, n, m) {
                s.push(a * v);
            }
            s.push(a * w.rates[[n, m]] / sc.rate);
            s.push(a * w.power[[n, m]] / sc.power);
            s.push(a * oracle_queue(&w.alpha, &q, n, m) / sc.buffer);
        }
    }
    for m in 0..w.params.n_rbg {
        s.push(next_power[[n, m]] / sc.power);
    }
    s
}

/// Second-round power state with the follow location taken from the
/// intended scheduling tensor `next`.
pub fn oracle_power_state_round2(w: &StateWorld, next: &Array3<u8>, m: usize) -> Vec<f64> {
    let sc = w.scale();
    let q: Vec<f64> = w.queues.iter().map(|&x| x as f64).collect();
    let (n_bs, n_rbg, n_users) = w.alpha.dim();
    let mut s = Vec::new();
    for n in 0..n_bs {
        let k = (0..n_users)
            .find(|&k| w.alpha[[n, m, k]] == 1)
            .expect("one user per RBG");
        let targets: Vec<usize> = (0..n_rbg).filter(|&m2| next[[n, m2, k]] == 1).collect();
        let follow = if targets.contains(&m) {
            Some(m)
        } else {
            targets.first().copied()
        };
        let own = follow.unwrap_or(m);
        s.extend(oracle_gamma(&w.alpha, &w.gains, n, own));
        s.push(w.rates[[n, own]] / sc.rate);
        s.push(w.power[[n, own]] / sc.power);
        match follow {
            Some(m2) => {
                s.extend(oracle_gamma(next, &w.gains, n, m2));
                s.push(w.rates[[n, m2]] / sc.rate);
                s.push(w.power[[n, m2]] / sc.power);
                s.push(oracle_queue(next, &q, n, m2) / sc.buffer);
                s.push(0.0);
            }
            None => {
                s.extend(std::iter::repeat_n(0.0, n_bs - 1 + 3));
                s.push(1.0);
            }
        }
    }
    s
}

/// Largest relative error between two equal-length vectors, with an
/// absolute floor below which differences are treated as zero.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d / x.abs().max(y.abs()).max(floor)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OracleReport {
    pub instances: usize,
    pub phy_max_rel: f64,
    pub state_max_rel: f64,
}

impl OracleReport {
    pub fn passes(&self, phy_tol: f64, state_tol: f64) -> bool {
        self.phy_max_rel <= phy_tol && self.state_max_rel <= state_tol
    }
}

fn random_alpha<R: Rng>(
    rng: &mut R,
    served: &[Vec<usize>],
    n_rbg: usize,
    n_users: usize,
) -> Array3<u8> {
    let mut alpha = Array3::zeros((served.len(), n_rbg, n_users));
    for (n, users) in served.iter().enumerate() {
        for m in 0..n_rbg {
            alpha[[n, m, users[rng.random_range(0..users.len())]]] = 1;
        }
    }
    alpha
}

/// A random small network state: 1 to 3 BSs, up to 7 users, up to 4 RBGs,
/// gains spread over six decades and queues anywhere in the buffer.
pub fn random_world<R: Rng>(rng: &mut R) -> StateWorld {
    let n_bs = rng.random_range(1..=3);
    let n_users = rng.random_range(n_bs..=7);
    let n_rbg = rng.random_range(1..=4);
    let params = SimParams {
        n_bs,
        n_users,
        n_rbg,
        ..SimParams::desk()
    };
    // Every BS gets at least one user; the rest are spread at random.
    let mut served = vec![Vec::new(); n_bs];
    for k in 0..n_users {
        let n = if k < n_bs {
            k
        } else {
            rng.random_range(0..n_bs)
        };
        served[n].push(k);
    }
    let gains = Array2::from_shape_fn((n_bs, n_users), |_| {
        10f64.powf(rng.random_range(-14.0..-8.0))
    });
    let (lo, hi) = (params.p_min_watts(), params.p_max_watts());
    let power = Array2::from_shape_fn((n_bs, n_rbg), |_| rng.random_range(lo..=hi));
    let rates = Array2::from_shape_fn((n_bs, n_rbg), |_| rng.random_range(0.0..2e7));
    let buffer_capacity = 2_400_000;
    let queues = (0..n_users)
        .map(|_| rng.random_range(0..=buffer_capacity))
        .collect();
    let alpha = random_alpha(rng, &served, n_rbg, n_users);
    StateWorld {
        params,
        gains,
        alpha,
        power,
        rates,
        queues,
        served,
        buffer_capacity,
    }
}

fn buffers_from(queues: &[u64], capacity: u64) -> Vec<UserBuffer> {
    queues
        .iter()
        .map(|&q| UserBuffer {
            queued: q,
            total_arrived: q,
            capacity,
            ..UserBuffer::default()
        })
        .collect()
}

/// Compares the production PHY and state builders with the oracles on
/// `instances` random worlds.
pub fn run_oracle_suite(master_seed: u64, instances: usize) -> Result<OracleReport> {
    let mut rng = SeedStreams::new(master_seed).rng(Stream::Placement, 0xfeed);
    let mut report = OracleReport {
        instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let w = random_world(&mut rng);
        let p = &w.params;
        let alloc = Allocation::from_alpha(&w.alpha, w.power.clone())?;
        let gains = ChannelGains::new(w.gains.clone())?;
        let noise = p.noise_watts();

        let sinr = compute_sinr(&alloc, &gains, noise);
        let eta = oracle_sinr(&w.alpha, &w.power, &w.gains, noise);
        let mut phy = max_rel_err(
            sinr.eta.as_slice().expect("standard layout"),
            eta.as_slice().expect("standard layout"),
            1e-300,
        );
        for n in 0..p.n_bs {
            for m in 0..p.n_rbg {
                let c = rbg_capacity(sinr.rbg_sum(n, m), p.rbg_bandwidth());
                let c_ref = oracle_capacity(&eta, n, m, p.rbg_bandwidth());
                let q = w.queues[alloc.user(n, m)] as f64;
                let r = transmission_rate(c, q, p.slot_duration);
                let r_ref = oracle_rate(c_ref, q, p.slot_duration);
                phy = phy.max(max_rel_err(&[c, r], &[c_ref, r_ref], 1e-300));
            }
        }
        report.phy_max_rel = report.phy_max_rel.max(phy);

        let buffers = buffers_from(&w.queues, w.buffer_capacity);
        let snap = Snapshot {
            params: p,
            gains: &gains,
            alloc: &alloc,
            rates: &w.rates,
            buffers: &buffers,
            served: &w.served,
            buffer_capacity: w.buffer_capacity,
        };
        let scale = w.scale();
        let next_power = Array2::from_shape_fn((p.n_bs, p.n_rbg), |_| {
            rng.random_range(p.p_min_watts()..=p.p_max_watts())
        });
        let next_alpha = random_alpha(&mut rng, &w.served, p.n_rbg, p.n_users);
        let intention = RraIntention {
            chosen_user: Allocation::from_alpha(&next_alpha, w.power.clone())?
                .users()
                .clone(),
        };
        let mut st: f64 = 0.0;
        for m in 0..p.n_rbg {
            st = st.max(max_rel_err(
                &power_state_round1(&snap, &scale, m),
                &oracle_power_state_round1(&w, m),
                1e-12,
            ));
            st = st.max(max_rel_err(
                &power_state_round2(&snap, &scale, &intention, m),
                &oracle_power_state_round2(&w, &next_alpha, m),
                1e-12,
            ));
        }
        for n in 0..p.n_bs {
            st = st.max(max_rel_err(
                &rra_state(&snap, &scale, &next_power, n),
                &oracle_rra_state(&w, &next_power, n),
                1e-12,
            ));
        }
        report.state_max_rel = report.state_max_rel.max(st);
    }
    Ok(report)
}

/// Forward pass with explicit loops over every weight.
pub fn oracle_forward(net: &QNetwork, x: &[f64]) -> Vec<f64> {
    let n_layers = net.layers().len();
    let mut h = x.to_vec();
    for (i, l) in net.layers().iter().enumerate() {
        let (fan_in, fan_out) = l.weight.dim();
        let mut z = vec![0.0; fan_out];
        for (j, zj) in z.iter_mut().enumerate() {
            let mut acc = l.bias[j];
            for (a, &hi) in h.iter().enumerate().take(fan_in) {
                acc += hi * l.weight[[a, j]];
            }
            *zj = if i + 1 < n_layers { acc.max(0.0) } else { acc };
        }
        h = z;
    }
    h
}

/// TD objective `1/(2B) sum (Q(s,a) - y)^2` through [`oracle_forward`].
pub fn oracle_objective(
    net: &QNetwork,
    batch: &[Experience],
    targets: &Array2<f64>,
    layout: HeadLayout,
) -> f64 {
    let mut total = 0.0;
    for (b, e) in batch.iter().enumerate() {
        let q = oracle_forward(net, &e.state);
        for (h, &a) in e.actions.iter().enumerate() {
            let d = q[h * layout.width + a] - targets[[b, h]];
            total += 0.5 * d * d;
        }
    }
    total / batch.len() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheckReport {
    pub networks: usize,
    pub parameters_checked: usize,
    pub max_rel_err: f64,
}

/// Central finite differences with step `h` against the analytic TD
/// gradient on `networks` random small networks. Components where both
/// gradients are below 1e-8 in magnitude are skipped.
pub fn run_gradcheck_suite(master_seed: u64, networks: usize, h: f64) -> Result<GradCheckReport> {
    let mut rng: SimRng = SeedStreams::new(master_seed).rng(Stream::WeightInit, 0xfeed);
    let mut report = GradCheckReport {
        networks,
        ..Default::default()
    };
    for _ in 0..networks {
        let heads = rng.random_range(1..=3);
        let width = rng.random_range(2..=4);
        let layout = HeadLayout {
            heads,
            width,
            valid: rng.random_range(1..=width),
        };
        let input = rng.random_range(2..=6);
        let sizes = [
            input,
            rng.random_range(3..=7),
            rng.random_range(3..=7),
            layout.outputs(),
        ];
        let mut net = QNetwork::new(&sizes, &mut rng)?;
        let params: Vec<f64> = net
            .params_flat()
            .into_iter()
            .map(|p| p + rng.random_range(-0.3..0.3))
            .collect();
        net.set_params_flat(&params)?;

        let batch_size = rng.random_range(1..=6);
        let batch: Vec<Experience> = (0..batch_size)
            .map(|_| {
                let s: Arc<[f64]> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
                let actions = (0..heads)
                    .map(|_| rng.random_range(0..layout.valid))
                    .collect();
                Experience::with_heads(s.clone(), actions, 0.0, s)
            })
            .collect();
        let targets = Array2::from_shape_fn((batch_size, heads), |_| rng.random_range(-1.0..1.0));
        let refs: Vec<&Experience> = batch.iter().collect();
        let (_, grads) = td_loss_and_gradients(&net, &refs, targets.view(), layout)?;
        let analytic = grads.flatten();

        let mut probe = net.clone();
        let mut theta = params.clone();
        for i in 0..theta.len() {
            let orig = theta[i];
            theta[i] = orig + h;
            probe.set_params_flat(&theta)?;
            let up = oracle_objective(&probe, &batch, &targets, layout);
            theta[i] = orig - h;
            probe.set_params_flat(&theta)?;
            let down = oracle_objective(&probe, &batch, &targets, layout);
            theta[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = numeric.abs().max(analytic[i].abs());
            if scale < 1e-8 {
                continue;
            }
            report.parameters_checked += 1;
            report.max_rel_err = report
                .max_rel_err
                .max((numeric - analytic[i]).abs() / scale);
        }
    }
    Ok(report)
}
