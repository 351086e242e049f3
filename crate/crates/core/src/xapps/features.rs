//! State vectors for the three decision points.
//!
//! Rates are scaled by a cell-edge reference capacity, powers by `p_max`
//! and queue lengths by the buffer size, so every feature is O(1).

use ndarray::Array2;

use super::actions::RraIntention;
use crate::env::Snapshot;
use crate::phy::{path_gain, rbg_capacity, SimParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScale {
    /// Bits/s.
    pub rate: f64,
    /// Watts.
    pub power: f64,
    /// Bits.
    pub buffer: f64,
}

impl FeatureScale {
    /// Rate reference: interference-free capacity of one RBG at `p_max` for a
    /// user half an inter-site distance away.
    pub fn new(params: &SimParams, buffer_capacity: u64) -> Self {
        let edge = (params.inter_site_distance / 2.0).max(params.min_distance);
        let gain = path_gain(edge, 1.0).expect("positive distance");
        let snr = params.p_max_watts() * gain / params.noise_watts();
        FeatureScale {
            rate: rbg_capacity(snr, params.rbg_bandwidth()),
            power: params.p_max_watts(),
            buffer: (buffer_capacity as f64).max(1.0),
        }
    }

    /// Divisor that brings the system-wide throughput reward to O(1).
    pub fn reward_scale(&self, params: &SimParams) -> f64 {
        self.rate * (params.n_bs * params.n_rbg) as f64
    }
}

/// Log-normalized CSI on (bs, rbg): for every other BS, log2(1 + g_other / g_own)
/// where each gain is from a BS to the user it schedules on that RBG.
pub fn gamma(snap: &Snapshot<'_>, users: &Array2<usize>, bs: usize, rbg: usize) -> Vec<f64> {
    let own = snap.gains.get(bs, users[[bs, rbg]]);
    (0..snap.params.n_bs)
        .filter(|&other| other != bs)
        .map(|other| (1.0 + snap.gains.get(other, users[[other, rbg]]) / own).log2())
        .collect()
}

/// Queued bits of whoever `users` schedules on (bs, rbg).
fn scheduled_queue(snap: &Snapshot<'_>, users: &Array2<usize>, bs: usize, rbg: usize) -> f64 {
    snap.queued(users[[bs, rbg]])
}

pub fn power_state_round1_dim(n_bs: usize) -> usize {
    n_bs * (n_bs + 2)
}

/// First-round power state of one RBG: for each BS its CSI vector, last
/// rate, last power and the scheduled user's queue.
pub fn power_state_round1(snap: &Snapshot<'_>, scale: &FeatureScale, rbg: usize) -> Vec<f64> {
    let users = snap.alloc.users();
    let mut s = Vec::with_capacity(power_state_round1_dim(snap.params.n_bs));
    for n in 0..snap.params.n_bs {
        s.extend(gamma(snap, users, n, rbg));
        s.push(snap.rates[[n, rbg]] / scale.rate);
        s.push(snap.alloc.power(n, rbg) / scale.power);
        s.push(scheduled_queue(snap, users, n, rbg) / scale.buffer);
    }
    s
}

/// Per-head user slots of an RRA network: twice the average cell load.
pub fn rra_user_slots(n_users: usize, n_bs: usize) -> usize {
    2 * n_users.div_ceil(n_bs)
}

pub fn rra_state_dim(params: &SimParams) -> usize {
    let slots = rra_user_slots(params.n_users, params.n_bs);
    params.n_rbg * slots * (params.n_bs + 2) + params.n_rbg
}

/// Resource-allocation state of one BS. For every RBG and every user slot,
/// the CSI, rate, power and queue of that RBG masked by whether the slot's
/// user held it last slot; then the next-slot power of every RBG taken from
/// `next_power` (watts, `[n_bs, n_rbg]`).
pub fn rra_state(
    snap: &Snapshot<'_>,
    scale: &FeatureScale,
    next_power: &Array2<f64>,
    bs: usize,
) -> Vec<f64> {
    let params = snap.params;
    let slots = rra_user_slots(params.n_users, params.n_bs);
    let served = &snap.served[bs];
    let users = snap.alloc.users();
    let block = params.n_bs + 2;
    let mut s = vec![0.0; rra_state_dim(params)];
    for m in 0..params.n_rbg {
        let holder = users[[bs, m]];
        let Some(d) = served.iter().position(|&k| k == holder) else {
            continue;
        };
        if d >= slots {
            continue;
        }
        let at = (m * slots + d) * block;
        let g = gamma(snap, users, bs, m);
        s[at..at + g.len()].copy_from_slice(&g);
        s[at + g.len()] = snap.rates[[bs, m]] / scale.rate;
        s[at + g.len() + 1] = snap.alloc.power(bs, m) / scale.power;
        s[at + g.len() + 2] = snap.queued(holder) / scale.buffer;
    }
    let tail = params.n_rbg * slots * block;
    for m in 0..params.n_rbg {
        s[tail + m] = next_power[[bs, m]] / scale.power;
    }
    s
}

/// Where the user now on (bs, rbg) is served under the intention: the same
/// RBG if it keeps it, otherwise its lowest-index RBG, or `None` if it is not
/// scheduled at all. Associations are fixed, so the BS never changes.
pub fn resolve_follow_location(
    intention: &RraIntention,
    current: &Array2<usize>,
    bs: usize,
    rbg: usize,
) -> Option<(usize, usize)> {
    let k = current[[bs, rbg]];
    if intention.chosen_user[[bs, rbg]] == k {
        return Some((bs, rbg));
    }
    (0..intention.chosen_user.ncols())
        .find(|&m| intention.chosen_user[[bs, m]] == k)
        .map(|m| (bs, m))
}

pub fn power_state_round2_dim(n_bs: usize) -> usize {
    n_bs * (2 * n_bs + 4)
}

/// Second-round power state of one RBG. For each BS, follow its current
/// user to the RBG m' it gets under the resource-allocation intention, then
/// record own-cell CSI, rate and power at m' from the last slot, and the
/// cross features at (n', m') with CSI and queue evaluated for the intended
/// schedule. A trailing flag marks users that lose every RBG; their cross
/// block is zero and the own-cell block falls back to this RBG.
pub fn power_state_round2(
    snap: &Snapshot<'_>,
    scale: &FeatureScale,
    intention: &RraIntention,
    rbg: usize,
) -> Vec<f64> {
    let users = snap.alloc.users();
    let n_bs = snap.params.n_bs;
    let mut s = Vec::with_capacity(power_state_round2_dim(n_bs));
    for n in 0..n_bs {
        let follow = resolve_follow_location(intention, users, n, rbg);
        let own_rbg = follow.map_or(rbg, |(_, m)| m);
        s.extend(gamma(snap, users, n, own_rbg));
        s.push(snap.rates[[n, own_rbg]] / scale.rate);
        s.push(snap.alloc.power(n, own_rbg) / scale.power);
        match follow {
            Some((n2, m2)) => {
                s.extend(gamma(snap, &intention.chosen_user, n2, m2));
                s.push(snap.rates[[n2, m2]] / scale.rate);
                s.push(snap.alloc.power(n2, m2) / scale.power);
                s.push(scheduled_queue(snap, &intention.chosen_user, n2, m2) / scale.buffer);
                s.push(0.0);
            }
            None => {
                s.extend(std::iter::repeat_n(0.0, n_bs + 2));
                s.push(1.0);
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::UserBuffer;
    use crate::phy::{Allocation, ChannelGains};
    use ndarray::array;

    struct World {
        params: SimParams,
        gains: ChannelGains,
        alloc: Allocation,
        rates: Array2<f64>,
        buffers: Vec<UserBuffer>,
        served: Vec<Vec<usize>>,
    }

    impl World {
        fn snap(&self) -> Snapshot<'_> {
            Snapshot {
                params: &self.params,
                gains: &self.gains,
                alloc: &self.alloc,
                rates: &self.rates,
                buffers: &self.buffers,
                served: &self.served,
                buffer_capacity: 1000,
            }
        }
    }

    fn buffers(q: &[u64]) -> Vec<UserBuffer> {
        q.iter()
            .map(|&queued| UserBuffer {
                queued,
                total_arrived: queued,
                capacity: 1000,
                ..Default::default()
            })
            .collect()
    }

    /// 2 BSs, 1 RBG, users 0 (BS 0) and 1 (BS 1).
    fn two_cell(g: Array2<f64>) -> World {
        World {
            params: SimParams {
                n_bs: 2,
                n_users: 2,
                n_rbg: 1,
                ..SimParams::desk()
            },
            gains: ChannelGains::new(g).unwrap(),
            alloc: Allocation::new(array![[0usize], [1]], array![[2.0], [4.0]]).unwrap(),
            rates: array![[3.0e6], [1.0e6]],
            buffers: buffers(&[500, 250]),
            served: vec![vec![0], vec![1]],
        }
    }

    fn unit_scale() -> FeatureScale {
        FeatureScale {
            rate: 1e6,
            power: 4.0,
            buffer: 1000.0,
        }
    }

    #[test]
    fn equal_gains_give_unit_gamma() {
        let w = two_cell(array![[1e-9, 3e-7], [5e-8, 1e-9]]);
        let snap = w.snap();
        assert_eq!(gamma(&snap, w.alloc.users(), 0, 0), vec![1.0]);
    }

    #[test]
    fn vanishing_interferer_gives_zero_gamma() {
        let w = two_cell(array![[1e-3, 1.0], [1.0, 1e-300]]);
        let snap = w.snap();
        assert!(gamma(&snap, w.alloc.users(), 0, 0)[0] < 1e-290);
    }

    #[test]
    fn round1_two_cell_hand_computation() {
        let w = two_cell(array![[4e-9, 7e-10], [3e-10, 1e-9]]);
        let s = power_state_round1(&w.snap(), &unit_scale(), 0);
        let expected = [
            (1.0f64 + 1e-9 / 4e-9).log2(),
            3.0,
            0.5,
            0.5,
            (1.0f64 + 4e-9 / 1e-9).log2(),
            1.0,
            1.0,
            0.25,
        ];
        assert_eq!(s.len(), power_state_round1_dim(2));
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    /// 1 BS, 2 RBGs, 2 users; user 0 held both RBGs last slot.
    fn one_cell() -> World {
        World {
            params: SimParams {
                n_bs: 1,
                n_users: 2,
                n_rbg: 2,
                ..SimParams::desk()
            },
            gains: ChannelGains::new(array![[2e-9, 5e-10]]).unwrap(),
            alloc: Allocation::new(array![[0usize, 0]], array![[1.0, 3.0]]).unwrap(),
            rates: array![[2e6, 4e6]],
            buffers: buffers(&[100, 900]),
            served: vec![vec![0, 1]],
        }
    }

    #[test]
    fn rra_state_one_cell_hand_computation() {
        let w = one_cell();
        let next = array![[2.0, 4.0]];
        let s = rra_state(&w.snap(), &unit_scale(), &next, 0);
        // Four user slots per head, blocks of [R, p, L] (no CSI with one BS).
        assert_eq!(rra_user_slots(2, 1), 4);
        assert_eq!(s.len(), 2 * 4 * 3 + 2);
        let mut expected = vec![0.0; 26];
        expected[0..3].copy_from_slice(&[2.0, 0.25, 0.1]);
        expected[12..15].copy_from_slice(&[4.0, 0.75, 0.1]);
        expected[24] = 0.5;
        expected[25] = 1.0;
        assert_eq!(s, expected);
    }

    #[test]
    fn unscheduled_user_slots_are_masked() {
        let w = one_cell();
        let s = rra_state(&w.snap(), &unit_scale(), w.alloc.powers(), 0);
        // User 1 (slot 1) held no RBG.
        for m in 0..2 {
            assert!(s[(m * 4 + 1) * 3..(m * 4 + 2) * 3]
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn follow_locations() {
        let current = array![[0usize, 1, 2, 3]];
        let keep = RraIntention {
            chosen_user: array![[0usize, 1, 2, 3]],
        };
        assert_eq!(resolve_follow_location(&keep, &current, 0, 0), Some((0, 0)));
        let moved = RraIntention {
            chosen_user: array![[1usize, 1, 2, 0]],
        };
        assert_eq!(
            resolve_follow_location(&moved, &current, 0, 0),
            Some((0, 3))
        );
        assert_eq!(resolve_follow_location(&moved, &current, 0, 3), None);
    }

    #[test]
    fn round2_flags_users_that_lose_their_rbg() {
        let w = one_cell();
        let dropped = RraIntention {
            chosen_user: array![[1usize, 1]],
        };
        let s = power_state_round2(&w.snap(), &unit_scale(), &dropped, 0);
        assert_eq!(s.len(), power_state_round2_dim(1));
        assert_eq!(s, vec![2.0, 0.25, 0.0, 0.0, 0.0, 1.0]);
        let kept = RraIntention {
            chosen_user: array![[1usize, 0]],
        };
        let s = power_state_round2(&w.snap(), &unit_scale(), &kept, 0);
        assert_eq!(s, vec![4.0, 0.75, 4.0, 0.75, 0.1, 0.0]);
    }
}
