//! Link-level math: unit conversion, path loss, SINR, Shannon capacity and
//! buffer-limited transmission rate.
//!
//! Everything here works in linear units (watts, linear gains). dBm only
//! appears in [`SimParams`] and is converted at the boundary.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Static radio and layout parameters shared by the whole simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub n_bs: usize,
    pub n_users: usize,
    pub n_rbg: usize,
    /// Total carrier bandwidth in Hz, split evenly across RBGs.
    pub bandwidth_total: f64,
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
    pub n_power_levels: usize,
    /// Additive noise power per link, dBm.
    pub noise_dbm: f64,
    /// Slot length in seconds.
    pub slot_duration: f64,
    pub inter_site_distance: f64,
    /// Log-normal shadowing standard deviation in dB. Zero disables shadowing (z = 1).
    pub shadowing_std_db: f64,
    /// Per-slot Rayleigh block fading on every link.
    pub rayleigh_fading: bool,
    /// Distances below this are clamped before evaluating path loss.
    pub min_distance: f64,
}

impl SimParams {
    /// Full-scale network: 4 BSs at 1 km spacing, 30 users, 20 MHz in 12 RBGs.
    pub fn table1() -> Self {
        SimParams {
            n_bs: 4,
            n_users: 30,
            n_rbg: 12,
            bandwidth_total: 20e6,
            p_min_dbm: 1.0,
            p_max_dbm: 38.0,
            n_power_levels: 4,
            noise_dbm: -114.0,
            slot_duration: 0.1,
            inter_site_distance: 1000.0,
            shadowing_std_db: 0.0,
            rayleigh_fading: false,
            min_distance: 10.0,
        }
    }

    /// Reduced network used for quick experiments: 2 BSs, 10 users, 6 RBGs.
    pub fn desk() -> Self {
        SimParams {
            n_bs: 2,
            n_users: 10,
            n_rbg: 6,
            ..Self::table1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(SimError::config(format!("sim.{key}"), msg))
            }
        }
        check(self.n_bs >= 1, "n_bs", "need at least one base station")?;
        check(
            self.n_users >= self.n_bs,
            "n_users",
            "every base station needs at least one user",
        )?;
        check(self.n_rbg >= 1, "n_rbg", "need at least one RBG")?;
        check(
            self.bandwidth_total.is_finite() && self.bandwidth_total > 0.0,
            "bandwidth_total",
            "must be positive",
        )?;
        check(self.p_min_dbm.is_finite(), "p_min_dbm", "must be finite")?;
        check(self.p_max_dbm.is_finite(), "p_max_dbm", "must be finite")?;
        check(
            self.p_min_dbm < self.p_max_dbm,
            "p_min_dbm",
            &format!(
                "p_min_dbm ({}) must be below p_max_dbm ({})",
                self.p_min_dbm, self.p_max_dbm
            ),
        )?;
        check(
            self.n_power_levels >= 2,
            "n_power_levels",
            "need at least 2 levels",
        )?;
        check(self.noise_dbm.is_finite(), "noise_dbm", "must be finite")?;
        check(
            self.slot_duration.is_finite() && self.slot_duration > 0.0,
            "slot_duration",
            "must be positive",
        )?;
        check(
            self.inter_site_distance.is_finite() && self.inter_site_distance > 0.0,
            "inter_site_distance",
            "must be positive",
        )?;
        check(
            self.shadowing_std_db.is_finite() && self.shadowing_std_db >= 0.0,
            "shadowing_std_db",
            "must be non-negative",
        )?;
        check(
            self.min_distance.is_finite() && self.min_distance > 0.0,
            "min_distance",
            "must be positive",
        )?;
        Ok(())
    }

    /// Per-RBG bandwidth B_m.
    pub fn rbg_bandwidth(&self) -> f64 {
        self.bandwidth_total / self.n_rbg as f64
    }

    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn p_min_watts(&self) -> f64 {
        dbm_to_watts(self.p_min_dbm)
    }

    pub fn p_max_watts(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Path loss in dB for a distance in meters: 120.9 + 37.6 log10(d_km) + 10 log10(z).
pub fn path_loss_db(distance: f64, shadow: f64) -> Result<f64> {
    if !distance.is_finite() || distance <= 0.0 {
        return Err(SimError::Domain(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    if !shadow.is_finite() || shadow <= 0.0 {
        return Err(SimError::Domain(format!(
            "shadowing factor must be positive, got {shadow}"
        )));
    }
    Ok(120.9 + 37.6 * (distance / 1000.0).log10() + 10.0 * shadow.log10())
}

/// Linear power gain 10^(-beta/10).
pub fn path_gain(distance: f64, shadow: f64) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(distance, shadow)? / 10.0))
}

/// Linear power gain g[n, k] from every BS to every user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    g: Array2<f64>,
}

impl ChannelGains {
    pub fn new(g: Array2<f64>) -> Result<Self> {
        if let Some(bad) = g.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(SimError::contract(format!(
                "channel gains must be finite and positive, found {bad}"
            )));
        }
        Ok(ChannelGains { g })
    }

    pub fn n_bs(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.g.ncols()
    }

    #[inline]
    pub fn get(&self, bs: usize, user: usize) -> f64 {
        self.g[[bs, user]]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.g
    }
}

/// Who holds each RBG, and at what power.
///
/// Each (BS, RBG) pair carries exactly one scheduled user, so the indicator
/// tensor alpha[n, m, k] always sums to one over k.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    user: Array2<usize>,
    power: Array2<f64>,
}

impl Allocation {
    pub fn new(user: Array2<usize>, power: Array2<f64>) -> Result<Self> {
        if user.dim() != power.dim() {
            return Err(SimError::contract(format!(
                "user matrix {:?} and power matrix {:?} differ in shape",
                user.dim(),
                power.dim()
            )));
        }
        if let Some(bad) = power.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(SimError::contract(format!("invalid power {bad}")));
        }
        Ok(Allocation { user, power })
    }

    /// Builds an allocation from a binary indicator tensor [n_bs, n_rbg, n_users].
    pub fn from_alpha(alpha: &Array3<u8>, power: Array2<f64>) -> Result<Self> {
        let (n_bs, n_rbg, n_users) = alpha.dim();
        let mut user = Array2::zeros((n_bs, n_rbg));
        for n in 0..n_bs {
            for m in 0..n_rbg {
                let held: Vec<usize> = (0..n_users).filter(|&k| alpha[[n, m, k]] != 0).collect();
                if held.len() != 1 {
                    return Err(SimError::contract(format!(
                        "RBG {m} of BS {n} is assigned to {} users, expected exactly one",
                        held.len()
                    )));
                }
                if alpha[[n, m, held[0]]] != 1 {
                    return Err(SimError::contract("alpha entries must be 0 or 1"));
                }
                user[[n, m]] = held[0];
            }
        }
        Self::new(user, power)
    }

    pub fn n_bs(&self) -> usize {
        self.user.nrows()
    }

    pub fn n_rbg(&self) -> usize {
        self.user.ncols()
    }

    #[inline]
    pub fn user(&self, bs: usize, rbg: usize) -> usize {
        self.user[[bs, rbg]]
    }

    #[inline]
    pub fn power(&self, bs: usize, rbg: usize) -> f64 {
        self.power[[bs, rbg]]
    }

    #[inline]
    pub fn alpha(&self, bs: usize, rbg: usize, user: usize) -> bool {
        self.user[[bs, rbg]] == user
    }

    pub fn users(&self) -> &Array2<usize> {
        &self.user
    }

    pub fn powers(&self) -> &Array2<f64> {
        &self.power
    }

    pub fn to_alpha(&self, n_users: usize) -> Array3<u8> {
        let mut alpha = Array3::zeros((self.n_bs(), self.n_rbg(), n_users));
        for ((n, m), &k) in self.user.indexed_iter() {
            alpha[[n, m, k]] = 1;
        }
        alpha
    }

    /// Checks the association and power-bound constraints of the allocation problem.
    pub fn check(&self, association: &[usize], p_min: f64, p_max: f64) -> Result<()> {
        let tol = 1e-9 * p_max.abs().max(1e-30);
        for ((n, m), &k) in self.user.indexed_iter() {
            match association.get(k) {
                Some(&home) if home == n => {}
                Some(&home) => {
                    return Err(SimError::contract(format!(
                        "RBG {m} of BS {n} scheduled to user {k}, which is associated to BS {home}"
                    )))
                }
                None => {
                    return Err(SimError::contract(format!(
                        "RBG {m} of BS {n} scheduled to unknown user {k}"
                    )))
                }
            }
            let p = self.power[[n, m]];
            if p < p_min - tol || p > p_max + tol {
                return Err(SimError::contract(format!(
                    "power {p} W on BS {n} RBG {m} outside [{p_min}, {p_max}]"
                )));
            }
        }
        Ok(())
    }
}

/// Linear SINR per (BS, RBG, user); zero wherever the user is not scheduled.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTensor {
    pub eta: Array3<f64>,
}

impl SinrTensor {
    /// Sum of SINR over users on (bs, rbg), the argument of the capacity formula.
    pub fn rbg_sum(&self, bs: usize, rbg: usize) -> f64 {
        self.eta.slice(ndarray::s![bs, rbg, ..]).sum()
    }
}

/// SINR of every scheduled link, with co-channel interference from all other BSs.
///
/// Allocation and gains must agree on the number of BSs; users are indexed
/// by the gain matrix columns.
pub fn compute_sinr(alloc: &Allocation, gains: &ChannelGains, noise: f64) -> SinrTensor {
    let (n_bs, n_rbg) = (alloc.n_bs(), alloc.n_rbg());
    let mut eta = Array3::zeros((n_bs, n_rbg, gains.n_users()));
    for m in 0..n_rbg {
        for n in 0..n_bs {
            let k = alloc.user(n, m);
            let interference: f64 = (0..n_bs)
                .filter(|&other| other != n)
                .map(|other| gains.get(other, k) * alloc.power(other, m))
                .sum();
            eta[[n, m, k]] = gains.get(n, k) * alloc.power(n, m) / (interference + noise);
        }
    }
    SinrTensor { eta }
}

/// Shannon capacity of one RBG in bits/s.
pub fn rbg_capacity(sinr_sum: f64, bandwidth_rbg: f64) -> f64 {
    bandwidth_rbg * (1.0 + sinr_sum).log2()
}

/// Achieved rate: the capacity, unless the queued bits drain within the slot,
/// in which case the queue length per slot. Equality takes the buffer branch.
pub fn transmission_rate(capacity: f64, queued_bits: f64, slot: f64) -> f64 {
    if capacity * slot < queued_bits {
        capacity
    } else {
        queued_bits / slot
    }
}
