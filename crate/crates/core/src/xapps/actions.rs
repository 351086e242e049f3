use ndarray::Array2;

use crate::error::{Result, SimError};
use crate::phy::{dbm_to_watts, SimParams};

/// `n_power_levels` equally spaced dBm levels from `p_min` to `p_max`, in watts.
pub fn power_ladder(params: &SimParams) -> Result<Vec<f64>> {
    let b = params.n_power_levels;
    if b < 2 {
        return Err(SimError::config(
            "sim.n_power_levels",
            "need at least 2 power levels",
        ));
    }
    let step = (params.p_max_dbm - params.p_min_dbm) / (b - 1) as f64;
    Ok((0..b)
        .map(|i| {
            let dbm = if i == b - 1 {
                params.p_max_dbm
            } else {
                params.p_min_dbm + step * i as f64
            };
            dbm_to_watts(dbm)
        })
        .collect())
}

/// Mixed-radix codec between a joint action index and one power level per BS.
/// BS 0 is the least significant digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointPowerCodec {
    n_bs: usize,
    levels: usize,
    size: usize,
}

impl JointPowerCodec {
    pub fn new(n_bs: usize, levels: usize) -> Result<Self> {
        let size = u32::try_from(n_bs)
            .ok()
            .and_then(|e| levels.checked_pow(e))
            .filter(|&s| s <= 1 << 20)
            .ok_or_else(|| {
                SimError::config(
                    "sim.n_power_levels",
                    format!("joint power action space {levels}^{n_bs} is too large"),
                )
            })?;
        Ok(JointPowerCodec { n_bs, levels, size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn encode(&self, levels: &[usize]) -> usize {
        debug_assert_eq!(levels.len(), self.n_bs);
        levels.iter().rev().fold(0, |acc, &l| acc * self.levels + l)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        debug_assert!(index < self.size);
        (0..self.n_bs)
            .map(|_| {
                let d = index % self.levels;
                index /= self.levels;
                d
            })
            .collect()
    }
}

/// Power level chosen for every (BS, RBG).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIntention {
    pub level_index: Array2<usize>,
    pub as_watts: Array2<f64>,
}

impl PowerIntention {
    /// Decodes one joint action per RBG.
    pub fn from_joint(codec: &JointPowerCodec, ladder: &[f64], joint: &[usize]) -> Self {
        let n_rbg = joint.len();
        let mut level_index = Array2::zeros((codec.n_bs, n_rbg));
        for (m, &a) in joint.iter().enumerate() {
            for (n, l) in codec.decode(a).into_iter().enumerate() {
                level_index[[n, m]] = l;
            }
        }
        let as_watts = level_index.mapv(|l| ladder[l]);
        PowerIntention {
            level_index,
            as_watts,
        }
    }
}

/// User chosen on every (BS, RBG) by the resource-allocation agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RraIntention {
    pub chosen_user: Array2<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::watts_to_dbm;
    use proptest::prelude::*;

    #[test]
    fn two_levels_are_the_endpoints() {
        let params = SimParams {
            n_power_levels: 2,
            ..SimParams::table1()
        };
        let l = power_ladder(&params).unwrap();
        assert_eq!(l, vec![dbm_to_watts(1.0), dbm_to_watts(38.0)]);
    }

    #[test]
    fn five_levels_from_one_to_thirty_eight_dbm() {
        let params = SimParams {
            n_power_levels: 5,
            ..SimParams::table1()
        };
        let dbm: Vec<f64> = power_ladder(&params)
            .unwrap()
            .into_iter()
            .map(watts_to_dbm)
            .collect();
        for (got, want) in dbm.iter().zip([1.0, 10.25, 19.5, 28.75, 38.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn ladder_stays_in_bounds() {
        let params = SimParams::table1();
        for p in power_ladder(&params).unwrap() {
            assert!(p >= params.p_min_watts() * (1.0 - 1e-12));
            assert!(p <= params.p_max_watts() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn single_level_is_a_config_error() {
        let params = SimParams {
            n_power_levels: 1,
            ..SimParams::table1()
        };
        assert!(matches!(
            power_ladder(&params),
            Err(SimError::Config { .. })
        ));
    }

    #[test]
    fn joint_index_three_is_max_max() {
        let codec = JointPowerCodec::new(2, 2).unwrap();
        assert_eq!(codec.size(), 4);
        assert_eq!(codec.decode(3), vec![1, 1]);
        let ladder = [0.1, 6.3];
        let intent = PowerIntention::from_joint(&codec, &ladder, &[3]);
        assert_eq!(intent.as_watts[[0, 0]], 6.3);
        assert_eq!(intent.as_watts[[1, 0]], 6.3);
    }

    proptest! {
        #[test]
        fn codec_is_a_bijection(n_bs in 1usize..=4, levels in 2usize..=6) {
            let codec = JointPowerCodec::new(n_bs, levels).unwrap();
            prop_assert_eq!(codec.size(), levels.pow(n_bs as u32));
            let mut seen = vec![false; codec.size()];
            for (idx, hit) in seen.iter_mut().enumerate() {
                let digits = codec.decode(idx);
                prop_assert!(digits.iter().all(|&d| d < levels));
                prop_assert_eq!(codec.encode(&digits), idx);
                prop_assert!(!*hit);
                *hit = true;
            }
        }
    }
}
