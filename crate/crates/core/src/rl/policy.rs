use rand::Rng;

use super::network::QNetwork;
use crate::error::{Result, SimError};

/// One-step bootstrap target `reward + discount * max(next_q)`. The task is
/// continuing, so there is no terminal branch.
pub fn td_target(reward: f64, next_q: &[f64], discount: f64) -> f64 {
    let best = next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    reward + discount * best
}

/// Largest value among the allowed entries; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], valid: Option<&[bool]>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in q.iter().enumerate() {
        if valid.is_some_and(|mask| !mask[i]) {
            continue;
        }
        if best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    best
}

/// Epsilon-greedy choice over `q`, restricted to `valid` when given.
pub fn epsilon_greedy<R: Rng>(
    q: &[f64],
    epsilon: f64,
    rng: &mut R,
    valid: Option<&[bool]>,
) -> Result<usize> {
    if let Some(mask) = valid {
        if mask.len() != q.len() {
            return Err(SimError::contract(
                "action mask length differs from Q-vector",
            ));
        }
    }
    let greedy =
        masked_argmax(q, valid).ok_or_else(|| SimError::contract("no valid action to select"))?;
    if rng.random::<f64>() < epsilon {
        return Ok(match valid {
            None => rng.random_range(0..q.len()),
            Some(mask) => {
                let count = mask.iter().filter(|&&v| v).count();
                let pick = rng.random_range(0..count);
                mask.iter()
                    .enumerate()
                    .filter(|(_, &v)| v)
                    .nth(pick)
                    .map(|(i, _)| i)
                    .expect("pick < count")
            }
        });
    }
    Ok(greedy)
}

pub fn select_action<R: Rng>(
    net: &QNetwork,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
    valid: Option<&[bool]>,
) -> Result<usize> {
    let q = net.forward(state)?;
    epsilon_greedy(&q, epsilon, rng, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedStreams, Stream};

    #[test]
    fn td_target_examples() {
        assert_eq!(td_target(1.5, &[10.0, 20.0], 0.0), 1.5);
        assert!((td_target(1.0, &[2.0, 5.0, 3.0], 0.2) - 2.0).abs() < 1e-15);
        assert!((td_target(0.0, &[4.0; 3], 0.2) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn greedy_and_masked_greedy() {
        let mut rng = SeedStreams::new(0).rng(Stream::Exploration, 0);
        let q = [1.0, 9.0, 3.0];
        assert_eq!(epsilon_greedy(&q, 0.0, &mut rng, None).unwrap(), 1);
        let mask = [true, false, true];
        assert_eq!(epsilon_greedy(&q, 0.0, &mut rng, Some(&mask)).unwrap(), 2);
        assert_eq!(masked_argmax(&[2.0, 2.0, 1.0], None), Some(0));
        assert!(epsilon_greedy(&q, 0.0, &mut rng, Some(&[false; 3])).is_err());
    }

    #[test]
    fn full_exploration_is_uniform_over_valid() {
        let mut rng = SeedStreams::new(1).rng(Stream::Exploration, 0);
        let q = [0.0, 5.0, 1.0, 2.0, 3.0];
        let mask = [true, true, false, true, true];
        let draws = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[epsilon_greedy(&q, 1.0, &mut rng, Some(&mask)).unwrap()] += 1;
        }
        assert_eq!(counts[2], 0);
        for (i, &c) in counts.iter().enumerate() {
            if mask[i] {
                let f = c as f64 / draws as f64;
                assert!((f - 0.25).abs() <= 0.02, "action {i} frequency {f}");
            }
        }
    }
}
