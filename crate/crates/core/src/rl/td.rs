use ndarray::{Array2, ArrayView2};

use super::network::{Gradients, QNetwork};
use super::policy::td_target;
use super::replay::Experience;
use crate::error::{Result, SimError};

/// How a network's output vector splits into independent action heads.
///
/// Each head has `width` outputs of which the first `valid` are selectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadLayout {
    pub heads: usize,
    pub width: usize,
    pub valid: usize,
}

impl HeadLayout {
    pub fn single(width: usize) -> Self {
        HeadLayout {
            heads: 1,
            width,
            valid: width,
        }
    }

    pub fn outputs(&self) -> usize {
        self.heads * self.width
    }

    pub fn head<'a>(&self, q: &'a [f64], h: usize) -> &'a [f64] {
        &q[h * self.width..h * self.width + self.valid]
    }
}

/// Stacks rows into a matrix, checking every row has `width` features.
pub fn stack_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        if r.len() != width {
            return Err(SimError::contract(format!(
                "state has {} features, network expects {width}",
                r.len()
            )));
        }
        data.extend_from_slice(r);
        n += 1;
    }
    Ok(Array2::from_shape_vec((n, width), data).expect("row count times width"))
}

/// Bootstrap targets for every (experience, head), shape `[batch, heads]`.
pub fn td_targets(
    bootstrap: &QNetwork,
    batch: &[&Experience],
    layout: HeadLayout,
    discount: f64,
) -> Result<Array2<f64>> {
    let next = stack_rows(batch.iter().map(|e| &*e.next_state), bootstrap.input_size())?;
    let next_q = bootstrap.forward_batch(next.view());
    let mut targets = Array2::zeros((batch.len(), layout.heads));
    for (b, e) in batch.iter().enumerate() {
        let row = next_q.row(b);
        let row = row.as_slice().expect("standard layout");
        for h in 0..layout.heads {
            targets[[b, h]] = td_target(e.reward, layout.head(row, h), discount);
        }
    }
    Ok(targets)
}

/// Semi-gradient of `1/(2B) * sum_b sum_h (Q(s_b, a_bh) - y_bh)^2` with the
/// targets held fixed. Returns the mean squared TD error and the gradient.
pub fn td_loss_and_gradients(
    net: &QNetwork,
    batch: &[&Experience],
    targets: ArrayView2<f64>,
    layout: HeadLayout,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(SimError::contract("empty training batch"));
    }
    if layout.outputs() != net.output_size() {
        return Err(SimError::contract(
            "head layout does not match network output",
        ));
    }
    let states = stack_rows(batch.iter().map(|e| &*e.state), net.input_size())?;
    let acts = net.forward_trace(states.view());
    let q = &acts[acts.len() - 1];
    let mut d_out = Array2::zeros(q.dim());
    let scale = 1.0 / batch.len() as f64;
    let mut sq = 0.0;
    for (b, e) in batch.iter().enumerate() {
        if e.actions.len() != layout.heads {
            return Err(SimError::contract("experience head count mismatch"));
        }
        for (h, &a) in e.actions.iter().enumerate() {
            if a >= layout.valid {
                return Err(SimError::contract(format!("action {a} outside head range")));
            }
            let col = h * layout.width + a;
            let delta = q[[b, col]] - targets[[b, h]];
            sq += delta * delta;
            d_out[[b, col]] += delta * scale;
        }
    }
    let mse = sq / (batch.len() * layout.heads) as f64;
    if !mse.is_finite() {
        return Err(SimError::Training(format!("non-finite TD loss {mse}")));
    }
    Ok((mse, net.backward(&acts, d_out)))
}

/// The objective whose gradient [`td_loss_and_gradients`] returns, evaluated
/// directly. Used for finite-difference checks.
pub fn td_objective(
    net: &QNetwork,
    batch: &[&Experience],
    targets: ArrayView2<f64>,
    layout: HeadLayout,
) -> Result<f64> {
    let states = stack_rows(batch.iter().map(|e| &*e.state), net.input_size())?;
    let q = net.forward_batch(states.view());
    let mut total = 0.0;
    for (b, e) in batch.iter().enumerate() {
        for (h, &a) in e.actions.iter().enumerate() {
            let d = q[[b, h * layout.width + a]] - targets[[b, h]];
            total += 0.5 * d * d;
        }
    }
    Ok(total / batch.len() as f64)
}

pub fn sgd_step(net: &mut QNetwork, grads: &Gradients, learning_rate: f64) {
    for (l, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
        l.weight.scaled_add(-learning_rate, &g.weight);
        l.bias.scaled_add(-learning_rate, &g.bias);
    }
}

/// One plain semi-gradient step of `net` toward `r + gamma * max Q(s', .)`,
/// bootstrapping from `net` itself. Returns the pre-step mean squared TD error.
pub fn train_batch(
    net: &mut QNetwork,
    batch: &[&Experience],
    learning_rate: f64,
    discount: f64,
) -> Result<f64> {
    let layout = HeadLayout::single(net.output_size());
    let targets = td_targets(net, batch, layout, discount)?;
    let (loss, grads) = td_loss_and_gradients(net, batch, targets.view(), layout)?;
    sgd_step(net, &grads, learning_rate);
    if !net.is_finite() {
        return Err(SimError::Training("parameters became non-finite".into()));
    }
    Ok(loss)
}
