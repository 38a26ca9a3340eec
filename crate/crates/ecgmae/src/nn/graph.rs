//! Reverse-mode tape.
//!
//! A [`Graph`] owns every tensor produced during one forward pass plus a tape
//! of backward closures. Ops only record a tape entry when some input
//! requires gradients, so a forward over frozen parameters and plain inputs
//! never allocates gradient state ([`Graph::backward`] then simply has
//! nothing to do upstream of that op).

use std::cell::RefCell;

use crate::error::{Error, Result};

use super::kernels as k;
use super::param::Parameter;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

struct GradStore<T> {
    slots: Vec<RefCell<Option<Tensor<T>>>>,
    tracked: Vec<bool>,
}

impl<T: Scalar> GradStore<T> {
    fn new(tracked: &[bool]) -> Self {
        Self {
            slots: tracked.iter().map(|_| RefCell::new(None)).collect(),
            tracked: tracked.to_vec(),
        }
    }

    fn tracks(&self, v: Var) -> bool {
        self.tracked[v.0]
    }

    /// Clone of the accumulated output gradient, if any has arrived.
    fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.slots[v.0].borrow().clone()
    }

    /// Accumulate `delta` into the slot for `v` (no-op for untracked vars).
    fn accumulate(&self, v: Var, delta: Tensor<T>) {
        if !self.tracked[v.0] {
            return;
        }
        let mut slot = self.slots[v.0].borrow_mut();
        match slot.as_mut() {
            Some(g) => g.add_assign(&delta),
            None => *slot = Some(delta),
        }
    }
}

type TapeFn<T> = Box<dyn Fn(&[Tensor<T>], &GradStore<T>)>;

pub struct Graph<T: Scalar> {
    values: Vec<Tensor<T>>,
    requires_grad: Vec<bool>,
    tape: Vec<TapeFn<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            requires_grad: Vec::new(),
            tape: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite values in forward output");
        self.values.push(value);
        self.requires_grad.push(requires_grad);
        Var(self.values.len() - 1)
    }

    /// Leaf that never receives gradients (batch data, constants).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false)
    }

    /// Leaf that accumulates gradients (gradient-check probes).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, true)
    }

    /// Load a parameter; frozen parameters are untracked leaves, so backward
    /// neither allocates nor writes a gradient for them.
    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        self.push(p.value.clone(), !p.frozen)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    /// Gradient computed by the last [`Graph::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    fn record(&mut self, f: TapeFn<T>) {
        self.tape.push(f);
    }

    /// Reverse sweep from a scalar loss. Seeds `d loss/d loss = 1` and replays
    /// the tape backwards; gradients land on every tracked var.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].numel() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got {:?}",
                self.values[loss.0].shape()
            )));
        }
        let store = GradStore::new(&self.requires_grad);
        store.accumulate(loss, Tensor::scalar(T::one()));
        for f in self.tape.iter().rev() {
            f(&self.values, &store);
        }
        self.grads = store.slots.into_iter().map(|s| s.into_inner()).collect();
        Ok(())
    }

    // ----- ops -------------------------------------------------------------

    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var> {
        let (_, c_in, l_in) = self.values[x.0].dims3()?;
        let wsh = self.values[w.0].shape().to_vec();
        if wsh.len() != 3 {
            return Err(Error::ShapeMismatch(format!("conv1d weight {:?}", wsh)));
        }
        let (c_out, cig, ksz) = (wsh[0], wsh[1], wsh[2]);
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 || cig != c_in / groups {
            return Err(Error::ShapeMismatch(format!(
                "conv1d groups: c_in={c_in}, c_out={c_out}, groups={groups}, weight {wsh:?}"
            )));
        }
        if l_in + 2 * padding < ksz {
            return Err(Error::ShapeMismatch(format!(
                "conv1d input length {l_in} (+2*{padding}) shorter than kernel {ksz}"
            )));
        }
        if let Some(b) = bias {
            if self.values[b.0].shape() != [c_out] {
                return Err(Error::ShapeMismatch(format!(
                    "conv1d bias {:?}, expected [{c_out}]",
                    self.values[b.0].shape()
                )));
            }
        }

        let out = k::conv1d_fwd(
            &self.values[x.0],
            &self.values[w.0],
            bias.map(|b| &self.values[b.0]),
            stride,
            padding,
            groups,
        );
        let track = self.requires_grad[x.0]
            || self.requires_grad[w.0]
            || bias.is_some_and(|b| self.requires_grad[b.0]);
        let y = self.push(out, track);
        if track {
            let x_shape = self.values[x.0].shape().to_vec();
            let w_shape = wsh;
            self.record(Box::new(move |vals, store| {
                let Some(gy) = store.grad(y) else { return };
                if store.tracks(x) {
                    store.accumulate(
                        x,
                        k::conv1d_bwd_x(&gy, &vals[w.0], &x_shape, stride, padding, groups),
                    );
                }
                if store.tracks(w) {
                    store.accumulate(
                        w,
                        k::conv1d_bwd_w(&gy, &vals[x.0], &w_shape, stride, padding, groups),
                    );
                }
                if let Some(b) = bias {
                    if store.tracks(b) {
                        store.accumulate(b, k::conv1d_bwd_b(&gy));
                    }
                }
            }));
        }
        Ok(y)
    }

    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let d_in = *self.values[x.0]
            .shape()
            .last()
            .ok_or_else(|| Error::ShapeMismatch("linear on rank-0 input".into()))?;
        let (d_out, wd_in) = self.values[w.0].dims2()?;
        if wd_in != d_in {
            return Err(Error::ShapeMismatch(format!(
                "linear: input dim {d_in} vs weight {:?}",
                self.values[w.0].shape()
            )));
        }
        if let Some(b) = bias {
            if self.values[b.0].shape() != [d_out] {
                return Err(Error::ShapeMismatch(format!(
                    "linear bias {:?}, expected [{d_out}]",
                    self.values[b.0].shape()
                )));
            }
        }
        let out = k::linear_fwd(
            &self.values[x.0],
            &self.values[w.0],
            bias.map(|b| &self.values[b.0]),
        );
        let track = self.requires_grad[x.0]
            || self.requires_grad[w.0]
            || bias.is_some_and(|b| self.requires_grad[b.0]);
        let y = self.push(out, track);
        if track {
            let x_shape = self.values[x.0].shape().to_vec();
            let w_shape = self.values[w.0].shape().to_vec();
            self.record(Box::new(move |vals, store| {
                let Some(gy) = store.grad(y) else { return };
                if store.tracks(x) {
                    store.accumulate(x, k::linear_bwd_x(&gy, &vals[w.0], &x_shape));
                }
                if store.tracks(w) {
                    store.accumulate(w, k::linear_bwd_w(&gy, &vals[x.0], &w_shape));
                }
                if let Some(b) = bias {
                    if store.tracks(b) {
                        store.accumulate(b, k::linear_bwd_b(&gy, d_out));
                    }
                }
            }));
        }
        Ok(y)
    }

    /// Layer norm over dim 1 (channels) of a rank-2 or rank-3 tensor.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let c = match self.values[x.0].shape() {
            [_, c, _] | [_, c] => *c,
            s => {
                return Err(Error::ShapeMismatch(format!(
                    "layer_norm expects rank 2 or 3, got {s:?}"
                )))
            }
        };
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.values[v.0].shape() != [c] {
                return Err(Error::ShapeMismatch(format!(
                    "layer_norm {name} {:?}, expected [{c}]",
                    self.values[v.0].shape()
                )));
            }
        }
        let out = k::layer_norm_fwd(
            &self.values[x.0],
            &self.values[gamma.0],
            &self.values[beta.0],
            eps,
        );
        let track =
            self.requires_grad[x.0] || self.requires_grad[gamma.0] || self.requires_grad[beta.0];
        let y = self.push(out, track);
        if track {
            self.record(Box::new(move |vals, store| {
                let Some(gy) = store.grad(y) else { return };
                let (gx, ggamma, gbeta) = k::layer_norm_bwd(&gy, &vals[x.0], &vals[gamma.0], eps);
                if store.tracks(x) {
                    store.accumulate(x, gx);
                }
                if store.tracks(gamma) {
                    store.accumulate(gamma, ggamma);
                }
                if store.tracks(beta) {
                    store.accumulate(beta, gbeta);
                }
            }));
        }
        Ok(y)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = k::gelu_fwd(&self.values[x.0]);
        let track = self.requires_grad[x.0];
        let y = self.push(out, track);
        if track {
            self.record(Box::new(move |vals, store| {
                let Some(gy) = store.grad(y) else { return };
                store.accumulate(x, k::gelu_bwd(&gy, &vals[x.0]));
            }));
        }
        y
    }

    pub fn grn(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (_, c, _) = self.values[x.0].dims3()?;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.values[v.0].shape() != [c] {
                return Err(Error::ShapeMismatch(format!(
                    "grn {name} {:?}, expected [{c}]",
                    self.values[v.0].shape()
                )));
            }
        }
        let out = k::grn_fwd(
            &self.values[x.0],
            &self.values[gamma.0],
            &self.values[beta.0],
            eps,
        );
        let track =
            self.requires_grad[x.0] || self.requires_grad[gamma.0] || self.requires_grad[beta.0];
        let y = self.push(out, track);
        if track {
            self.record(Box::new(move |vals, store| {
                let Some(gy) = store.grad(y) else { return };
                let (gx, ggamma, gbeta) = k::grn_bwd(&gy, &vals[x.0], &vals[gamma.0], eps);
                if store.tracks(x) {
                    store.accumulate(x, gx);
                }
                if store.tracks(gamma) {
                    store.accumulate(gamma, ggamma);
                }
                if store.tracks(beta) {
                    store.accumulate(beta, gbeta);
                }
            }));
        }
        Ok(y)
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (_, _, l) = self.values[x.0].dims3()?;
        let out = k::global_avg_pool_fwd(&self.values[x.0]);
        let track = self.requires_grad[x.0];
        let y = self.push(out, track);
        if track {
            self.record(Box::new(move |_, store| {
                let Some(gy) = store.grad(y) else { return };
                store.accumulate(x, k::global_avg_pool_bwd(&gy, l));
            }));
        }
        Ok(y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.values[a.0].shape() != self.values[b.0].shape() {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.values[a.0].shape(),
                self.values[b.0].shape()
            )));
        }
        let out = k::add_fwd(&self.values[a.0], &self.values[b.0]);
        let track = self.requires_grad[a.0] || self.requires_grad[b.0];
        let y = self.push(out, track);
        if track {
            self.record(Box::new(move |_, store| {
                let Some(gy) = store.grad(y) else { return };
                if store.tracks(a) {
                    store.accumulate(a, gy.clone());
                }
                if store.tracks(b) {
                    store.accumulate(b, gy);
                }
            }));
        }
        Ok(y)
    }

    /// Multiply `[B, C, L]` by a constant `[B, L]` keep mask (1 = keep,
    /// 0 = zero the position across all channels).
    pub fn mask_positions(&mut self, x: Var, keep: &Tensor<T>) -> Result<Var> {
        let (b, _, l) = self.values[x.0].dims3()?;
        if keep.shape() != [b, l] {
            return Err(Error::ShapeMismatch(format!(
                "mask_positions keep {:?}, expected [{b}, {l}]",
                keep.shape()
            )));
        }
        let out = k::mask_positions_fwd(&self.values[x.0], keep);
        let track = self.requires_grad[x.0];
        let y = self.push(out, track);
        if track {
            let keep = keep.clone();
            self.record(Box::new(move |_, store| {
                let Some(gy) = store.grad(y) else { return };
                store.accumulate(x, k::mask_positions_fwd(&gy, &keep));
            }));
        }
        Ok(y)
    }

    /// Broadcast a learned `[D]` token into `[B, D, L]` wherever the constant
    /// `[B, L]` slot mask is 1.
    pub fn place_token(&mut self, token: Var, slots: &Tensor<T>, batch: usize) -> Result<Var> {
        if self.values[token.0].shape().len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "place_token expects a vector token, got {:?}",
                self.values[token.0].shape()
            )));
        }
        let out = k::place_token_fwd(&self.values[token.0], slots, batch);
        let track = self.requires_grad[token.0];
        let y = self.push(out, track);
        if track {
            let slots = slots.clone();
            self.record(Box::new(move |_, store| {
                let Some(gy) = store.grad(y) else { return };
                store.accumulate(token, k::place_token_bwd(&gy, &slots));
            }));
        }
        Ok(y)
    }

    /// `[B, K, P] -> [B, K*P]`, channel-at-position to sample-in-patch order.
    pub fn flatten_patches(&mut self, x: Var) -> Result<Var> {
        let (_, ksz, p) = self.values[x.0].dims3()?;
        let out = k::flatten_patches_fwd(&self.values[x.0]);
        let track = self.requires_grad[x.0];
        let y = self.push(out, track);
        if track {
            self.record(Box::new(move |_, store| {
                let Some(gy) = store.grad(y) else { return };
                store.accumulate(x, k::flatten_patches_bwd(&gy, ksz, p));
            }));
        }
        Ok(y)
    }

    /// Softmax cross-entropy against constant probability-row targets.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &Tensor<T>) -> Result<Var> {
        let (b, ksz) = self.values[logits.0].dims2()?;
        if targets.shape() != [b, ksz] {
            return Err(Error::ShapeMismatch(format!(
                "targets {:?}, expected [{b}, {ksz}]",
                targets.shape()
            )));
        }
        for (row, chunk) in targets.data().chunks_exact(ksz).enumerate() {
            let sum: f64 = chunk.iter().map(|v| v.to_f64()).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidTarget { row, sum });
            }
        }
        let (loss, probs) = k::softmax_ce_fwd(&self.values[logits.0], targets);
        let track = self.requires_grad[logits.0];
        let y = self.push(Tensor::scalar(loss), track);
        if track {
            let targets = targets.clone();
            self.record(Box::new(move |_, store| {
                let Some(gy) = store.grad(y) else { return };
                store.accumulate(logits, k::softmax_ce_bwd(gy.item(), &probs, &targets));
            }));
        }
        Ok(y)
    }

    /// MSE restricted to mask-active samples; `mask` is a constant `{0,1}`
    /// tensor of the prediction's shape.
    pub fn mse_masked(&mut self, pred: Var, target: &Tensor<T>, mask: &Tensor<T>) -> Result<Var> {
        let shape = self.values[pred.0].shape();
        if target.shape() != shape || mask.shape() != shape {
            return Err(Error::ShapeMismatch(format!(
                "mse_masked: pred {:?}, target {:?}, mask {:?}",
                shape,
                target.shape(),
                mask.shape()
            )));
        }
        let (loss, active) = k::mse_masked_fwd(&self.values[pred.0], target, mask);
        if active == 0 {
            return Err(Error::EmptyMask);
        }
        let track = self.requires_grad[pred.0];
        let y = self.push(Tensor::scalar(loss), track);
        if track {
            let target = target.clone();
            let mask = mask.clone();
            self.record(Box::new(move |vals, store| {
                let Some(gy) = store.grad(y) else { return };
                store.accumulate(
                    pred,
                    k::mse_masked_bwd(gy.item(), &vals[pred.0], &target, &mask, active),
                );
            }));
        }
        Ok(y)
    }

    /// Scalar projection `sum(x * r)` against a constant tensor.
    pub fn dot_const(&mut self, x: Var, r: &Tensor<T>) -> Result<Var> {
        if r.shape() != self.values[x.0].shape() {
            return Err(Error::ShapeMismatch(format!(
                "dot_const: {:?} vs {:?}",
                self.values[x.0].shape(),
                r.shape()
            )));
        }
        let out = k::dot_const_fwd(&self.values[x.0], r);
        let track = self.requires_grad[x.0];
        let y = self.push(Tensor::scalar(out), track);
        if track {
            let r = r.clone();
            self.record(Box::new(move |_, store| {
                let Some(gy) = store.grad(y) else { return };
                let g = gy.item();
                let mut delta = r.clone();
                for v in delta.data_mut() {
                    *v *= g;
                }
                store.accumulate(x, delta);
            }));
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_params_get_no_grad() {
        let mut g = Graph::<f64>::new();
        let frozen = Parameter::frozen("w", Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap());
        let w = g.param(&frozen);
        let x = g.leaf(Tensor::from_vec(&[1, 2], vec![3.0, 4.0]).unwrap());
        let y = g.add(x, w).unwrap();
        let r = Tensor::filled(&[1, 2], 1.0);
        let loss = g.dot_const(y, &r).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(w).is_none());
        assert!(g.grad(x).is_some());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::filled(&[2, 2], 1.0));
        assert!(matches!(g.backward(x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(x) + sum(x) => dx = 2 everywhere.
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::filled(&[1, 3], 1.5));
        let y = g.add(x, x).unwrap();
        let r = Tensor::filled(&[1, 3], 1.0);
        let loss = g.dot_const(y, &r).unwrap();
        g.backward(loss).unwrap();
        let gx = g.grad(x).unwrap();
        assert!(gx.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn invalid_target_rows_rejected() {
        let mut g = Graph::<f64>::new();
        let z = g.leaf(Tensor::zeros(&[1, 3]));
        let bad = Tensor::from_vec(&[1, 3], vec![0.5, 0.2, 0.2]).unwrap();
        assert!(matches!(
            g.softmax_cross_entropy(z, &bad),
            Err(Error::InvalidTarget { .. })
        ));
    }

    #[test]
    fn empty_mask_rejected() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(Tensor::zeros(&[2, 4]));
        let t = Tensor::zeros(&[2, 4]);
        let m = Tensor::zeros(&[2, 4]);
        assert!(matches!(g.mse_masked(p, &t, &m), Err(Error::EmptyMask)));
    }
}
