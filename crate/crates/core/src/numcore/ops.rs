//! Elementwise and distribution operations with their backward rules.

use rand::Rng;

use super::tensor::Real;
use crate::error::{ensure, Error, Result};

/// Floor added inside logarithms of probabilities.
pub const PROB_FLOOR: Real = 1e-12;

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[Real]) -> Result<Vec<Real>> {
    ensure!(!logits.is_empty(), "softmax of an empty vector");
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("softmax logit {i} = {}", logits[i])));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[Real]) -> Vec<Real> {
    let max = logits.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let mut out: Vec<Real> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: Real = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

/// Pulls a gradient w.r.t. softmax outputs back to the logits:
/// `dz = p * (dp - <dp, p>)`.
pub fn softmax_backward(probs: &[Real], dprobs: &[Real]) -> Vec<Real> {
    let inner: Real = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    probs
        .iter()
        .zip(dprobs)
        .map(|(p, d)| p * (d - inner))
        .collect()
}

/// `-ln(pred[gold] + floor)`.
pub fn cross_entropy(pred: &[Real], gold: usize) -> Result<Real> {
    ensure!(
        gold < pred.len(),
        "gold class {gold} out of range for {} classes",
        pred.len()
    );
    Ok(-(pred[gold] + PROB_FLOOR).ln())
}

/// Gradient of [`cross_entropy`] with respect to the distribution.
pub fn cross_entropy_grad(pred: &[Real], gold: usize) -> Vec<Real> {
    let mut g = vec![0.0; pred.len()];
    g[gold] = -1.0 / (pred[gold] + PROB_FLOOR);
    g
}

fn clamp_prob(q: Real) -> Real {
    q.max(PROB_FLOOR)
}

/// `KL(p || q) = sum_c p_c ln(p_c / q_c)`, with `0 ln 0 = 0` and `q` clamped
/// from below at [`PROB_FLOOR`].
pub fn kl_divergence(p: &[Real], q: &[Real]) -> Result<Real> {
    ensure!(
        p.len() == q.len(),
        "kl_divergence shape mismatch: {} vs {}",
        p.len(),
        q.len()
    );
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &[Real], q: &[Real]) -> Real {
    p.iter()
        .zip(q)
        .filter(|(&pc, _)| pc > 0.0)
        .map(|(&pc, &qc)| pc * (pc.ln() - clamp_prob(qc).ln()))
        .sum()
}

/// Gradient of `KL(p || q)` with respect to `q`; `p` is treated as a constant.
pub fn kl_grad_q(p: &[Real], q: &[Real]) -> Vec<Real> {
    p.iter()
        .zip(q)
        .map(|(&pc, &qc)| if qc > PROB_FLOOR { -pc / qc } else { 0.0 })
        .collect()
}

/// Gradient of `KL(p || q)` with respect to `p`.
pub fn kl_grad_p(p: &[Real], q: &[Real]) -> Vec<Real> {
    p.iter()
        .zip(q)
        .map(|(&pc, &qc)| {
            if pc > 0.0 {
                pc.ln() - clamp_prob(qc).ln() + 1.0
            } else {
                0.0
            }
        })
        .collect()
}

pub fn argmax(x: &[Real]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout mask: entries are 0 or `1 / (1 - rate)`; `None` means identity.
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Vec<Real>>);

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    pub fn sample<R: Rng + ?Sized>(len: usize, rate: Real, mode: Mode, rng: &mut R) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if mode == Mode::Eval || rate == 0.0 {
            return DropoutMask(None);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..len)
            .map(|_| if rng.gen::<f64>() < rate as f64 { 0.0 } else { keep })
            .collect();
        DropoutMask(Some(mask))
    }

    pub fn apply(&self, x: &[Real]) -> Vec<Real> {
        match &self.0 {
            None => x.to_vec(),
            Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
        }
    }

    /// Backward is the same elementwise scaling.
    pub fn backward(&self, dy: &[Real]) -> Vec<Real> {
        self.apply(dy)
    }
}

/// Inverted dropout: zero each element with probability `rate`, scale survivors by
/// `1 / (1 - rate)`. Identity in eval mode.
pub fn dropout<R: Rng + ?Sized>(x: &[Real], rate: Real, mode: Mode, rng: &mut R) -> Vec<Real> {
    DropoutMask::sample(x.len(), rate, mode, rng).apply(x)
}
