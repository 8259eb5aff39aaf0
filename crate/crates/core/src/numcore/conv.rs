//! Narrow 1-D convolution over a token-embedding matrix followed by
//! max-over-time pooling and a ReLU.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, Parameter, Real, Tensor};
use crate::error::{ensure, Error, Result};

/// Filters of one width: `weight` is `[maps x width*embed_dim]`, `bias` is `[maps]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBank {
    pub width: usize,
    pub weight: Parameter,
    pub bias: Parameter,
}

impl ConvBank {
    pub fn zeros(prefix: &str, width: usize, maps: usize, embed_dim: usize) -> Self {
        Self {
            width,
            weight: Parameter::zeros(format!("{prefix}.w{width}"), &[maps, width * embed_dim]),
            bias: Parameter::zeros(format!("{prefix}.b{width}"), &[maps]),
        }
    }

    /// Uniform init scaled by fan-in.
    pub fn random<R: Rng + ?Sized>(
        prefix: &str,
        width: usize,
        maps: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut bank = Self::zeros(prefix, width, maps, embed_dim);
        let bound = (1.0 / (width * embed_dim) as f64).sqrt();
        for w in bank.weight.value.data_mut() {
            *w = rng.gen_range(-bound..bound) as Real;
        }
        bank
    }

    pub fn maps(&self) -> usize {
        self.bias.value.len()
    }
}

/// What the backward pass needs: for every (bank, map) pair the winning window,
/// or `None` when the ReLU clipped the pooled value.
#[derive(Debug, Clone)]
pub struct ConvTrace {
    winners: Vec<Option<usize>>,
}

impl ConvTrace {
    pub fn winners(&self) -> &[Option<usize>] {
        &self.winners
    }
}

/// Forward pass.
///
/// `embeddings` is `[padded_len x embed_dim]` row-major; the first `valid_len`
/// rows are real tokens and the rest are padding. A window is considered only if
/// it starts on a real token, so windows made entirely of padding never win.
/// The output is ordered bank by bank, map by map.
pub fn conv1d_maxpool(
    embeddings: &[Real],
    valid_len: usize,
    embed_dim: usize,
    banks: &[ConvBank],
) -> Result<(Vec<Real>, ConvTrace)> {
    ensure!(embed_dim > 0, "embedding dimension must be positive");
    ensure!(
        embeddings.len() % embed_dim == 0,
        "embedding buffer of {} values is not a multiple of dim {embed_dim}",
        embeddings.len()
    );
    let padded_len = embeddings.len() / embed_dim;
    ensure!(
        valid_len >= 1 && valid_len <= padded_len,
        "valid length {valid_len} outside 1..={padded_len}"
    );
    let total_maps: usize = banks.iter().map(ConvBank::maps).sum();
    let mut out = Vec::with_capacity(total_maps);
    let mut winners = Vec::with_capacity(total_maps);
    for bank in banks {
        let h = bank.width;
        let span = h * embed_dim;
        ensure!(
            bank.weight.value.cols() == span,
            "filter width {h} x dim {embed_dim} does not match weight row length {}",
            bank.weight.value.cols()
        );
        ensure!(
            padded_len >= h,
            "sequence of length {padded_len} is shorter than filter width {h}; pad first"
        );
        let windows = valid_len.min(padded_len - h + 1);
        let maps = bank.maps();
        let mut best = vec![Real::NEG_INFINITY; maps];
        let mut arg = vec![0usize; maps];
        let bias = bank.bias.value.data();
        for t in 0..windows {
            let window = &embeddings[t * embed_dim..t * embed_dim + span];
            for m in 0..maps {
                let z = dot(bank.weight.value.row(m), window) + bias[m];
                if !z.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "convolution output {z} (width {h}, map {m}, position {t})"
                    )));
                }
                // strict comparison keeps the lowest winning index on ties
                if z > best[m] {
                    best[m] = z;
                    arg[m] = t;
                }
            }
        }
        for m in 0..maps {
            if best[m] > 0.0 {
                out.push(best[m]);
                winners.push(Some(arg[m]));
            } else {
                out.push(0.0);
                winners.push(None);
            }
        }
    }
    Ok((out, ConvTrace { winners }))
}

/// Backward pass: accumulates into the banks' gradients and into `dembeddings`
/// (same layout as `embeddings`).
pub fn conv1d_maxpool_backward(
    embeddings: &[Real],
    embed_dim: usize,
    banks: &mut [ConvBank],
    trace: &ConvTrace,
    dout: &[Real],
    dembeddings: &mut [Real],
) {
    debug_assert_eq!(embeddings.len(), dembeddings.len());
    let mut k = 0;
    for bank in banks.iter_mut() {
        let span = bank.width * embed_dim;
        for m in 0..bank.maps() {
            let g = dout[k];
            if let (Some(t), true) = (trace.winners[k], g != 0.0) {
                let lo = t * embed_dim;
                axpy(g, &embeddings[lo..lo + span], bank.weight.grad.row_mut(m));
                bank.bias.grad.data_mut()[m] += g;
                axpy(g, bank.weight.value.row(m), &mut dembeddings[lo..lo + span]);
            }
            k += 1;
        }
    }
}

/// Convenience for tests: a bank from explicit filter rows.
pub fn bank_from_rows(width: usize, rows: &[Vec<Real>], bias: &[Real]) -> Result<ConvBank> {
    let maps = rows.len();
    ensure!(maps == bias.len(), "one bias per filter row required");
    let span = rows.first().map_or(0, Vec::len);
    let data: Vec<Real> = rows.iter().flatten().copied().collect();
    Ok(ConvBank {
        width,
        weight: Parameter::new("w", Tensor::from_vec(&[maps, span], data)?),
        bias: Parameter::new("b", Tensor::from_vec(&[maps], bias.to_vec())?),
    })
}
