//! Building blocks shared by the three classifiers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::Result;
use crate::numcore::{
    axpy, conv1d_maxpool, conv1d_maxpool_backward, dot, softmax_backward, softmax_unchecked,
    ConvBank, ConvTrace, DropoutMask, Mode, Parameter, Real, Tensor,
};
use crate::textproc::{TokenId, PAD};

/// Word embedding table `[V x E]`. The PAD row is zero and never receives gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Parameter,
}

impl Embedding {
    pub fn new(table: Tensor) -> Self {
        let mut table = Parameter::new("embedding", table);
        table.value.row_mut(PAD as usize).fill(0.0);
        Self { table }
    }

    pub fn dim(&self) -> usize {
        self.table.value.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.table.value.rows()
    }

    /// Gathers rows for `tokens`, right-padding with PAD up to `min_len`.
    /// Returns the padded ids and the `[len x E]` buffer.
    pub fn lookup(&self, tokens: &[TokenId], min_len: usize) -> (Vec<TokenId>, Vec<Real>) {
        let mut ids = tokens.to_vec();
        if ids.len() < min_len {
            ids.resize(min_len, PAD);
        }
        let e = self.dim();
        let v = self.vocab_size();
        let mut buf = Vec::with_capacity(ids.len() * e);
        for &id in &ids {
            if id == PAD {
                // padding reads as zeros whatever the stored row holds
                buf.resize(buf.len() + e, 0.0);
                continue;
            }
            let row = if (id as usize) < v { id as usize } else { crate::textproc::UNK as usize };
            buf.extend_from_slice(self.table.value.row(row));
        }
        (ids, buf)
    }

    pub fn backward(&mut self, ids: &[TokenId], dbuf: &[Real]) {
        let e = self.dim();
        let v = self.vocab_size();
        for (t, &id) in ids.iter().enumerate() {
            if id == PAD {
                continue;
            }
            let row = if (id as usize) < v { id as usize } else { crate::textproc::UNK as usize };
            axpy(1.0, &dbuf[t * e..(t + 1) * e], self.table.grad.row_mut(row));
        }
    }
}

/// Bank of convolution filters (one per width) with max-over-time pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnEncoder {
    pub banks: Vec<ConvBank>,
}

/// Saved state of one encoder call.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    ids: Vec<TokenId>,
    x: Vec<Real>,
    conv: ConvTrace,
    mask: DropoutMask,
    pub output: Vec<Real>,
}

impl CnnEncoder {
    pub fn zeros(prefix: &str, cfg: &ModelConfig) -> Self {
        Self {
            banks: cfg
                .filter_widths
                .iter()
                .map(|&h| ConvBank::zeros(prefix, h, cfg.feature_maps, cfg.embed_dim))
                .collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(prefix: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            banks: cfg
                .filter_widths
                .iter()
                .map(|&h| ConvBank::random(prefix, h, cfg.feature_maps, cfg.embed_dim, rng))
                .collect(),
        }
    }

    pub fn max_width(&self) -> usize {
        self.banks.iter().map(|b| b.width).max().unwrap_or(1)
    }

    pub fn output_dim(&self) -> usize {
        self.banks.iter().map(ConvBank::maps).sum()
    }

    /// Encodes `tokens` (non-empty) and applies inverted dropout to the pooled vector.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        emb: &Embedding,
        tokens: &[TokenId],
        dropout: Real,
        mode: Mode,
        rng: &mut R,
    ) -> Result<EncodeTrace> {
        crate::error::ensure!(!tokens.is_empty(), "cannot encode an empty token sequence");
        let (ids, x) = emb.lookup(tokens, self.max_width());
        let (pooled, conv) = conv1d_maxpool(&x, tokens.len(), emb.dim(), &self.banks)?;
        let mask = DropoutMask::sample(pooled.len(), dropout, mode, rng);
        let output = mask.apply(&pooled);
        Ok(EncodeTrace {
            ids,
            x,
            conv,
            mask,
            output,
        })
    }

    pub fn backward(&mut self, emb: &mut Embedding, trace: &EncodeTrace, dout: &[Real]) {
        let dpooled = trace.mask.backward(dout);
        let mut dx = vec![0.0; trace.x.len()];
        conv1d_maxpool_backward(&trace.x, emb.dim(), &mut self.banks, &trace.conv, &dpooled, &mut dx);
        emb.backward(&trace.ids, &dx);
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.banks.iter().flat_map(|b| [&b.weight, &b.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.banks
            .iter_mut()
            .flat_map(|b| [&mut b.weight, &mut b.bias])
            .collect()
    }
}

/// Additive attention over segment vectors:
/// `a = softmax_i(v . tanh(W s_i + b))`, `d = sum_i a_i s_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub proj: Parameter,
    pub bias: Parameter,
    pub context: Parameter,
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    hidden: Vec<Vec<Real>>,
    pub weights: Vec<Real>,
    pub pooled: Vec<Real>,
}

impl Attention {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            proj: Parameter::zeros("attn.proj", &[hidden, input_dim]),
            bias: Parameter::zeros("attn.bias", &[hidden]),
            context: Parameter::zeros("attn.context", &[hidden]),
        }
    }

    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut a = Self::zeros(input_dim, hidden);
        let bp = (1.0 / input_dim as f64).sqrt();
        for w in a.proj.value.data_mut() {
            *w = rng.gen_range(-bp..bp) as Real;
        }
        let bc = (1.0 / hidden as f64).sqrt();
        for w in a.context.value.data_mut() {
            *w = rng.gen_range(-bc..bc) as Real;
        }
        a
    }

    pub fn forward(&self, segments: &[&[Real]]) -> AttentionTrace {
        assert!(!segments.is_empty(), "attention over zero segments");
        let hdim = self.bias.value.len();
        let mut hidden = Vec::with_capacity(segments.len());
        let mut scores = Vec::with_capacity(segments.len());
        for s in segments {
            let u: Vec<Real> = (0..hdim)
                .map(|k| (dot(self.proj.value.row(k), s) + self.bias.value.data()[k]).tanh())
                .collect();
            scores.push(dot(self.context.value.data(), &u));
            hidden.push(u);
        }
        let weights = softmax_unchecked(&scores);
        let mut pooled = vec![0.0; segments[0].len()];
        for (s, &a) in segments.iter().zip(&weights) {
            axpy(a, s, &mut pooled);
        }
        AttentionTrace {
            hidden,
            weights,
            pooled,
        }
    }

    /// Returns the gradient for each segment vector.
    pub fn backward(
        &mut self,
        segments: &[&[Real]],
        trace: &AttentionTrace,
        dpooled: &[Real],
    ) -> Vec<Vec<Real>> {
        let mut dsegs: Vec<Vec<Real>> = trace
            .weights
            .iter()
            .map(|&a| dpooled.iter().map(|g| a * g).collect())
            .collect();
        if segments.len() == 1 {
            // a single weight is constant 1; no gradient reaches the scorer
            return dsegs;
        }
        let dweights: Vec<Real> = segments.iter().map(|s| dot(s, dpooled)).collect();
        let dscores = softmax_backward(&trace.weights, &dweights);
        for ((s, u), (&ds, dseg)) in segments
            .iter()
            .zip(&trace.hidden)
            .zip(dscores.iter().zip(dsegs.iter_mut()))
        {
            axpy(ds, u, self.context.grad.data_mut());
            for (k, &uk) in u.iter().enumerate() {
                let dpre = ds * self.context.value.data()[k] * (1.0 - uk * uk);
                if dpre == 0.0 {
                    continue;
                }
                axpy(dpre, s, self.proj.grad.row_mut(k));
                self.bias.grad.data_mut()[k] += dpre;
                axpy(dpre, self.proj.value.row(k), dseg);
            }
        }
        dsegs
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.proj, &self.bias, &self.context]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.proj, &mut self.bias, &mut self.context]
    }
}

/// Softmax classifier `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl ClassifierHead {
    pub fn zeros(name: &str, classes: usize, input_dim: usize) -> Self {
        Self {
            weight: Parameter::zeros(format!("{name}.w"), &[classes, input_dim]),
            bias: Parameter::zeros(format!("{name}.b"), &[classes]),
        }
    }

    pub fn random<R: Rng + ?Sized>(name: &str, classes: usize, input_dim: usize, rng: &mut R) -> Self {
        let mut h = Self::zeros(name, classes, input_dim);
        let b = (6.0 / (classes + input_dim) as f64).sqrt();
        for w in h.weight.value.data_mut() {
            *w = rng.gen_range(-b..b) as Real;
        }
        h
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn probs(&self, x: &[Real]) -> Vec<Real> {
        let logits: Vec<Real> = (0..self.weight.value.rows())
            .map(|c| dot(self.weight.value.row(c), x) + self.bias.value.data()[c])
            .collect();
        softmax_unchecked(&logits)
    }

    /// Backward from a gradient on the output distribution; returns `d x`.
    pub fn backward(&mut self, x: &[Real], probs: &[Real], dprobs: &[Real]) -> Vec<Real> {
        let dlogits = softmax_backward(probs, dprobs);
        let mut dx = vec![0.0; x.len()];
        for (c, &g) in dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            axpy(g, x, self.weight.grad.row_mut(c));
            self.bias.grad.data_mut()[c] += g;
            axpy(g, self.weight.value.row(c), &mut dx);
        }
        dx
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub(crate) fn concat(a: &[Real], b: &[Real]) -> Vec<Real> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

pub(crate) fn add_into(acc: &mut Option<Vec<Real>>, g: &[Real]) {
    match acc {
        Some(v) => axpy(1.0, g, v),
        None => *acc = Some(g.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_segment_attention_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Attention::random(4, 3, &mut rng);
        let s = [0.5, -1.0, 2.0, 0.25];
        let t = a.forward(&[&s]);
        assert_eq!(t.weights, vec![1.0]);
        assert_eq!(t.pooled, s.to_vec());
    }

    #[test]
    fn identical_segments_share_weight_equally() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Attention::random(3, 5, &mut rng);
        let s = [0.1, 0.2, 0.3];
        let t = a.forward(&[&s, &s]);
        assert_eq!(t.weights, vec![0.5, 0.5]);
        for (p, q) in t.pooled.iter().zip(&s) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_head_is_uniform() {
        let h = ClassifierHead::zeros("h", 5, 7);
        assert_eq!(h.probs(&[1.0; 7]), vec![0.2; 5]);
    }

    #[test]
    fn embedding_lookup_pads_and_skips_pad_gradient() {
        let mut t = Tensor::zeros(&[4, 2]);
        t.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = i as Real);
        let mut e = Embedding::new(t);
        assert_eq!(e.table.value.row(0), &[0.0, 0.0]);
        let (ids, buf) = e.lookup(&[3], 3);
        assert_eq!(ids, vec![3, PAD, PAD]);
        assert_eq!(buf, vec![6.0, 7.0, 0.0, 0.0, 0.0, 0.0]);
        e.backward(&ids, &[1.0; 6]);
        assert_eq!(e.table.grad.row(0), &[0.0, 0.0]);
        assert_eq!(e.table.grad.row(3), &[1.0, 1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn attention_weights_sum_to_one_and_permute(
            seed in any::<u64>(),
            raw in prop::collection::vec(prop::collection::vec(-2.0..2.0 as Real, 4), 1..6),
            rot in 0usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Attention::random(4, 3, &mut rng);
            let segs: Vec<&[Real]> = raw.iter().map(Vec::as_slice).collect();
            let t = a.forward(&segs);
            let total: Real = t.weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            let k = rot % segs.len();
            let mut rotated = segs.clone();
            rotated.rotate_left(k);
            let r = a.forward(&rotated);
            for i in 0..segs.len() {
                prop_assert!((r.weights[i] - t.weights[(i + k) % segs.len()]).abs() < 1e-12);
            }
            for (x, y) in r.pooled.iter().zip(&t.pooled) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
