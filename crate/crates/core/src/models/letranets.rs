use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    add_into, concat, Attention, AttentionTrace, ClassifierHead, CnnEncoder, EncodeTrace, Embedding,
};
use super::{ModelConfig, NoRng};
use crate::error::{ensure, Result};
use crate::numcore::{HasParameters, Mode, Parameter, Real};
use crate::textproc::Bag;

/// A stand-alone CNN (`lone`) and a BaggedCNN (`bag`) over one embedding
/// table, each with its own head, plus a joint head over `[lone; bag]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeTraNets {
    pub cfg: ModelConfig,
    pub embedding: Embedding,
    pub lone: CnnEncoder,
    pub bag: CnnEncoder,
    pub attention: Attention,
    pub head_l: ClassifierHead,
    pub head_b: ClassifierHead,
    pub head_j: ClassifierHead,
    /// Whether the joint head was trained; otherwise predictions average the
    /// lone and bag document heads.
    pub use_joint: bool,
    pub test_head: TestHead,
}

/// Which distributions classify a test input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestHead {
    /// The document heads (`y_d`); used after long-to-short training.
    #[default]
    Document,
    /// The mean of the segment heads (`y_{s_i}`) over the input's segments;
    /// used after short-to-long training. Identical to `Document` on
    /// one-segment inputs.
    SegmentMean,
}

/// Which of the six distributions to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Heads {
    pub lone_doc: bool,
    pub bag_doc: bool,
    pub joint_doc: bool,
    pub lone_seg: bool,
    pub bag_seg: bool,
    pub joint_seg: bool,
}

impl Heads {
    pub const ALL: Heads = Heads {
        lone_doc: true,
        bag_doc: true,
        joint_doc: true,
        lone_seg: true,
        bag_seg: true,
        joint_seg: true,
    };
}

#[derive(Debug, Clone)]
pub struct LeTraNetsOutput {
    pub lone_doc: Option<Vec<Real>>,
    pub bag_doc: Option<Vec<Real>>,
    pub joint_doc: Option<Vec<Real>>,
    pub lone_seg: Vec<Vec<Real>>,
    pub bag_seg: Vec<Vec<Real>>,
    pub joint_seg: Vec<Vec<Real>>,
    lone_doc_trace: Option<EncodeTrace>,
    lone_seg_traces: Vec<EncodeTrace>,
    bag_seg_traces: Vec<EncodeTrace>,
    attention: Option<AttentionTrace>,
}

impl LeTraNetsOutput {
    /// `d^l`; for a one-segment input this is the same vector as `s^l_1`.
    fn lone_doc_vec(&self) -> Option<&[Real]> {
        match &self.lone_doc_trace {
            Some(t) => Some(&t.output),
            None if self.lone_seg_traces.len() == 1 => Some(&self.lone_seg_traces[0].output),
            None => None,
        }
    }

    fn bag_doc_vec(&self) -> Option<&[Real]> {
        self.attention.as_ref().map(|a| a.pooled.as_slice())
    }

    pub fn attention_weights(&self) -> Option<&[Real]> {
        self.attention.as_ref().map(|a| a.weights.as_slice())
    }
}

/// Upstream gradients for a [`LeTraNetsOutput`]; segment vectors may be left
/// empty when no segment head receives gradient.
#[derive(Debug, Clone, Default)]
pub struct LeTraNetsGrads {
    pub lone_doc: Option<Vec<Real>>,
    pub bag_doc: Option<Vec<Real>>,
    pub joint_doc: Option<Vec<Real>>,
    pub lone_seg: Vec<Option<Vec<Real>>>,
    pub bag_seg: Vec<Option<Vec<Real>>>,
    pub joint_seg: Vec<Option<Vec<Real>>>,
}

impl LeTraNets {
    pub fn zeros(cfg: &ModelConfig, embedding: Embedding) -> Self {
        let (c, d) = (cfg.num_classes, cfg.encoding_dim());
        Self {
            cfg: cfg.clone(),
            embedding,
            lone: CnnEncoder::zeros("lone", cfg),
            bag: CnnEncoder::zeros("bag", cfg),
            attention: Attention::zeros(d, cfg.attention_dim),
            head_l: ClassifierHead::zeros("head_l", c, d),
            head_b: ClassifierHead::zeros("head_b", c, d),
            head_j: ClassifierHead::zeros("head_j", c, 2 * d),
            use_joint: true,
            test_head: TestHead::Document,
        }
    }

    pub fn random<R: Rng + ?Sized>(cfg: &ModelConfig, embedding: Embedding, rng: &mut R) -> Self {
        let (c, d) = (cfg.num_classes, cfg.encoding_dim());
        Self {
            cfg: cfg.clone(),
            embedding,
            lone: CnnEncoder::random("lone", cfg, rng),
            bag: CnnEncoder::random("bag", cfg, rng),
            attention: Attention::random(d, cfg.attention_dim, rng),
            head_l: ClassifierHead::random("head_l", c, d, rng),
            head_b: ClassifierHead::random("head_b", c, d, rng),
            head_j: ClassifierHead::random("head_j", c, 2 * d, rng),
            use_joint: true,
            test_head: TestHead::Document,
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        bag: &Bag,
        heads: Heads,
        mode: Mode,
        rng: &mut R,
    ) -> Result<LeTraNetsOutput> {
        ensure!(!bag.is_empty(), "bag has no segments");
        let n = bag.len();
        let p = self.cfg.dropout;
        let need_lone_doc = heads.lone_doc || heads.joint_doc;
        let need_bag_doc = heads.bag_doc || heads.joint_doc;
        let need_lone_seg = heads.lone_seg || heads.joint_seg || (need_lone_doc && n == 1);
        let need_bag_seg = heads.bag_seg || heads.joint_seg || need_bag_doc;

        let mut lone_seg_traces = Vec::new();
        if need_lone_seg {
            for seg in &bag.segments {
                lone_seg_traces.push(self.lone.forward(&self.embedding, &seg.tokens, p, mode, rng)?);
            }
        }
        let lone_doc_trace = if need_lone_doc && n > 1 {
            Some(self.lone.forward(&self.embedding, &bag.flat_tokens(), p, mode, rng)?)
        } else {
            None
        };
        let mut bag_seg_traces = Vec::new();
        if need_bag_seg {
            for seg in &bag.segments {
                bag_seg_traces.push(self.bag.forward(&self.embedding, &seg.tokens, p, mode, rng)?);
            }
        }
        let attention = need_bag_doc.then(|| {
            let vecs: Vec<&[Real]> = bag_seg_traces.iter().map(|t| t.output.as_slice()).collect();
            self.attention.forward(&vecs)
        });

        let mut out = LeTraNetsOutput {
            lone_doc: None,
            bag_doc: None,
            joint_doc: None,
            lone_seg: Vec::new(),
            bag_seg: Vec::new(),
            joint_seg: Vec::new(),
            lone_doc_trace,
            lone_seg_traces,
            bag_seg_traces,
            attention,
        };
        if heads.lone_doc {
            out.lone_doc = Some(self.head_l.probs(out.lone_doc_vec().unwrap()));
        }
        if heads.bag_doc {
            out.bag_doc = Some(self.head_b.probs(out.bag_doc_vec().unwrap()));
        }
        if heads.joint_doc {
            let x = concat(out.lone_doc_vec().unwrap(), out.bag_doc_vec().unwrap());
            out.joint_doc = Some(self.head_j.probs(&x));
        }
        if heads.lone_seg {
            out.lone_seg = out.lone_seg_traces.iter().map(|t| self.head_l.probs(&t.output)).collect();
        }
        if heads.bag_seg {
            out.bag_seg = out.bag_seg_traces.iter().map(|t| self.head_b.probs(&t.output)).collect();
        }
        if heads.joint_seg {
            out.joint_seg = out
                .lone_seg_traces
                .iter()
                .zip(&out.bag_seg_traces)
                .map(|(l, b)| self.head_j.probs(&concat(&l.output, &b.output)))
                .collect();
        }
        Ok(out)
    }

    pub fn backward(&mut self, out: &LeTraNetsOutput, grads: &LeTraNetsGrads) {
        let n = out.lone_seg_traces.len().max(out.bag_seg_traces.len());
        let d = self.cfg.encoding_dim();
        let mut d_lone_doc: Option<Vec<Real>> = None;
        let mut d_bag_doc: Option<Vec<Real>> = None;
        let mut d_lone_seg: Vec<Option<Vec<Real>>> = vec![None; n];
        let mut d_bag_seg: Vec<Option<Vec<Real>>> = vec![None; n];

        if let (Some(g), Some(y)) = (&grads.lone_doc, &out.lone_doc) {
            let dx = self.head_l.backward(out.lone_doc_vec().unwrap(), y, g);
            add_into(&mut d_lone_doc, &dx);
        }
        if let (Some(g), Some(y)) = (&grads.bag_doc, &out.bag_doc) {
            let dx = self.head_b.backward(out.bag_doc_vec().unwrap(), y, g);
            add_into(&mut d_bag_doc, &dx);
        }
        if let (Some(g), Some(y)) = (&grads.joint_doc, &out.joint_doc) {
            let x = concat(out.lone_doc_vec().unwrap(), out.bag_doc_vec().unwrap());
            let dx = self.head_j.backward(&x, y, g);
            add_into(&mut d_lone_doc, &dx[..d]);
            add_into(&mut d_bag_doc, &dx[d..]);
        }
        for (i, g) in grads.lone_seg.iter().enumerate() {
            if let Some(g) = g {
                let x = &out.lone_seg_traces[i].output;
                let dx = self.head_l.backward(x, &out.lone_seg[i], g);
                add_into(&mut d_lone_seg[i], &dx);
            }
        }
        for (i, g) in grads.bag_seg.iter().enumerate() {
            if let Some(g) = g {
                let x = &out.bag_seg_traces[i].output;
                let dx = self.head_b.backward(x, &out.bag_seg[i], g);
                add_into(&mut d_bag_seg[i], &dx);
            }
        }
        for (i, g) in grads.joint_seg.iter().enumerate() {
            if let Some(g) = g {
                let x = concat(&out.lone_seg_traces[i].output, &out.bag_seg_traces[i].output);
                let dx = self.head_j.backward(&x, &out.joint_seg[i], g);
                add_into(&mut d_lone_seg[i], &dx[..d]);
                add_into(&mut d_bag_seg[i], &dx[d..]);
            }
        }

        if let (Some(g), Some(att)) = (&d_bag_doc, &out.attention) {
            let vecs: Vec<&[Real]> = out.bag_seg_traces.iter().map(|t| t.output.as_slice()).collect();
            let dv = self.attention.backward(&vecs, att, g);
            for (acc, dvi) in d_bag_seg.iter_mut().zip(&dv) {
                add_into(acc, dvi);
            }
        }
        if let Some(g) = &d_lone_doc {
            match &out.lone_doc_trace {
                Some(trace) => self.lone.backward(&mut self.embedding, trace, g),
                None => add_into(&mut d_lone_seg[0], g),
            }
        }
        for (trace, g) in out.lone_seg_traces.iter().zip(&d_lone_seg) {
            if let Some(g) = g {
                self.lone.backward(&mut self.embedding, trace, g);
            }
        }
        for (trace, g) in out.bag_seg_traces.iter().zip(&d_bag_seg) {
            if let Some(g) = g {
                self.bag.backward(&mut self.embedding, trace, g);
            }
        }
    }

    /// Test-time distribution from the heads chosen by `test_head`: the joint
    /// head, or the mean of the lone and bag heads when the joint head was not
    /// trained.
    pub fn predict_proba(&self, bag: &Bag) -> Result<Vec<Real>> {
        let doc = self.test_head == TestHead::Document;
        let heads = Heads {
            joint_doc: doc && self.use_joint,
            lone_doc: doc && !self.use_joint,
            bag_doc: doc && !self.use_joint,
            joint_seg: !doc && self.use_joint,
            lone_seg: !doc && !self.use_joint,
            bag_seg: !doc && !self.use_joint,
        };
        let out = self.forward(bag, heads, Mode::Eval, &mut NoRng)?;
        let combine = |l: &[Real], b: &[Real], j: Option<&[Real]>| -> Vec<Real> {
            match j {
                Some(j) => j.to_vec(),
                None => l.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect(),
            }
        };
        if doc {
            let (l, b) = (out.lone_doc.unwrap_or_default(), out.bag_doc.unwrap_or_default());
            return Ok(combine(&l, &b, out.joint_doc.as_deref()));
        }
        let n = bag.len();
        let mut mean = vec![0.0; self.cfg.num_classes];
        for i in 0..n {
            let p = if self.use_joint {
                out.joint_seg[i].clone()
            } else {
                combine(&out.lone_seg[i], &out.bag_seg[i], None)
            };
            for (m, v) in mean.iter_mut().zip(&p) {
                *m += v / n as Real;
            }
        }
        Ok(mean)
    }

    pub fn lone_parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.lone.parameters_mut();
        v.extend(self.head_l.parameters_mut());
        v
    }

    pub fn bag_parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.bag.parameters_mut();
        v.extend(self.attention.parameters_mut());
        v.extend(self.head_b.parameters_mut());
        v
    }
}

impl HasParameters for LeTraNets {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.embedding.table];
        v.extend(self.lone.parameters());
        v.extend(self.bag.parameters());
        v.extend(self.attention.parameters());
        v.extend(self.head_l.parameters());
        v.extend(self.head_b.parameters());
        v.extend(self.head_j.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.embedding.table];
        v.extend(self.lone.parameters_mut());
        v.extend(self.bag.parameters_mut());
        v.extend(self.attention.parameters_mut());
        v.extend(self.head_l.parameters_mut());
        v.extend(self.head_b.parameters_mut());
        v.extend(self.head_j.parameters_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            num_classes: 2,
            embed_dim: 5,
            filter_widths: vec![2, 3],
            feature_maps: 3,
            attention_dim: 4,
            dropout: 0.5,
        }
    }

    fn model(seed: u64) -> LeTraNets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = crate::datasets::random_embeddings(20, 5, seed);
        LeTraNets::random(&cfg(), Embedding::new(table), &mut rng)
    }

    #[test]
    fn joint_head_reads_both_encoders() {
        let m = LeTraNets::zeros(&ModelConfig::default(), Embedding::new(Tensor::zeros(&[4, 300])));
        assert_eq!(m.head_j.input_dim(), 600);
        assert_eq!(m.head_l.input_dim(), 300);
    }

    #[test]
    fn output_counts_for_n_segments() {
        let m = model(0);
        let bag = Bag::from_segments(vec![vec![2, 3], vec![4, 5, 6], vec![7, 8], vec![9]], None);
        let out = m.forward(&bag, Heads::ALL, Mode::Eval, &mut NoRng).unwrap();
        let docs = [&out.lone_doc, &out.bag_doc, &out.joint_doc]
            .iter()
            .filter(|d| d.is_some())
            .count();
        assert_eq!(docs, 3);
        assert_eq!(out.lone_seg.len() + out.bag_seg.len() + out.joint_seg.len(), 12);
    }

    #[test]
    fn lone_document_sees_the_flat_text() {
        let m = model(2);
        let bag = Bag::from_segments(vec![vec![2, 3, 4], vec![5, 6]], None);
        let out = m.forward(&bag, Heads::ALL, Mode::Eval, &mut NoRng).unwrap();
        let flat = Bag::from_segments(vec![vec![2, 3, 4, 5, 6]], None);
        let one = m.forward(&flat, Heads::ALL, Mode::Eval, &mut NoRng).unwrap();
        assert_eq!(out.lone_doc, one.lone_doc);
    }

    #[test]
    fn prediction_without_joint_head_averages() {
        let mut m = model(3);
        m.use_joint = false;
        let bag = Bag::from_segments(vec![vec![2, 3], vec![9, 10]], None);
        let p = m.predict_proba(&bag).unwrap();
        let out = m.forward(&bag, Heads::ALL, Mode::Eval, &mut NoRng).unwrap();
        let (l, b) = (out.lone_doc.unwrap(), out.bag_doc.unwrap());
        for c in 0..2 {
            assert!((p[c] - 0.5 * (l[c] + b[c])).abs() < 1e-15);
        }
    }

    #[test]
    fn segment_mean_head() {
        let mut m = model(4);
        m.test_head = TestHead::SegmentMean;
        let bag = Bag::from_segments(vec![vec![2, 3], vec![9, 10, 11]], None);
        let out = m.forward(&bag, Heads::ALL, Mode::Eval, &mut NoRng).unwrap();
        let p = m.predict_proba(&bag).unwrap();
        for c in 0..2 {
            let want = 0.5 * (out.joint_seg[0][c] + out.joint_seg[1][c]);
            assert!((p[c] - want).abs() < 1e-15);
        }
        m.use_joint = false;
        let p = m.predict_proba(&bag).unwrap();
        let want: Real = (0..2).map(|i| 0.25 * (out.lone_seg[i][0] + out.bag_seg[i][0])).sum();
        assert!((p[0] - want).abs() < 1e-15);
        let one = Bag::from_segments(vec![vec![5, 6, 7]], None);
        let seg = m.predict_proba(&one).unwrap();
        m.test_head = TestHead::Document;
        let doc = m.predict_proba(&one).unwrap();
        for (a, b) in seg.iter().zip(&doc) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn one_segment_joint_document_equals_joint_segment(
            seed in 0u64..50,
            tokens in prop::collection::vec(2u32..20, 1..12),
        ) {
            let m = model(seed);
            let bag = Bag::from_segments(vec![tokens], None);
            let out = m.forward(&bag, Heads::ALL, Mode::Eval, &mut NoRng).unwrap();
            let (doc, seg) = (out.joint_doc.unwrap(), &out.joint_seg[0]);
            for (a, b) in doc.iter().zip(seg) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
