use rand::Rng;

use super::layers::{add_into, Attention, AttentionTrace, ClassifierHead, CnnEncoder, EncodeTrace, Embedding};
use super::ModelConfig;
use crate::error::{ensure, Result};
use crate::numcore::{HasParameters, Mode, Parameter, Real};
use crate::textproc::Bag;

/// Segment encoder, attention pooling, and one head shared by segments and documents.
#[derive(Debug, Clone, PartialEq)]
pub struct BaggedCnn {
    pub cfg: ModelConfig,
    pub embedding: Embedding,
    pub encoder: CnnEncoder,
    pub attention: Attention,
    pub head: ClassifierHead,
}

#[derive(Debug, Clone)]
pub struct BaggedOutput {
    /// `y_d`, when requested.
    pub doc: Option<Vec<Real>>,
    /// `y_{s_i}` per segment, empty unless requested.
    pub segments: Vec<Vec<Real>>,
    segment_traces: Vec<EncodeTrace>,
    attention: Option<AttentionTrace>,
}

impl BaggedOutput {
    pub fn attention_weights(&self) -> Option<&[Real]> {
        self.attention.as_ref().map(|a| a.weights.as_slice())
    }
}

/// Upstream gradients for a [`BaggedOutput`].
#[derive(Debug, Clone, Default)]
pub struct BaggedGrads {
    pub doc: Option<Vec<Real>>,
    pub segments: Vec<Option<Vec<Real>>>,
}

impl BaggedCnn {
    pub fn zeros(cfg: &ModelConfig, embedding: Embedding) -> Self {
        let d = cfg.encoding_dim();
        Self {
            cfg: cfg.clone(),
            embedding,
            encoder: CnnEncoder::zeros("bag", cfg),
            attention: Attention::zeros(d, cfg.attention_dim),
            head: ClassifierHead::zeros("head", cfg.num_classes, d),
        }
    }

    pub fn random<R: Rng + ?Sized>(cfg: &ModelConfig, embedding: Embedding, rng: &mut R) -> Self {
        let d = cfg.encoding_dim();
        Self {
            cfg: cfg.clone(),
            embedding,
            encoder: CnnEncoder::random("bag", cfg, rng),
            attention: Attention::random(d, cfg.attention_dim, rng),
            head: ClassifierHead::random("head", cfg.num_classes, d, rng),
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        bag: &Bag,
        want_doc: bool,
        want_segments: bool,
        mode: Mode,
        rng: &mut R,
    ) -> Result<BaggedOutput> {
        ensure!(!bag.is_empty(), "bag has no segments");
        let mut segment_traces = Vec::with_capacity(bag.len());
        for seg in &bag.segments {
            segment_traces.push(self.encoder.forward(
                &self.embedding,
                &seg.tokens,
                self.cfg.dropout,
                mode,
                rng,
            )?);
        }
        let segments = if want_segments {
            segment_traces.iter().map(|t| self.head.probs(&t.output)).collect()
        } else {
            Vec::new()
        };
        let (doc, attention) = if want_doc {
            let vecs: Vec<&[Real]> = segment_traces.iter().map(|t| t.output.as_slice()).collect();
            let att = self.attention.forward(&vecs);
            (Some(self.head.probs(&att.pooled)), Some(att))
        } else {
            (None, None)
        };
        Ok(BaggedOutput {
            doc,
            segments,
            segment_traces,
            attention,
        })
    }

    pub fn backward(&mut self, out: &BaggedOutput, grads: &BaggedGrads) {
        let n = out.segment_traces.len();
        let mut dsegs: Vec<Option<Vec<Real>>> = vec![None; n];
        for (i, g) in grads.segments.iter().enumerate() {
            if let Some(g) = g {
                let dx = self
                    .head
                    .backward(&out.segment_traces[i].output, &out.segments[i], g);
                add_into(&mut dsegs[i], &dx);
            }
        }
        if let (Some(g), Some(doc), Some(att)) = (&grads.doc, &out.doc, &out.attention) {
            let dpooled = self.head.backward(&att.pooled, doc, g);
            let vecs: Vec<&[Real]> = out.segment_traces.iter().map(|t| t.output.as_slice()).collect();
            let dv = self.attention.backward(&vecs, att, &dpooled);
            for (acc, d) in dsegs.iter_mut().zip(&dv) {
                add_into(acc, d);
            }
        }
        for (trace, d) in out.segment_traces.iter().zip(&dsegs) {
            if let Some(d) = d {
                self.encoder.backward(&mut self.embedding, trace, d);
            }
        }
    }
}

impl HasParameters for BaggedCnn {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.embedding.table];
        v.extend(self.encoder.parameters());
        v.extend(self.attention.parameters());
        v.extend(self.head.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.embedding.table];
        v.extend(self.encoder.parameters_mut());
        v.extend(self.attention.parameters_mut());
        v.extend(self.head.parameters_mut());
        v
    }
}
