use rand::Rng;

use super::layers::{ClassifierHead, CnnEncoder, EncodeTrace, Embedding};
use super::ModelConfig;
use crate::error::Result;
use crate::numcore::{HasParameters, Mode, Parameter, Real};
use crate::textproc::TokenId;

/// Single-encoder CNN sentence classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnClassifier {
    pub cfg: ModelConfig,
    pub embedding: Embedding,
    pub encoder: CnnEncoder,
    pub head: ClassifierHead,
}

#[derive(Debug, Clone)]
pub struct CnnOutput {
    pub probs: Vec<Real>,
    trace: EncodeTrace,
}

impl CnnClassifier {
    pub fn zeros(cfg: &ModelConfig, embedding: Embedding) -> Self {
        Self {
            cfg: cfg.clone(),
            embedding,
            encoder: CnnEncoder::zeros("cnn", cfg),
            head: ClassifierHead::zeros("head", cfg.num_classes, cfg.encoding_dim()),
        }
    }

    pub fn random<R: Rng + ?Sized>(cfg: &ModelConfig, embedding: Embedding, rng: &mut R) -> Self {
        Self {
            cfg: cfg.clone(),
            embedding,
            encoder: CnnEncoder::random("cnn", cfg, rng),
            head: ClassifierHead::random("head", cfg.num_classes, cfg.encoding_dim(), rng),
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        tokens: &[TokenId],
        mode: Mode,
        rng: &mut R,
    ) -> Result<CnnOutput> {
        let trace = self
            .encoder
            .forward(&self.embedding, tokens, self.cfg.dropout, mode, rng)?;
        Ok(CnnOutput {
            probs: self.head.probs(&trace.output),
            trace,
        })
    }

    /// Accumulates gradients given `d loss / d probs`.
    pub fn backward(&mut self, out: &CnnOutput, dprobs: &[Real]) {
        let dx = self.head.backward(&out.trace.output, &out.probs, dprobs);
        self.encoder.backward(&mut self.embedding, &out.trace, &dx);
    }
}

impl HasParameters for CnnClassifier {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.embedding.table];
        v.extend(self.encoder.parameters());
        v.extend(self.head.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.embedding.table];
        v.extend(self.encoder.parameters_mut());
        v.extend(self.head.parameters_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NoRng;
    use crate::numcore::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(c: usize) -> ModelConfig {
        ModelConfig {
            num_classes: c,
            embed_dim: 6,
            filter_widths: vec![2, 3],
            feature_maps: 4,
            attention_dim: 5,
            dropout: 0.5,
        }
    }

    #[test]
    fn zero_head_gives_uniform_output() {
        let cfg = small_cfg(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = CnnClassifier::random(&cfg, Embedding::new(Tensor::zeros(&[10, 6])), &mut rng);
        m.head = ClassifierHead::zeros("head", 5, cfg.encoding_dim());
        let out = m.forward(&[2, 3, 4], Mode::Eval, &mut NoRng).unwrap();
        assert_eq!(out.probs, vec![0.2; 5]);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let cfg = small_cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let table = crate::datasets::random_embeddings(12, 6, 1);
        let m = CnnClassifier::random(&cfg, Embedding::new(table), &mut rng);
        let a = m.forward(&[5, 6, 7, 8], Mode::Eval, &mut NoRng).unwrap();
        let b = m.forward(&[5, 6, 7, 8], Mode::Eval, &mut NoRng).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.probs.len(), 2);
    }

    #[test]
    fn empty_input_is_rejected() {
        let cfg = small_cfg(2);
        let m = CnnClassifier::zeros(&cfg, Embedding::new(Tensor::zeros(&[4, 6])));
        assert!(m.forward(&[], Mode::Eval, &mut NoRng).is_err());
    }
}
