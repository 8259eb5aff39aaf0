//! CNN, BaggedCNN and LeTraNets as explicit forward/backward computations.
//!
//! Every model exposes `forward` (returning the requested output
//! distributions plus a trace) and `backward` (taking gradients with respect
//! to those distributions). Losses live in `training`, which keeps the models
//! agnostic of which objective drives them.

mod bagged;
mod checkpoint;
mod cnn;
mod layers;
mod letranets;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bagged::{BaggedCnn, BaggedGrads, BaggedOutput};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use cnn::{CnnClassifier, CnnOutput};
pub use layers::{Attention, AttentionTrace, ClassifierHead, CnnEncoder, EncodeTrace, Embedding};
pub use letranets::{Heads, LeTraNets, LeTraNetsGrads, LeTraNetsOutput, TestHead};

use crate::error::{ensure, Result};
use crate::numcore::{argmax, HasParameters, Mode, Parameter, Real, Tensor};
use crate::textproc::Bag;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub feature_maps: usize,
    pub attention_dim: usize,
    pub dropout: Real,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_classes: 2,
            embed_dim: 300,
            filter_widths: vec![3, 4, 5],
            feature_maps: 100,
            attention_dim: 100,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_classes >= 2, "num_classes must be at least 2");
        ensure!(self.embed_dim >= 1, "embed_dim must be positive");
        ensure!(!self.filter_widths.is_empty(), "at least one filter width required");
        ensure!(
            self.filter_widths.iter().all(|&h| h >= 1),
            "filter widths must be positive"
        );
        ensure!(self.feature_maps >= 1, "feature_maps must be positive");
        ensure!(self.attention_dim >= 1, "attention_dim must be positive");
        ensure!(
            (0.0..1.0).contains(&self.dropout),
            "dropout must lie in [0, 1)"
        );
        Ok(())
    }

    /// Width of one encoder's output vector.
    pub fn encoding_dim(&self) -> usize {
        self.filter_widths.len() * self.feature_maps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    #[serde(alias = "bagged", alias = "baggedcnn")]
    BaggedCnn,
    #[serde(alias = "letranets")]
    LeTraNets,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Cnn, ModelKind::BaggedCnn, ModelKind::LeTraNets];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "CNN",
            ModelKind::BaggedCnn => "BaggedCNN",
            ModelKind::LeTraNets => "LeTraNets",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "bagged" | "baggedcnn" | "bagged-cnn" | "bagged_cnn" => Ok(ModelKind::BaggedCnn),
            "letranets" => Ok(ModelKind::LeTraNets),
            other => Err(crate::Error::contract(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A trained or trainable model of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cnn(CnnClassifier),
    BaggedCnn(BaggedCnn),
    LeTraNets(LeTraNets),
}

impl Model {
    /// All-zero weights; the embedding table too.
    pub fn zeros(kind: ModelKind, cfg: &ModelConfig, vocab_size: usize) -> Self {
        let emb = Embedding::new(Tensor::zeros(&[vocab_size, cfg.embed_dim]));
        Self::assemble_zeros(kind, cfg, emb)
    }

    fn assemble_zeros(kind: ModelKind, cfg: &ModelConfig, emb: Embedding) -> Self {
        match kind {
            ModelKind::Cnn => Model::Cnn(CnnClassifier::zeros(cfg, emb)),
            ModelKind::BaggedCnn => Model::BaggedCnn(BaggedCnn::zeros(cfg, emb)),
            ModelKind::LeTraNets => Model::LeTraNets(LeTraNets::zeros(cfg, emb)),
        }
    }

    /// Random weights around a given embedding table `[V x E]`.
    pub fn random<R: Rng + ?Sized>(
        kind: ModelKind,
        cfg: &ModelConfig,
        embeddings: Tensor,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        ensure!(
            embeddings.shape().len() == 2 && embeddings.cols() == cfg.embed_dim,
            "embedding table shape {:?} does not match embed_dim {}",
            embeddings.shape(),
            cfg.embed_dim
        );
        let emb = Embedding::new(embeddings);
        Ok(match kind {
            ModelKind::Cnn => Model::Cnn(CnnClassifier::random(cfg, emb, rng)),
            ModelKind::BaggedCnn => Model::BaggedCnn(BaggedCnn::random(cfg, emb, rng)),
            ModelKind::LeTraNets => Model::LeTraNets(LeTraNets::random(cfg, emb, rng)),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Cnn(_) => ModelKind::Cnn,
            Model::BaggedCnn(_) => ModelKind::BaggedCnn,
            Model::LeTraNets(_) => ModelKind::LeTraNets,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Cnn(m) => &m.cfg,
            Model::BaggedCnn(m) => &m.cfg,
            Model::LeTraNets(m) => &m.cfg,
        }
    }

    pub fn embedding(&self) -> &Embedding {
        match self {
            Model::Cnn(m) => &m.embedding,
            Model::BaggedCnn(m) => &m.embedding,
            Model::LeTraNets(m) => &m.embedding,
        }
    }

    /// Test-time distribution for an input at its native length.
    pub fn predict_proba(&self, bag: &Bag) -> Result<Vec<Real>> {
        let mut rng = NoRng;
        match self {
            Model::Cnn(m) => Ok(m.forward(&bag.flat_tokens(), Mode::Eval, &mut rng)?.probs),
            Model::BaggedCnn(m) => Ok(m.forward(bag, true, false, Mode::Eval, &mut rng)?.doc.unwrap()),
            Model::LeTraNets(m) => m.predict_proba(bag),
        }
    }

    pub fn predict(&self, bag: &Bag) -> Result<usize> {
        Ok(argmax(&self.predict_proba(bag)?))
    }

    /// Weight matrices that receive the max-norm projection.
    pub fn head_weights_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Model::Cnn(m) => vec![&mut m.head.weight],
            Model::BaggedCnn(m) => vec![&mut m.head.weight],
            Model::LeTraNets(m) => vec![
                &mut m.head_l.weight,
                &mut m.head_b.weight,
                &mut m.head_j.weight,
            ],
        }
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for p in self.parameters_mut() {
            p.trainable = trainable;
        }
        self.freeze_padding();
    }

    /// Restores the PAD row to zero (it is never updated through gradients, but
    /// optimizers see the whole table).
    pub fn freeze_padding(&mut self) {
        let emb = match self {
            Model::Cnn(m) => &mut m.embedding,
            Model::BaggedCnn(m) => &mut m.embedding,
            Model::LeTraNets(m) => &mut m.embedding,
        };
        emb.table.value.row_mut(crate::textproc::PAD as usize).fill(0.0);
    }
}

impl HasParameters for Model {
    fn parameters(&self) -> Vec<&Parameter> {
        match self {
            Model::Cnn(m) => m.parameters(),
            Model::BaggedCnn(m) => m.parameters(),
            Model::LeTraNets(m) => m.parameters(),
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Model::Cnn(m) => m.parameters_mut(),
            Model::BaggedCnn(m) => m.parameters_mut(),
            Model::LeTraNets(m) => m.parameters_mut(),
        }
    }
}

/// Stand-in rng for eval-mode calls, which never draw. Panics if used.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval-mode forward drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval-mode forward drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("eval-mode forward drew a random number")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> std::result::Result<(), rand::Error> {
        unreachable!("eval-mode forward drew a random number")
    }
}
