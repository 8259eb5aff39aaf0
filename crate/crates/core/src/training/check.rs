//! Finite-difference checks of every model objective on a bundled fixture.

use serde::Serialize;

use super::losses::{batch_loss, reference_predictions, Terms};
use super::Direction;
use crate::datasets::{parse_corpus, random_embeddings, Channel, LabelScheme};
use crate::error::{ensure, Result};
use crate::models::{Model, ModelConfig, ModelKind, NoRng};
use crate::numcore::{grad_check, GradCheckReport, Mode, Real};
use crate::seed::rng_for;
use crate::textproc::{Bag, Segmenter, Vocabulary};

/// Eight labeled texts of mixed length, `label<TAB>text`.
pub const GRADCHECK_FIXTURE: &str = include_str!("../../fixtures/gradcheck.tsv");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub lambda: Real,
    pub probes: usize,
    pub step: Real,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                num_classes: 2,
                embed_dim: 8,
                filter_widths: vec![3, 4, 5],
                feature_maps: 4,
                attention_dim: 5,
                dropout: 0.0,
            },
            lambda: 0.1,
            probes: 300,
            step: 1e-5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckCase {
    pub model: ModelKind,
    pub direction: Direction,
    pub report: GradCheckReport,
}

/// Source data for `direction` built from the fixture: segmented long
/// documents, or one-segment short texts plus a pseudo-long built from them.
fn fixture(direction: Direction) -> Result<(Vocabulary, Vec<Bag>, Option<Bag>)> {
    let channel = direction.source();
    let (corpus, _) = parse_corpus(GRADCHECK_FIXTURE, "gradcheck fixture", channel, 2, LabelScheme::ZeroBased)?;
    let vocab = Vocabulary::build(corpus.texts.iter().map(|t| &t.tokens), 1)?;
    let bags = corpus.bags(&vocab, &Segmenter::default());
    let pseudo = (channel == Channel::Short).then(|| {
        Bag {
            segments: bags[..3].iter().flat_map(|b| b.segments.clone()).collect(),
            label: None,
        }
    });
    Ok((vocab, bags, pseudo))
}

/// Gradient check of the training objective of `kind` for `direction`.
pub fn check_gradients(kind: ModelKind, direction: Direction, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    ensure!(
        cfg.model.dropout == 0.0,
        "gradient checks need a deterministic loss; dropout must be 0"
    );
    let (vocab, bags, pseudo) = fixture(direction)?;
    let table = random_embeddings(vocab.len(), cfg.model.embed_dim, cfg.seed);
    let mut rng = rng_for(cfg.seed, "gradcheck-init", &[]);
    let mut model = Model::random(kind, &cfg.model, table, &mut rng)?;
    let batch: Vec<&Bag> = bags.iter().collect();
    // the regularizer's reference side is a constant for differentiation
    let refs = reference_predictions(&model, &batch, pseudo.as_ref(), direction)?;
    let loss = |m: &mut Model, backprop: bool| {
        batch_loss(
            m,
            &batch,
            pseudo.as_ref(),
            Some(&refs),
            direction,
            cfg.lambda,
            Terms::FULL,
            Mode::Eval,
            &mut NoRng,
            backprop,
        )
        .map(|p| p.total())
    };
    let mut probe_rng = rng_for(cfg.seed, "gradcheck-probe", &[]);
    grad_check(&mut model, loss, cfg.probes, cfg.step, &mut probe_rng)
}

/// Every model in both directions.
pub fn check_all(cfg: &GradCheckConfig) -> Result<Vec<GradCheckCase>> {
    let mut out = Vec::new();
    for model in ModelKind::ALL {
        for direction in Direction::BOTH {
            out.push(GradCheckCase {
                model,
                direction,
                report: check_gradients(model, direction, cfg)?,
            });
        }
    }
    Ok(out)
}
