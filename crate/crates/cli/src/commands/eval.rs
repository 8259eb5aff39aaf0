use std::fmt::Write as _;

use anyhow::{Context, Result};
use serde::Serialize;

use clt_core::datasets::{load_corpus, Channel};
use clt_core::evaluation::{accuracy, class_to_score, per_length_report, rmse, LengthBucket};
use clt_core::models::{load_checkpoint, ModelKind};
use clt_core::textproc::Vocabulary;
use clt_core::Real;

use super::out_dir;
use crate::config::{existing, RunConfig};
use crate::manifest::Manifest;
use crate::EXIT_OK;

#[derive(Debug, Serialize)]
struct EvalReport {
    model: ModelKind,
    channel: Channel,
    num_texts: usize,
    accuracy: Real,
    error: Real,
    rmse: Option<Real>,
    per_length: Vec<LengthBucket>,
}

/// Scores a checkpoint on the target corpus, read as the target channel of
/// the configured direction.
pub fn run(cfg: &RunConfig) -> Result<u8> {
    let mut manifest = Manifest::new("eval", cfg.seed, cfg)?;
    let ckpt = cfg.input("checkpoint", &cfg.checkpoint)?;
    let vocab_path = match &cfg.vocab {
        Some(v) => v.clone(),
        None => ckpt.with_file_name("vocab.txt"),
    };
    existing(&vocab_path).context("the vocabulary is needed beside the checkpoint")?;
    let target = cfg.input("target", &cfg.target)?;
    manifest.input(&ckpt)?;
    manifest.input(&vocab_path)?;
    out_dir(&cfg.out_dir)?;

    let model = load_checkpoint(&ckpt)?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let channel = cfg.direction.target();
    let c = model.config().num_classes;
    let (corpus, _) = load_corpus(&target, channel, c, cfg.label_scheme)?;
    manifest.input(&target)?;
    let bags = corpus.bags(&vocab, &cfg.segmenter());
    let preds = bags.iter().map(|b| model.predict(b)).collect::<clt_core::Result<Vec<_>>>()?;
    let golds: Vec<usize> = corpus.texts.iter().map(|t| t.label).collect();
    let acc = accuracy(&preds, &golds)?;
    let fine = if c > 2 {
        let score = |v: &[usize]| v.iter().map(|&k| class_to_score(k)).collect::<Vec<_>>();
        Some(rmse(&score(&preds), &score(&golds), c)?)
    } else {
        None
    };
    let report = EvalReport {
        model: model.kind(),
        channel,
        num_texts: bags.len(),
        accuracy: acc,
        error: 1.0 - acc,
        rmse: fine,
        per_length: per_length_report(&model, &bags, cfg.bucket_edges.as_deref())?,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    manifest.write(&cfg.out_dir, "eval.json", &json)?;
    manifest.save(&cfg.out_dir)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{} on {} ({:?}, {} texts): accuracy {:.4}  error {:.4}",
        report.model,
        target.display(),
        channel,
        report.num_texts,
        report.accuracy,
        report.error
    );
    if let Some(r) = report.rmse {
        let _ = writeln!(text, "rmse {r:.4}");
    }
    print!("{text}");
    Ok(EXIT_OK)
}
