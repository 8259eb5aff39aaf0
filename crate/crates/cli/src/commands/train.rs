use anyhow::Result;

use clt_core::datasets::{load_embeddings, random_embeddings, DEV_FRACTION};
use clt_core::evaluation::RunLog;
use clt_core::models::{save_checkpoint, Model};
use clt_core::seed::{derive_seed, rng_for};
use clt_core::textproc::Vocabulary;
use clt_core::training::train;

use super::{out_dir, read_source};
use crate::config::{existing, RunConfig};
use crate::manifest::Manifest;
use crate::EXIT_OK;

/// Trains on the source corpus minus a seeded dev slice used for early
/// stopping, then writes `model.ckpt`, `vocab.txt` and `epochs.jsonl`.
pub fn run(cfg: &RunConfig) -> Result<u8> {
    let mut manifest = Manifest::new("train", cfg.seed, cfg)?;
    let corpus = read_source(cfg, &mut manifest)?;
    if let Some(e) = &cfg.embeddings {
        existing(e)?;
        manifest.input(e)?;
    }
    out_dir(&cfg.out_dir)?;

    let (train_c, dev_c) = corpus.split_holdout(DEV_FRACTION, derive_seed(cfg.seed, "dev", &[]));
    let texts = train_c
        .texts
        .iter()
        .map(|t| &t.tokens)
        .chain(corpus.unlabeled.iter());
    let vocab = Vocabulary::build(texts, cfg.min_count)?;
    let emb_seed = derive_seed(cfg.seed, "embeddings", &[]);
    let table = match &cfg.embeddings {
        Some(p) => load_embeddings(p, &vocab, cfg.embed_dim, emb_seed)?.0,
        None => random_embeddings(vocab.len(), cfg.embed_dim, emb_seed),
    };
    let model = Model::random(cfg.model, &cfg.model_config(), table, &mut rng_for(cfg.seed, "init", &[]))?;
    let seg = cfg.segmenter();
    let outcome = train(model, &train_c.bags(&vocab, &seg), &dev_c.bags(&vocab, &seg), &cfg.train_config())?;

    let ckpt = cfg.out_dir.join("model.ckpt");
    save_checkpoint(&outcome.model, &ckpt)?;
    manifest.output(&ckpt)?;
    let vocab_path = cfg.out_dir.join("vocab.txt");
    vocab.save(&vocab_path)?;
    manifest.output(&vocab_path)?;
    let log = RunLog {
        run_id: format!("{}/{}/train", cfg.model, cfg.direction),
        fold: 0,
        lambda: cfg.lambda,
        selected_epoch: outcome.history.selected_epoch,
        epochs: outcome.history.epochs,
    };
    manifest.write(&cfg.out_dir, "epochs.jsonl", &log.json_lines()?)?;
    manifest.save(&cfg.out_dir)?;

    println!(
        "{} trained on {} texts ({} dev): selected epoch {}, dev accuracy {}",
        cfg.model,
        train_c.len(),
        dev_c.len(),
        log.selected_epoch.map_or_else(|| "-".to_owned(), |e| e.to_string()),
        outcome
            .history
            .best_dev_accuracy
            .map_or_else(|| "-".to_owned(), |a| format!("{a:.4}"))
    );
    println!("wrote {}", cfg.out_dir.display());
    Ok(EXIT_OK)
}
