pub mod eval;
pub mod gradcheck;
pub mod report;
pub mod synth;
pub mod train;
pub mod transfer;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use toml::Value;

use clt_core::datasets::{load_corpus, load_unlabeled, Channel, Corpus};

use crate::config::{env_layer, merge, parse_assignment, RunConfig, ENV_PREFIX, SYNTH_ENV_PREFIX};
use crate::manifest::Manifest;
use crate::RunArgs;

fn flag_layer(a: &RunArgs) -> Result<Vec<(String, Value)>> {
    let mut out = a.set.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>>>()?;
    let path = |p: &Path| Value::String(p.display().to_string());
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            out.push((k.to_owned(), v));
        }
    };
    put("source", a.source.as_deref().map(path));
    put("target", a.target.as_deref().map(path));
    put("embeddings", a.embeddings.as_deref().map(path));
    put("checkpoint", a.checkpoint.as_deref().map(path));
    put("out_dir", a.out_dir.as_deref().map(path));
    put("model", a.model.clone().map(Value::String));
    put("direction", a.direction.clone().map(Value::String));
    put("seed", a.seed.map(|s| Value::Integer(s as i64)));
    put("lambda", a.lambda.map(Value::Float));
    put("workers", a.workers.map(|w| Value::Integer(w as i64)));
    put(
        "ablate",
        a.ablate
            .clone()
            .map(|v| Value::Array(v.into_iter().map(Value::String).collect())),
    );
    Ok(out)
}

/// Config file, then `CLT_*` variables, then flags.
pub fn resolve(a: &RunArgs) -> Result<RunConfig> {
    let env = env_layer(std::env::vars(), ENV_PREFIX, &[SYNTH_ENV_PREFIX]);
    RunConfig::from_table(merge(a.config.as_deref(), &[env, flag_layer(a)?])?)
}

/// Reads a labeled corpus plus an optional unlabeled pool and records both as inputs.
fn read_channel(
    cfg: &RunConfig,
    path: &Path,
    unlabeled: Option<&Path>,
    channel: Channel,
    manifest: &mut Manifest,
) -> Result<Corpus> {
    let (mut corpus, report) = load_corpus(path, channel, cfg.num_classes, cfg.label_scheme)?;
    if report.empty_texts > 0 {
        log::warn!("{}: {} empty texts skipped", path.display(), report.empty_texts);
    }
    manifest.input(path)?;
    if let Some(u) = unlabeled {
        crate::config::existing(u)?;
        corpus.unlabeled = load_unlabeled(u)?;
        manifest.input(u)?;
    }
    Ok(corpus)
}

/// Source and target corpora, returned as (short, long).
pub fn read_pair(cfg: &RunConfig, manifest: &mut Manifest) -> Result<(Corpus, Corpus)> {
    let source = cfg.input("source", &cfg.source)?;
    let target = cfg.input("target", &cfg.target)?;
    let s = read_channel(cfg, &source, cfg.source_unlabeled.as_deref(), cfg.direction.source(), manifest)?;
    let t = read_channel(cfg, &target, cfg.target_unlabeled.as_deref(), cfg.direction.target(), manifest)?;
    Ok(match cfg.direction.source() {
        Channel::Short => (s, t),
        Channel::Long => (t, s),
    })
}

pub fn read_source(cfg: &RunConfig, manifest: &mut Manifest) -> Result<Corpus> {
    let source = cfg.input("source", &cfg.source)?;
    read_channel(cfg, &source, cfg.source_unlabeled.as_deref(), cfg.direction.source(), manifest)
}

pub fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
