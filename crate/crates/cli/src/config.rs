//! Run configuration: one flat key table assembled from a TOML file, `CLT_*`
//! environment variables and command-line flags, later layers winning.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{de, Deserialize, Deserializer, Serialize};
use toml::{Table, Value};

use clt_core::datasets::LabelScheme;
use clt_core::evaluation::ProtocolConfig;
use clt_core::models::{ModelConfig, ModelKind};
use clt_core::textproc::{SegmentMode, Segmenter};
use clt_core::training::{Direction, Mechanisms, TrainConfig};
use clt_core::Real;

/// Environment prefix of run keys (`CLT_LAMBDA=1.0`).
pub const ENV_PREFIX: &str = "CLT_";
/// Environment prefix of synthetic-generator keys (`CLT_SYNTH_SEED=3`).
pub const SYNTH_ENV_PREFIX: &str = "CLT_SYNTH_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Text,
}

fn from_str<'de, D, T>(d: D) -> std::result::Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    String::deserialize(d)?.parse().map_err(de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Corpus of the source channel (`label<TAB>text` lines).
    pub source: Option<PathBuf>,
    /// Corpus of the target channel.
    pub target: Option<PathBuf>,
    /// Unlabeled texts of either channel, one per line; vocabulary only.
    pub source_unlabeled: Option<PathBuf>,
    pub target_unlabeled: Option<PathBuf>,
    /// Pretrained vectors (`token v1 .. vE` lines); random init without.
    pub embeddings: Option<PathBuf>,
    /// Model file written by `train` and read by `eval`.
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary written beside the checkpoint; defaults to `vocab.txt` next to it.
    pub vocab: Option<PathBuf>,
    pub out_dir: PathBuf,

    #[serde(deserialize_with = "from_str")]
    pub model: ModelKind,
    #[serde(deserialize_with = "from_str")]
    pub direction: Direction,
    pub num_classes: usize,
    pub label_scheme: LabelScheme,

    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub feature_maps: usize,
    pub attention_dim: usize,
    pub dropout: Real,

    pub lambda: Real,
    pub lambda_grid: Vec<Real>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub pretrain_epochs: usize,
    pub jt: bool,
    pub pr: bool,
    pub sp: bool,
    pub pseudo_k_min: usize,
    pub pseudo_k_max: usize,
    pub rho: Real,
    pub epsilon: Real,
    pub max_norm: Real,
    pub seed: u64,

    pub folds: usize,
    pub test_fraction: f64,
    pub min_count: usize,
    pub segment_mode: SegmentMode,
    pub chunk_size: usize,
    pub max_segments: usize,
    pub bucket_edges: Option<Vec<usize>>,
    pub workers: usize,

    /// Mechanisms to ablate one at a time (`jt`, `pr`, `sp`); empty runs one model.
    pub ablate: Vec<String>,
    pub formats: Vec<ReportFormat>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        let p = ProtocolConfig::default();
        Self {
            source: None,
            target: None,
            source_unlabeled: None,
            target_unlabeled: None,
            embeddings: None,
            checkpoint: None,
            vocab: None,
            out_dir: PathBuf::from("runs"),
            model: ModelKind::LeTraNets,
            direction: t.direction,
            num_classes: m.num_classes,
            label_scheme: LabelScheme::default(),
            embed_dim: m.embed_dim,
            filter_widths: m.filter_widths,
            feature_maps: m.feature_maps,
            attention_dim: m.attention_dim,
            dropout: m.dropout,
            lambda: t.lambda,
            lambda_grid: t.lambda_grid,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            pretrain_epochs: t.pretrain_epochs,
            jt: t.mechanisms.jt,
            pr: t.mechanisms.pr,
            sp: t.mechanisms.sp,
            pseudo_k_min: t.pseudo_k_min,
            pseudo_k_max: t.pseudo_k_max,
            rho: t.rho,
            epsilon: t.epsilon,
            max_norm: t.max_norm,
            seed: t.seed,
            folds: p.folds,
            test_fraction: p.test_fraction,
            min_count: p.min_count,
            segment_mode: p.segmenter.mode,
            chunk_size: p.segmenter.chunk_size,
            max_segments: p.segmenter.max_segments,
            bucket_edges: p.bucket_edges,
            workers: p.workers,
            ablate: Vec::new(),
            formats: vec![ReportFormat::Json, ReportFormat::Text],
        }
    }
}

impl RunConfig {
    pub fn from_table(table: Table) -> Result<Self> {
        let cfg: RunConfig = Value::Table(table).try_into().context("invalid run configuration")?;
        cfg.protocol().validate().context("invalid run configuration")?;
        Ok(cfg)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            num_classes: self.num_classes,
            embed_dim: self.embed_dim,
            filter_widths: self.filter_widths.clone(),
            feature_maps: self.feature_maps,
            attention_dim: self.attention_dim,
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            direction: self.direction,
            lambda: self.lambda,
            lambda_grid: self.lambda_grid.clone(),
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            pretrain_epochs: self.pretrain_epochs,
            mechanisms: Mechanisms {
                jt: self.jt,
                pr: self.pr,
                sp: self.sp,
            },
            pseudo_k_min: self.pseudo_k_min,
            pseudo_k_max: self.pseudo_k_max,
            rho: self.rho,
            epsilon: self.epsilon,
            max_norm: self.max_norm,
            seed: self.seed,
        }
    }

    pub fn segmenter(&self) -> Segmenter {
        Segmenter {
            mode: self.segment_mode,
            chunk_size: self.chunk_size,
            max_segments: self.max_segments,
        }
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            model: self.model_config(),
            train: self.train_config(),
            folds: self.folds,
            test_fraction: self.test_fraction,
            min_count: self.min_count,
            segmenter: self.segmenter(),
            bucket_edges: self.bucket_edges.clone(),
            workers: self.workers,
        }
    }

    pub fn wants(&self, f: ReportFormat) -> bool {
        self.formats.contains(&f)
    }

    /// Path of a required key, which must name a readable file.
    pub fn input(&self, key: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        let Some(p) = value else {
            bail!("`{key}` is required (set it in the config file or with --{})", key.replace('_', "-"));
        };
        existing(p)?;
        Ok(p.clone())
    }
}

pub fn existing(p: &Path) -> Result<()> {
    if !p.is_file() {
        bail!("input file not found: {}", p.display());
    }
    Ok(())
}

/// A command-line or environment value: TOML syntax when it parses as such
/// (`0.1`, `true`, `[3, 4, 5]`), a bare string otherwise.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// `key=value` as given to `--set`.
pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let Some((k, v)) = s.split_once('=') else {
        bail!("expected KEY=VALUE, got `{s}`");
    };
    Ok((k.trim().replace('-', "_"), parse_value(v.trim())))
}

/// Keys with `prefix` from the environment, lowercased and stripped. Keys
/// under a longer prefix in `exclude` belong to another command.
pub fn env_layer(vars: impl IntoIterator<Item = (String, String)>, prefix: &str, exclude: &[&str]) -> Vec<(String, Value)> {
    let mut out: Vec<(String, Value)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(prefix) && !exclude.iter().any(|e| k.starts_with(e)))
        .map(|(k, v)| (k[prefix.len()..].to_ascii_lowercase(), parse_value(&v)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// File table overlaid by each layer in turn.
pub fn merge(file: Option<&Path>, layers: &[Vec<(String, Value)>]) -> Result<Table> {
    let mut table = match file {
        Some(p) => {
            existing(p)?;
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            text.parse::<Table>().with_context(|| format!("parsing {}", p.display()))?
        }
        None => Table::new(),
    };
    for layer in layers {
        for (k, v) in layer {
            table.insert(k.clone(), v.clone());
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(pairs: &[(&str, &str)]) -> Table {
        pairs.iter().map(|(k, v)| ((*k).to_owned(), parse_value(v))).collect()
    }

    #[test]
    fn values_parse_as_toml_or_fall_back_to_strings() {
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("true"), Value::Boolean(true));
        assert_eq!(parse_value("/tmp/a.tsv"), Value::String("/tmp/a.tsv".into()));
        assert_eq!(parse_value("long2short"), Value::String("long2short".into()));
        assert!(matches!(parse_value("[3, 4]"), Value::Array(_)));
    }

    #[test]
    fn defaults_match_the_library() {
        let c = RunConfig::from_table(Table::new()).unwrap();
        assert_eq!(c.protocol(), ProtocolConfig::default());
    }

    #[test]
    fn typed_and_case_insensitive_keys() {
        let c = RunConfig::from_table(table(&[
            ("model", "BaggedCNN"),
            ("direction", "short2long"),
            ("lambda", "1"),
            ("filter_widths", "[2, 3]"),
        ]))
        .unwrap();
        assert_eq!(c.model, ModelKind::BaggedCnn);
        assert_eq!(c.direction, Direction::ShortToLong);
        assert_eq!(c.lambda, 1.0);
        assert_eq!(c.filter_widths, vec![2, 3]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let e = RunConfig::from_table(table(&[("lamda", "0.1")])).unwrap_err();
        assert!(format!("{e:#}").contains("lamda"));
        assert!(RunConfig::from_table(table(&[("model", "rnn")])).is_err());
        assert!(RunConfig::from_table(table(&[("batch_size", "0")])).is_err());
    }

    #[test]
    fn later_layers_win() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.toml");
        std::fs::write(&f, "seed = 1\nlambda = 0.01\n").unwrap();
        let env = env_layer(
            vec![
                ("CLT_SEED".to_owned(), "2".to_owned()),
                ("CLT_SYNTH_SEED".to_owned(), "9".to_owned()),
                ("HOME".to_owned(), "/root".to_owned()),
            ],
            ENV_PREFIX,
            &[SYNTH_ENV_PREFIX],
        );
        assert_eq!(env, vec![("seed".to_owned(), Value::Integer(2))]);
        let flags = vec![parse_assignment("lambda=1.0").unwrap()];
        let c = RunConfig::from_table(merge(Some(&f), &[env, flags]).unwrap()).unwrap();
        assert_eq!((c.seed, c.lambda), (2, 1.0));
    }
}
