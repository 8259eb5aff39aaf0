use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buckets::{decile_edges, length_buckets, mean_buckets, LengthBucket};
use super::metrics::{accuracy, class_to_score, mean, rmse, transfer_loss, transfer_ratio};
use super::report::{BaselineMetrics, FoldMetrics, MetricsReport};
use crate::datasets::{kfold_split, load_embeddings, random_embeddings, Channel, Corpus, FoldPlan};
use crate::error::{ensure, Error, Result};
use crate::models::{Model, ModelConfig, ModelKind};
use crate::numcore::{Real, Tensor};
use crate::seed::{derive_seed, rng_for};
use crate::textproc::{Bag, Segmenter, Vocabulary};
use crate::training::{train, tune_lambda, Direction, EpochRecord, LossParts, Mechanisms, Stage, TrainConfig};

/// Everything a transfer run needs besides the corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub folds: usize,
    /// Share of each channel held out as its test split.
    pub test_fraction: f64,
    pub min_count: usize,
    pub segmenter: Segmenter,
    /// Interior cut points of the per-length table; `None` uses deciles.
    pub bucket_edges: Option<Vec<usize>>,
    /// Threads used for independent fold and lambda runs.
    pub workers: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            folds: 5,
            test_fraction: 0.2,
            min_count: 1,
            segmenter: Segmenter::default(),
            bucket_edges: None,
            workers: 1,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        ensure!(self.folds >= 2, "folds must be at least 2");
        ensure!(
            self.test_fraction > 0.0 && self.test_fraction < 1.0,
            "test_fraction must lie in (0, 1)"
        );
        ensure!(self.min_count >= 1, "min_count must be at least 1");
        ensure!(self.workers >= 1, "workers must be at least 1");
        if let Some(e) = &self.bucket_edges {
            ensure!(
                e.windows(2).all(|w| w[0] < w[1]),
                "bucket edges must be strictly increasing"
            );
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}

fn channel_index(c: Channel) -> u64 {
    match c {
        Channel::Short => 0,
        Channel::Long => 1,
    }
}

/// Both channels split into train and test, encoded with one shared vocabulary.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub embeddings: Tensor,
    pub num_classes: usize,
    short_train: Vec<Bag>,
    short_test: Vec<Bag>,
    long_train: Vec<Bag>,
    long_test: Vec<Bag>,
}

impl PreparedData {
    /// Holds out `test_fraction` of each channel, builds the vocabulary from
    /// the training splits and all unlabeled text, and initialises the
    /// embedding table (from `pretrained` where it has vectors).
    pub fn new(short: &Corpus, long: &Corpus, cfg: &ProtocolConfig, pretrained: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        ensure!(
            short.channel == Channel::Short && long.channel == Channel::Long,
            "expected a short and a long corpus"
        );
        ensure!(
            short.num_classes == long.num_classes,
            "corpora disagree on the number of classes ({} vs {})",
            short.num_classes,
            long.num_classes
        );
        ensure!(
            short.num_classes == cfg.model.num_classes,
            "corpora have {} classes but the model is configured for {}",
            short.num_classes,
            cfg.model.num_classes
        );
        let seed = cfg.seed();
        let (s_train, s_test) = short.split_holdout(cfg.test_fraction, derive_seed(seed, "holdout", &[0]));
        let (l_train, l_test) = long.split_holdout(cfg.test_fraction, derive_seed(seed, "holdout", &[1]));
        ensure!(
            !s_test.is_empty() && !l_test.is_empty(),
            "test splits are empty; the corpora are too small"
        );
        let texts = s_train
            .texts
            .iter()
            .chain(&l_train.texts)
            .map(|t| &t.tokens)
            .chain(short.unlabeled.iter())
            .chain(long.unlabeled.iter());
        let vocab = Vocabulary::build(texts, cfg.min_count)?;
        let emb_seed = derive_seed(seed, "embeddings", &[]);
        let embeddings = match pretrained {
            Some(path) => {
                let (table, report) = load_embeddings(path, &vocab, cfg.model.embed_dim, emb_seed)?;
                info!(
                    "embeddings: {} of {} vocabulary words found ({:.1}%)",
                    report.found,
                    report.found + report.missing,
                    100.0 * report.coverage
                );
                table
            }
            None => random_embeddings(vocab.len(), cfg.model.embed_dim, emb_seed),
        };
        let bags = |c: &Corpus| c.bags(&vocab, &cfg.segmenter);
        Ok(Self {
            short_train: bags(&s_train),
            short_test: bags(&s_test),
            long_train: bags(&l_train),
            long_test: bags(&l_test),
            num_classes: short.num_classes,
            embeddings,
            vocab,
        })
    }

    pub fn train_split(&self, c: Channel) -> &[Bag] {
        match c {
            Channel::Short => &self.short_train,
            Channel::Long => &self.long_train,
        }
    }

    pub fn test_split(&self, c: Channel) -> &[Bag] {
        match c {
            Channel::Short => &self.short_test,
            Channel::Long => &self.long_test,
        }
    }
}

/// Per-epoch history of one training run, for the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub run_id: String,
    pub fold: usize,
    pub lambda: Real,
    pub selected_epoch: Option<usize>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Serialize)]
struct EpochLine<'a> {
    run_id: &'a str,
    fold: usize,
    lambda: Real,
    stage: Stage,
    epoch: usize,
    loss: Real,
    losses: LossParts,
    dev_accuracy: Option<Real>,
}

impl RunLog {
    /// One JSON object per epoch, newline-terminated.
    pub fn json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(&EpochLine {
                run_id: &self.run_id,
                fold: self.fold,
                lambda: self.lambda,
                stage: e.stage,
                epoch: e.epoch,
                loss: e.loss.total(),
                losses: e.loss,
                dev_accuracy: e.dev_accuracy,
            })?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutput {
    pub report: MetricsReport,
    pub runs: Vec<RunLog>,
}

/// What one fold's trained model scored.
struct FoldResult {
    fold: usize,
    lambda: Real,
    log: RunLog,
    dev_accuracy: Option<Real>,
    source_accuracy: Real,
    target_predictions: Vec<usize>,
    target_buckets: Vec<LengthBucket>,
}

fn golds(data: &[Bag]) -> Result<Vec<usize>> {
    data.iter()
        .map(|b| b.label.ok_or_else(|| Error::contract("evaluation text has no label")))
        .collect()
}

fn predictions(model: &Model, data: &[Bag]) -> Result<Vec<usize>> {
    data.iter().map(|b| model.predict(b)).collect()
}

fn pick(data: &[Bag], idx: &[usize]) -> Vec<Bag> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

fn fine_rmse(preds: &[usize], golds: &[usize], num_classes: usize) -> Result<Option<Real>> {
    if num_classes <= 2 {
        return Ok(None);
    }
    let p: Vec<usize> = preds.iter().map(|&c| class_to_score(c)).collect();
    let g: Vec<usize> = golds.iter().map(|&c| class_to_score(c)).collect();
    rmse(&p, &g, num_classes).map(Some)
}

struct Job<'a> {
    kind: ModelKind,
    source: Channel,
    target: Channel,
    fold: usize,
    lambda: Real,
    run_id: &'a str,
}

/// Trains one fold on the source channel and scores it on the fold's held-out
/// source slice and on the target test split.
fn run_fold(
    job: &Job,
    data: &PreparedData,
    split: &crate::datasets::FoldSplit,
    cfg: &ProtocolConfig,
    train_cfg: &TrainConfig,
    edges: &[usize],
) -> Result<FoldResult> {
    let source = data.train_split(job.source);
    let ch = channel_index(job.source);
    let mut tcfg = train_cfg.clone();
    tcfg.lambda = job.lambda;
    tcfg.seed = derive_seed(cfg.seed(), "train", &[ch, job.fold as u64]);
    let mut init = rng_for(cfg.seed(), "init", &[ch, job.fold as u64]);
    let model = Model::random(job.kind, &cfg.model, data.embeddings.clone(), &mut init)?;
    let outcome = train(model, &pick(source, &split.train), &pick(source, &split.dev), &tcfg)?;
    let model = outcome.model;

    let held_out = pick(source, &split.test);
    let source_accuracy = accuracy(&predictions(&model, &held_out)?, &golds(&held_out)?)?;
    let target = data.test_split(job.target);
    let target_predictions = predictions(&model, target)?;
    let outcomes: Vec<(usize, bool)> = target
        .iter()
        .zip(&target_predictions)
        .map(|(b, &p)| (b.token_count(), Some(p) == b.label))
        .collect();
    Ok(FoldResult {
        fold: job.fold,
        lambda: job.lambda,
        log: RunLog {
            run_id: job.run_id.to_owned(),
            fold: job.fold,
            lambda: job.lambda,
            selected_epoch: outcome.history.selected_epoch,
            epochs: outcome.history.epochs,
        },
        dev_accuracy: outcome.history.best_dev_accuracy,
        source_accuracy,
        target_predictions,
        target_buckets: length_buckets(&outcomes, edges)?,
    })
}

/// Trains `kind` on `source` for every fold and every lambda, in parallel when
/// `cfg.workers > 1`. Results come back in (lambda, fold) order.
fn run_folds(
    kind: ModelKind,
    source: Channel,
    target: Channel,
    lambdas: &[Real],
    data: &PreparedData,
    cfg: &ProtocolConfig,
    train_cfg: &TrainConfig,
    run_id: &str,
) -> Result<Vec<FoldResult>> {
    let n = data.train_split(source).len();
    let plan = FoldPlan::new(n, cfg.folds, derive_seed(cfg.seed(), "folds", &[channel_index(source)]))?;
    let splits = kfold_split(&plan);
    let test = data.test_split(target);
    let edges = match &cfg.bucket_edges {
        Some(e) => e.clone(),
        None => decile_edges(&test.iter().map(Bag::token_count).collect::<Vec<_>>()),
    };
    let jobs: Vec<Job> = lambdas
        .iter()
        .flat_map(|&lambda| {
            (0..cfg.folds).map(move |fold| Job {
                kind,
                source,
                target,
                fold,
                lambda,
                run_id,
            })
        })
        .collect();
    let work = |job: &Job| run_fold(job, data, &splits[job.fold], cfg, train_cfg, &edges);
    let results: Vec<Result<FoldResult>> = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::contract(format!("cannot start worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(work).collect())
    } else {
        jobs.iter().map(work).collect()
    };
    results.into_iter().collect()
}

/// Trains the CNN in-channel on `channel` (same folds as any out-channel run
/// from that channel's counterpart) and scores it on `channel`'s test split.
pub fn run_in_channel_baseline(
    data: &PreparedData,
    channel: Channel,
    cfg: &ProtocolConfig,
) -> Result<(BaselineMetrics, Vec<RunLog>)> {
    cfg.validate()?;
    let mut tcfg = cfg.train.clone();
    tcfg.direction = match channel {
        Channel::Long => Direction::LongToShort,
        Channel::Short => Direction::ShortToLong,
    };
    let run_id = format!("CNN/in-channel/{}", channel_name(channel));
    let results = run_folds(ModelKind::Cnn, channel, channel, &[tcfg.lambda], data, cfg, &tcfg, &run_id)?;
    let g = golds(data.test_split(channel))?;
    let mut accs = Vec::with_capacity(results.len());
    let mut rmses = Vec::new();
    for r in &results {
        accs.push(accuracy(&r.target_predictions, &g)?);
        if let Some(v) = fine_rmse(&r.target_predictions, &g, data.num_classes)? {
            rmses.push(v);
        }
    }
    let acc = mean(&accs)?;
    info!("in-channel CNN on {}: accuracy {acc:.4}", channel_name(channel));
    Ok((
        BaselineMetrics {
            channel,
            accuracy: acc,
            error: 1.0 - acc,
            rmse: mean(&rmses).ok(),
            fold_accuracies: accs,
        },
        results.into_iter().map(|r| r.log).collect(),
    ))
}

fn channel_name(c: Channel) -> &'static str {
    match c {
        Channel::Short => "short",
        Channel::Long => "long",
    }
}

/// Out-channel protocol: `kind` is trained on the source channel of
/// `cfg.train.direction` with k-fold cross-validation, every fold's model is
/// scored on the target channel's test split, and the target's in-channel CNN
/// gives transfer loss and ratio. A precomputed `baseline` for the target
/// channel is reused when given.
///
/// For LeTraNets with prediction regularization and a non-empty lambda grid,
/// every grid value is trained on all folds and the one with the best mean
/// dev accuracy is reported.
pub fn run_transfer_protocol(
    kind: ModelKind,
    data: &PreparedData,
    cfg: &ProtocolConfig,
    baseline: Option<&BaselineMetrics>,
) -> Result<ProtocolOutput> {
    cfg.validate()?;
    let direction = cfg.train.direction;
    let (source, target) = (direction.source(), direction.target());
    let mut runs = Vec::new();
    let baseline = match baseline {
        Some(b) => {
            ensure!(
                b.channel == target,
                "baseline was trained on the {} channel, the target is {}",
                channel_name(b.channel),
                channel_name(target)
            );
            b.clone()
        }
        None => {
            let (b, logs) = run_in_channel_baseline(data, target, cfg)?;
            runs.extend(logs);
            b
        }
    };

    let mechanisms = if kind == ModelKind::LeTraNets {
        cfg.train.mechanisms
    } else {
        Mechanisms::NONE
    };
    let variant = if kind == ModelKind::LeTraNets {
        mechanisms.label()
    } else {
        kind.to_string()
    };
    let tune = kind == ModelKind::LeTraNets && mechanisms.pr && !cfg.train.lambda_grid.is_empty();
    let lambdas = if tune {
        cfg.train.lambda_grid.clone()
    } else {
        vec![cfg.train.lambda]
    };
    let run_id = format!("{kind}/{direction}/{variant}");
    let results = run_folds(kind, source, target, &lambdas, data, cfg, &cfg.train, &run_id)?;
    runs.extend(results.iter().map(|r| r.log.clone()));

    let (lambda, lambda_scores) = if tune {
        let choice = tune_lambda(&lambdas, |l| {
            let devs: Vec<Real> = results
                .iter()
                .filter(|r| r.lambda == l)
                .map(|r| r.dev_accuracy.unwrap_or(0.0))
                .collect();
            mean(&devs)
        })?;
        (choice.lambda, choice.scores)
    } else {
        (cfg.train.lambda, Vec::new())
    };
    let chosen: Vec<&FoldResult> = results.iter().filter(|r| r.lambda == lambda).collect();

    let g = golds(data.test_split(target))?;
    let mut folds = Vec::with_capacity(chosen.len());
    for r in &chosen {
        let acc = accuracy(&r.target_predictions, &g)?;
        folds.push(FoldMetrics {
            fold: r.fold,
            selected_epoch: r.log.selected_epoch,
            dev_accuracy: r.dev_accuracy,
            source_accuracy: r.source_accuracy,
            accuracy: acc,
            error: 1.0 - acc,
            rmse: fine_rmse(&r.target_predictions, &g, data.num_classes)?,
            transfer_loss: transfer_loss(1.0 - acc, baseline.error),
        });
    }
    let acc = mean(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>())?;
    let error = 1.0 - acc;
    let rmses: Vec<Real> = folds.iter().filter_map(|f| f.rmse).collect();
    let ratio = match transfer_ratio(&[error], &[baseline.error]) {
        Ok(r) => Some(r),
        Err(Error::ZeroBaselineError { .. }) => None,
        Err(e) => return Err(e),
    };
    let per_length = mean_buckets(&chosen.iter().map(|r| r.target_buckets.clone()).collect::<Vec<_>>())?;
    let report = MetricsReport {
        model: kind,
        direction,
        mechanisms,
        variant,
        num_classes: data.num_classes,
        seed: cfg.seed(),
        lambda,
        lambda_scores,
        source_train_size: data.train_split(source).len(),
        target_test_size: g.len(),
        accuracy: acc,
        error,
        rmse: mean(&rmses).ok(),
        source_accuracy: mean(&folds.iter().map(|f| f.source_accuracy).collect::<Vec<_>>())?,
        transfer_loss: transfer_loss(error, baseline.error),
        transfer_ratio: ratio,
        in_channel: baseline,
        folds,
        per_length,
    };
    info!(
        "{run_id}: target accuracy {:.4}, TL {:.2}",
        report.accuracy, report.transfer_loss
    );
    Ok(ProtocolOutput { report, runs })
}

/// Mechanism settings for an ablation over `names` (any of `jt`, `pr`, `sp`):
/// one single-mechanism variant per name, then all three together. An empty
/// list gives the no-mechanism row and the full model.
pub fn ablation_variants(names: &[&str]) -> Result<Vec<Mechanisms>> {
    let mut out = Vec::new();
    if names.is_empty() {
        out.push(Mechanisms::NONE);
    }
    for n in names {
        let m = Mechanisms::only(n)?;
        ensure!(
            m != Mechanisms::ALL && m != Mechanisms::NONE,
            "ablation takes jt, pr or sp, got `{n}`"
        );
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out.push(Mechanisms::ALL);
    Ok(out)
}

/// LeTraNets under each mechanism setting, sharing one in-channel baseline.
pub fn run_ablation(
    data: &PreparedData,
    cfg: &ProtocolConfig,
    variants: &[Mechanisms],
    baseline: Option<&BaselineMetrics>,
) -> Result<Vec<ProtocolOutput>> {
    let mut runs = Vec::new();
    let baseline = match baseline {
        Some(b) => b.clone(),
        None => {
            let (b, logs) = run_in_channel_baseline(data, cfg.train.direction.target(), cfg)?;
            runs = logs;
            b
        }
    };
    let mut out = Vec::with_capacity(variants.len());
    for (i, &m) in variants.iter().enumerate() {
        let mut c = cfg.clone();
        c.train.mechanisms = m;
        let mut o = run_transfer_protocol(ModelKind::LeTraNets, data, &c, Some(&baseline))?;
        if i == 0 {
            o.runs.splice(0..0, runs.drain(..));
        }
        out.push(o);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_synthetic, SyntheticConfig};

    fn tiny_cfg(direction: Direction) -> ProtocolConfig {
        ProtocolConfig {
            model: ModelConfig {
                embed_dim: 8,
                filter_widths: vec![2, 3],
                feature_maps: 4,
                attention_dim: 4,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                direction,
                max_epochs: 2,
                pretrain_epochs: 1,
                lambda_grid: vec![],
                ..TrainConfig::default()
            },
            folds: 2,
            ..ProtocolConfig::default()
        }
    }

    fn tiny_data(cfg: &ProtocolConfig) -> PreparedData {
        let syn = gen_synthetic(&SyntheticConfig {
            num_short: 40,
            num_long: 40,
            segments_per_long: (2, 3),
            ..SyntheticConfig::default()
        })
        .unwrap();
        PreparedData::new(&syn.short, &syn.long, cfg, None).unwrap()
    }

    #[test]
    fn holdout_sizes() {
        let cfg = tiny_cfg(Direction::LongToShort);
        let d = tiny_data(&cfg);
        assert_eq!(d.train_split(Channel::Short).len(), 32);
        assert_eq!(d.test_split(Channel::Long).len(), 8);
        assert!(d.test_split(Channel::Long).iter().all(|b| b.len() >= 2));
    }

    #[test]
    fn report_structure() {
        for direction in Direction::BOTH {
            let cfg = tiny_cfg(direction);
            let d = tiny_data(&cfg);
            let out = run_transfer_protocol(ModelKind::LeTraNets, &d, &cfg, None).unwrap();
            let r = &out.report;
            assert_eq!(r.folds.len(), 2);
            assert_eq!(r.in_channel.channel, direction.target());
            assert_eq!(r.target_test_size, 8);
            assert_eq!(r.per_length.iter().map(|b| b.count).sum::<usize>(), 8);
            let m = mean(&r.folds.iter().map(|f| f.accuracy).collect::<Vec<_>>()).unwrap();
            assert_eq!(m, r.accuracy);
            let tl = mean(&r.folds.iter().map(|f| f.transfer_loss).collect::<Vec<_>>()).unwrap();
            assert!((tl - r.transfer_loss).abs() < 1e-6);
            assert_eq!(r.accuracy + r.error, 1.0);
            assert_eq!(r.rmse, None);
            // two baseline folds and two transfer folds
            assert_eq!(out.runs.len(), 4);
            assert!(!out.runs[3].json_lines().unwrap().is_empty());
        }
    }

    #[test]
    fn lambda_grid_is_searched_for_regularized_letranets() {
        let mut cfg = tiny_cfg(Direction::LongToShort);
        cfg.train.lambda_grid = vec![0.01, 1.0];
        let d = tiny_data(&cfg);
        let (b, _) = run_in_channel_baseline(&d, Channel::Short, &cfg).unwrap();
        let out = run_transfer_protocol(ModelKind::LeTraNets, &d, &cfg, Some(&b)).unwrap();
        assert_eq!(out.report.lambda_scores.len(), 2);
        assert!(cfg.train.lambda_grid.contains(&out.report.lambda));
        assert_eq!(out.runs.len(), 4);
        let cnn = run_transfer_protocol(ModelKind::Cnn, &d, &cfg, Some(&b)).unwrap();
        assert!(cnn.report.lambda_scores.is_empty());
    }

    #[test]
    fn workers_do_not_change_results() {
        let cfg = tiny_cfg(Direction::ShortToLong);
        let d = tiny_data(&cfg);
        let a = run_transfer_protocol(ModelKind::BaggedCnn, &d, &cfg, None).unwrap();
        let par = ProtocolConfig { workers: 2, ..cfg };
        let b = run_transfer_protocol(ModelKind::BaggedCnn, &d, &par, None).unwrap();
        assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
    }

    #[test]
    fn mismatched_baseline_is_rejected() {
        let cfg = tiny_cfg(Direction::LongToShort);
        let d = tiny_data(&cfg);
        let (b, _) = run_in_channel_baseline(&d, Channel::Long, &cfg).unwrap();
        assert!(run_transfer_protocol(ModelKind::Cnn, &d, &cfg, Some(&b)).is_err());
    }

    #[test]
    fn ablation_variant_rows() {
        let v = ablation_variants(&["jt", "pr", "sp"]).unwrap();
        let labels: Vec<String> = v.iter().map(|m| m.label()).collect();
        assert_eq!(labels, vec!["JT", "PR", "SP", "All"]);
        assert_eq!(ablation_variants(&[]).unwrap().len(), 2);
        assert!(ablation_variants(&["all"]).is_err());
        assert!(ablation_variants(&["xx"]).is_err());
    }

    #[test]
    fn class_mismatch_is_rejected() {
        let mut cfg = tiny_cfg(Direction::LongToShort);
        cfg.model.num_classes = 5;
        let syn = gen_synthetic(&SyntheticConfig {
            num_short: 20,
            num_long: 20,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert!(PreparedData::new(&syn.short, &syn.long, &cfg, None).is_err());
    }
}
