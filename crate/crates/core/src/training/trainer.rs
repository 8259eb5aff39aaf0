use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::Serialize;

use super::losses::{batch_loss, pr_detach_direction, LossParts, PrRole, Terms};
use super::{Direction, TrainConfig};
use crate::error::{Error, Result};
use crate::models::{LeTraNets, Model, TestHead};
use crate::numcore::{maxnorm_constrain, Adadelta, HasParameters, Parameter, Real};
use crate::seed::rng_for;
use crate::textproc::{make_pseudo_long, Bag, Instance, PseudoLongConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    /// Stepwise pretraining: the stronger classifier.
    #[serde(rename = "sp1")]
    Stronger,
    /// Stepwise pretraining: the weaker classifier, regularized.
    #[serde(rename = "sp2")]
    Weaker,
    /// Stepwise pretraining: the joint head.
    #[serde(rename = "sp3")]
    Joint,
    #[serde(rename = "full")]
    Full,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Stronger => 1,
            Stage::Weaker => 2,
            Stage::Joint => 3,
            Stage::Full => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    /// Mean per-batch loss components over the epoch.
    pub loss: LossParts,
    pub dev_accuracy: Option<Real>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub lambda: Real,
    pub epochs: Vec<EpochRecord>,
    /// Full-training epoch whose parameters were kept.
    pub selected_epoch: Option<usize>,
    pub best_dev_accuracy: Option<Real>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: TrainHistory,
}

/// Fraction of `data` classified correctly at native length.
pub(crate) fn dev_accuracy(model: &Model, data: &[Bag]) -> Result<Real> {
    let mut hits = 0usize;
    for bag in data {
        let gold = bag
            .label
            .ok_or_else(|| Error::contract("dev instance has no label"))?;
        hits += usize::from(model.predict(bag)? == gold);
    }
    Ok(hits as Real / data.len() as Real)
}

fn full_terms(cfg: &TrainConfig) -> Terms {
    Terms {
        lone: true,
        bag: true,
        joint: cfg.mechanisms.jt,
        reg: cfg.mechanisms.pr,
    }
}

fn diverged(epoch: usize, err: Error, last_good: Option<&Model>) -> Error {
    let detail = match err {
        Error::NonFinite(d) => d,
        Error::NonFiniteGradient { param, index } => {
            format!("non-finite gradient in `{param}` at element {index}")
        }
        other => return other,
    };
    Error::Divergence {
        epoch,
        detail,
        last_good: last_good.map(|m| Box::new(m.clone())),
    }
}

/// One pass over `data` in a seeded shuffled order.
fn run_epoch(
    model: &mut Model,
    data: &[Bag],
    cfg: &TrainConfig,
    terms: Terms,
    opt: &mut Adadelta,
    stage: Stage,
    epoch: usize,
    last_good: Option<&Model>,
) -> Result<LossParts> {
    let mut rng = rng_for(cfg.seed, "epoch", &[stage.tag(), epoch as u64]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let pseudo_cfg = PseudoLongConfig {
        k_min: cfg.pseudo_k_min,
        k_max: cfg.pseudo_k_max,
        seed: cfg.seed,
    };
    let wants_pseudo = matches!(model, Model::LeTraNets(_))
        && cfg.direction == Direction::ShortToLong
        && terms.reg;
    let mut mean = LossParts {
        lambda: cfg.lambda,
        ..LossParts::default()
    };
    let batches = order.chunks(cfg.batch_size).count() as Real;
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<&Bag> = chunk.iter().map(|&i| &data[i]).collect();
        let pseudo = if wants_pseudo {
            let pool: Vec<Instance> = batch
                .iter()
                .map(|b| Instance {
                    tokens: b.flat_tokens(),
                    label: b.label.unwrap_or_default(),
                })
                .collect();
            Some(make_pseudo_long(&pool, &pseudo_cfg, &mut rng))
        } else {
            None
        };
        model.zero_grad();
        let parts = batch_loss(
            model,
            &batch,
            pseudo.as_ref(),
            None,
            cfg.direction,
            cfg.lambda,
            terms,
            crate::numcore::Mode::Train,
            &mut rng,
            true,
        )
        .map_err(|e| diverged(epoch, e, last_good))?;
        opt.step(&mut model.parameters_mut())
            .map_err(|e| diverged(epoch, e, last_good))?;
        for w in model.head_weights_mut() {
            if w.trainable {
                maxnorm_constrain(w, cfg.max_norm);
            }
        }
        mean.lone += parts.lone / batches;
        mean.bag += parts.bag / batches;
        mean.joint += parts.joint / batches;
        mean.reg += parts.reg / batches;
    }
    Ok(mean)
}

fn enable(params: Vec<&mut Parameter>) {
    for p in params {
        p.trainable = true;
    }
}

/// Stepwise pretraining of a LeTraNets model: the stronger classifier for the
/// source length (with the shared embedding), then the weaker classifier with
/// the prediction regularizer (embedding and reference frozen), then the joint
/// head alone. Stages whose mechanism is disabled are skipped; any other model,
/// or SP switched off, passes through untouched.
pub fn stepwise_pretrain(
    model: &mut Model,
    train_set: &[Bag],
    cfg: &TrainConfig,
    history: &mut TrainHistory,
) -> Result<()> {
    if !cfg.mechanisms.sp || !matches!(model, Model::LeTraNets(_)) || cfg.pretrain_epochs == 0 {
        return Ok(());
    }
    let (strong, _) = pr_detach_direction(cfg.direction);
    let only = |role: PrRole, reg: bool| Terms {
        lone: role == PrRole::Lone,
        bag: role == PrRole::Bag,
        joint: false,
        reg,
    };
    let weak = if strong == PrRole::Lone { PrRole::Bag } else { PrRole::Lone };
    let mut stages = vec![
        (Stage::Stronger, only(strong, false), strong, true),
        (Stage::Weaker, only(weak, cfg.mechanisms.pr), weak, false),
    ];
    if cfg.mechanisms.jt {
        let joint = Terms {
            joint: true,
            ..Terms::NONE
        };
        stages.push((Stage::Joint, joint, strong, false));
    }
    for (stage, terms, role, with_embedding) in stages {
        model.set_trainable(false);
        if let Model::LeTraNets(m) = model {
            select(m, stage, role, with_embedding);
        }
        let mut opt = Adadelta::new(cfg.rho, cfg.epsilon);
        for epoch in 0..cfg.pretrain_epochs {
            let loss = run_epoch(model, train_set, cfg, terms, &mut opt, stage, epoch, None)?;
            debug!("{stage:?} epoch {epoch}: loss {:.4}", loss.total());
            history.epochs.push(EpochRecord {
                stage,
                epoch,
                loss,
                dev_accuracy: None,
            });
        }
    }
    model.set_trainable(true);
    Ok(())
}

fn select(m: &mut LeTraNets, stage: Stage, role: PrRole, with_embedding: bool) {
    if stage == Stage::Joint {
        enable(m.head_j.parameters_mut());
        return;
    }
    match role {
        PrRole::Lone => enable(m.lone_parameters_mut()),
        PrRole::Bag => enable(m.bag_parameters_mut()),
    }
    m.embedding.table.trainable = with_embedding;
}

/// Trains `model` on `train_set` (source channel, labeled), selecting the
/// epoch with the best accuracy on `dev_set` (earliest on ties) and stopping
/// after `patience` epochs without improvement. An empty dev set keeps the
/// last epoch.
pub fn train(mut model: Model, train_set: &[Bag], dev_set: &[Bag], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    crate::error::ensure!(!train_set.is_empty(), "training set is empty");
    let started = Instant::now();
    let mut history = TrainHistory {
        lambda: cfg.lambda,
        ..TrainHistory::default()
    };
    if let Model::LeTraNets(m) = &mut model {
        m.use_joint = cfg.mechanisms.jt;
        m.test_head = match cfg.direction {
            Direction::LongToShort => TestHead::Document,
            Direction::ShortToLong => TestHead::SegmentMean,
        };
    }
    model.set_trainable(true);
    stepwise_pretrain(&mut model, train_set, cfg, &mut history)?;

    let terms = full_terms(cfg);
    let mut opt = Adadelta::new(cfg.rho, cfg.epsilon);
    let mut best: Option<(Real, usize, Model)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.max_epochs {
        let last_good = best.as_ref().map(|b| &b.2);
        let loss = run_epoch(&mut model, train_set, cfg, terms, &mut opt, Stage::Full, epoch, last_good)?;
        let acc = if dev_set.is_empty() {
            None
        } else {
            Some(dev_accuracy(&model, dev_set)?)
        };
        debug!(
            "{} epoch {epoch}: loss {:.4} dev {:?}",
            model.kind(),
            loss.total(),
            acc
        );
        history.epochs.push(EpochRecord {
            stage: Stage::Full,
            epoch,
            loss,
            dev_accuracy: acc,
        });
        let score = acc.unwrap_or(Real::INFINITY);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => score > *b || acc.is_none(),
        };
        if improved {
            best = Some((score, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    let (score, epoch, model) = best.expect("at least one epoch ran");
    history.selected_epoch = Some(epoch);
    history.best_dev_accuracy = score.is_finite().then_some(score);
    history.wall_time_secs = started.elapsed().as_secs_f64();
    info!(
        "{} trained: selected epoch {epoch}, dev accuracy {:?}, {:.1}s",
        model.kind(),
        history.best_dev_accuracy,
        history.wall_time_secs
    );
    Ok(TrainOutcome { model, history })
}
