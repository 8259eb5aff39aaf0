use rand::Rng;
use serde::Serialize;

use super::Direction;
use crate::error::{ensure, Error, Result};
use crate::models::{BaggedGrads, Heads, LeTraNets, LeTraNetsGrads, Model};
use crate::numcore::{cross_entropy, cross_entropy_grad, kl_grad_q, kl_unchecked, Mode, Real};
use crate::textproc::Bag;

/// Loss components, averaged the same way as the objective they came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub lone: Real,
    pub bag: Real,
    pub joint: Real,
    pub reg: Real,
    pub lambda: Real,
}

impl LossParts {
    pub fn total(&self) -> Real {
        self.lone + self.bag + self.joint + self.lambda * self.reg
    }

    fn add_scaled(&mut self, o: &LossParts, w: Real) {
        self.lone += w * o.lone;
        self.bag += w * o.bag;
        self.joint += w * o.joint;
        self.reg += w * o.reg;
        self.lambda = o.lambda;
    }

    fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

/// Which terms of a LeTraNets objective are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub lone: bool,
    pub bag: bool,
    pub joint: bool,
    pub reg: bool,
}

impl Terms {
    pub const FULL: Terms = Terms {
        lone: true,
        bag: true,
        joint: true,
        reg: true,
    };
    pub const NONE: Terms = Terms {
        lone: false,
        bag: false,
        joint: false,
        reg: false,
    };
}

/// One of the two LeTraNets classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PrRole {
    /// `CNN_lone` and its head.
    Lone,
    /// The BaggedCNN path and its head.
    Bag,
}

/// `(reference, regularized)` classifiers of the prediction regularizer. The
/// reference is the stronger classifier for the source length and receives no
/// gradient from the regularizer.
pub fn pr_detach_direction(direction: Direction) -> (PrRole, PrRole) {
    match direction {
        Direction::LongToShort => (PrRole::Bag, PrRole::Lone),
        Direction::ShortToLong => (PrRole::Lone, PrRole::Bag),
    }
}

fn gold_of(bag: &Bag) -> Result<usize> {
    bag.label
        .or_else(|| match bag.segments.as_slice() {
            [only] => only.label,
            _ => None,
        })
        .ok_or_else(|| Error::contract("training instance has no gold label"))
}

fn scaled(g: Vec<Real>, s: Real) -> Vec<Real> {
    g.into_iter().map(|v| v * s).collect()
}

/// `L_d = L^l_d + L^b_d + L^j_d + lambda * R_d` for one labeled long document,
/// with `R_d = sum_i KL(y^b_{s_i} || y^l_{s_i})` and `y^b` detached.
///
/// When `grad_scale` is set, gradients of `grad_scale * L_d` are accumulated.
/// `reference` replaces the live `y^b_{s_i}` with fixed distributions.
#[allow(clippy::too_many_arguments)]
pub fn loss_long<R: Rng + ?Sized>(
    model: &mut LeTraNets,
    bag: &Bag,
    reference: Option<&[Vec<Real>]>,
    lambda: Real,
    terms: Terms,
    mode: Mode,
    rng: &mut R,
    grad_scale: Option<Real>,
) -> Result<LossParts> {
    let gold = bag
        .label
        .ok_or_else(|| Error::contract("long document has no gold label"))?;
    let heads = Heads {
        lone_doc: terms.lone,
        bag_doc: terms.bag,
        joint_doc: terms.joint,
        lone_seg: terms.reg,
        bag_seg: terms.reg && reference.is_none(),
        joint_seg: false,
    };
    let out = model.forward(bag, heads, mode, rng)?;
    let mut parts = LossParts {
        lambda,
        ..LossParts::default()
    };
    let mut grads = LeTraNetsGrads::default();
    let s = grad_scale.unwrap_or(0.0);
    if let Some(y) = &out.lone_doc {
        parts.lone = cross_entropy(y, gold)?;
        grads.lone_doc = Some(scaled(cross_entropy_grad(y, gold), s));
    }
    if let Some(y) = &out.bag_doc {
        parts.bag = cross_entropy(y, gold)?;
        grads.bag_doc = Some(scaled(cross_entropy_grad(y, gold), s));
    }
    if let Some(y) = &out.joint_doc {
        parts.joint = cross_entropy(y, gold)?;
        grads.joint_doc = Some(scaled(cross_entropy_grad(y, gold), s));
    }
    if terms.reg {
        let live = out.bag_seg.as_slice();
        let refs = reference.unwrap_or(live);
        ensure!(refs.len() == bag.len(), "one reference distribution per segment required");
        for (p, q) in refs.iter().zip(&out.lone_seg) {
            parts.reg += kl_unchecked(p, q);
            grads.lone_seg.push(Some(scaled(kl_grad_q(p, q), s * lambda)));
        }
    }
    if grad_scale.is_some() {
        model.backward(&out, &grads);
    }
    Ok(parts)
}

/// `L_s = sum_i (L^l_{s_i} + L^b_{s_i} + L^j_{s_i}) / n + lambda * R_s` for a
/// batch of labeled short texts, with `R_s = KL(y^l_d || y^b_d)` on `pseudo`
/// (a pseudo-long text built from the batch) and `y^l_d` detached.
/// `reference` replaces the live `y^l_d` with a fixed distribution.
#[allow(clippy::too_many_arguments)]
pub fn loss_short<R: Rng + ?Sized>(
    model: &mut LeTraNets,
    shorts: &[&Bag],
    pseudo: Option<&Bag>,
    reference: Option<&[Real]>,
    lambda: Real,
    terms: Terms,
    mode: Mode,
    rng: &mut R,
    grad_scale: Option<Real>,
) -> Result<LossParts> {
    ensure!(!shorts.is_empty(), "empty batch of short texts");
    let n = shorts.len() as Real;
    let s = grad_scale.unwrap_or(0.0);
    let mut parts = LossParts {
        lambda,
        ..LossParts::default()
    };
    let heads = Heads {
        lone_seg: terms.lone,
        bag_seg: terms.bag,
        joint_seg: terms.joint,
        ..Heads::default()
    };
    if terms.lone || terms.bag || terms.joint {
        for short in shorts {
            ensure!(short.len() == 1, "a short text must be a one-segment bag");
            let gold = gold_of(short)?;
            let out = model.forward(short, heads, mode, rng)?;
            let mut grads = LeTraNetsGrads::default();
            for (probs, loss, grad) in [
                (&out.lone_seg, &mut parts.lone, &mut grads.lone_seg),
                (&out.bag_seg, &mut parts.bag, &mut grads.bag_seg),
                (&out.joint_seg, &mut parts.joint, &mut grads.joint_seg),
            ] {
                if let Some(y) = probs.first() {
                    *loss += cross_entropy(y, gold)? / n;
                    grad.push(Some(scaled(cross_entropy_grad(y, gold), s / n)));
                }
            }
            if grad_scale.is_some() {
                model.backward(&out, &grads);
            }
        }
    }
    if terms.reg {
        let pseudo = pseudo.ok_or_else(|| Error::contract("R_s needs a pseudo-long text"))?;
        let heads = Heads {
            lone_doc: reference.is_none(),
            bag_doc: true,
            ..Heads::default()
        };
        let out = model.forward(pseudo, heads, mode, rng)?;
        let p = match reference {
            Some(r) => r,
            None => out.lone_doc.as_deref().unwrap(),
        };
        let q = out.bag_doc.as_ref().unwrap();
        parts.reg = kl_unchecked(p, q);
        if grad_scale.is_some() {
            let grads = LeTraNetsGrads {
                bag_doc: Some(scaled(kl_grad_q(p, q), s * lambda)),
                ..LeTraNetsGrads::default()
            };
            model.backward(&out, &grads);
        }
    }
    Ok(parts)
}

/// Detached side of the regularizer for one batch item: `y^b_{s_i}` per
/// segment of a long document, or `[y^l_d]` of the pseudo-long text.
pub type Reference = Vec<Vec<Real>>;

/// Eval-mode reference predictions of a LeTraNets model for a batch; empty for
/// other models.
pub fn reference_predictions(
    model: &Model,
    batch: &[&Bag],
    pseudo: Option<&Bag>,
    direction: Direction,
) -> Result<Vec<Reference>> {
    let Model::LeTraNets(m) = model else {
        return Ok(Vec::new());
    };
    let mut rng = crate::models::NoRng;
    match direction {
        Direction::LongToShort => batch
            .iter()
            .map(|bag| {
                let heads = Heads {
                    bag_seg: true,
                    ..Heads::default()
                };
                Ok(m.forward(bag, heads, Mode::Eval, &mut rng)?.bag_seg)
            })
            .collect(),
        Direction::ShortToLong => match pseudo {
            Some(p) => {
                let heads = Heads {
                    lone_doc: true,
                    ..Heads::default()
                };
                Ok(vec![vec![m.forward(p, heads, Mode::Eval, &mut rng)?.lone_doc.unwrap()]])
            }
            None => Ok(Vec::new()),
        },
    }
}

/// Batch objective for any model kind.
///
/// * CNN: mean cross-entropy over the batch (inputs read flat).
/// * BaggedCNN: mean document cross-entropy for long sources, mean segment
///   cross-entropy for short sources.
/// * LeTraNets: mean `L_d` for long sources, `L_s` for short sources.
///
/// Gradients of the returned total are accumulated when `backprop` is set.
/// `references` (see [`reference_predictions`]) pins the detached side of the
/// regularizer.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<R: Rng + ?Sized>(
    model: &mut Model,
    batch: &[&Bag],
    pseudo: Option<&Bag>,
    references: Option<&[Reference]>,
    direction: Direction,
    lambda: Real,
    terms: Terms,
    mode: Mode,
    rng: &mut R,
    backprop: bool,
) -> Result<LossParts> {
    ensure!(!batch.is_empty(), "empty batch");
    let n = batch.len() as Real;
    let scale = backprop.then_some(1.0 / n);
    let mut total = LossParts {
        lambda,
        ..LossParts::default()
    };
    match model {
        Model::Cnn(m) => {
            for bag in batch {
                let gold = gold_of(bag)?;
                let out = m.forward(&bag.flat_tokens(), mode, rng)?;
                total.lone += cross_entropy(&out.probs, gold)? / n;
                if backprop {
                    m.backward(&out, &scaled(cross_entropy_grad(&out.probs, gold), 1.0 / n));
                }
            }
        }
        Model::BaggedCnn(m) => {
            let long = direction == Direction::LongToShort;
            for bag in batch {
                let out = m.forward(bag, long, !long, mode, rng)?;
                let mut grads = BaggedGrads::default();
                if long {
                    let gold = gold_of(bag)?;
                    let y = out.doc.as_ref().unwrap();
                    total.bag += cross_entropy(y, gold)? / n;
                    grads.doc = Some(scaled(cross_entropy_grad(y, gold), 1.0 / n));
                } else {
                    let k = out.segments.len() as Real;
                    for (seg, y) in bag.segments.iter().zip(&out.segments) {
                        let gold = match seg.label.or(bag.label) {
                            Some(g) => g,
                            None => return Err(Error::contract("segment has no gold label")),
                        };
                        total.bag += cross_entropy(y, gold)? / (n * k);
                        grads
                            .segments
                            .push(Some(scaled(cross_entropy_grad(y, gold), 1.0 / (n * k))));
                    }
                }
                if backprop {
                    m.backward(&out, &grads);
                }
            }
        }
        Model::LeTraNets(m) => match direction {
            Direction::LongToShort => {
                for (i, bag) in batch.iter().enumerate() {
                    let r = references.map(|r| r[i].as_slice());
                    let parts = loss_long(m, bag, r, lambda, terms, mode, rng, scale)?;
                    total.add_scaled(&parts, 1.0 / n);
                }
            }
            Direction::ShortToLong => {
                let r = references.and_then(|r| r.first()).and_then(|r| r.first());
                let parts = loss_short(
                    m,
                    batch,
                    pseudo,
                    r.map(Vec::as_slice),
                    lambda,
                    terms,
                    mode,
                    rng,
                    backprop.then_some(1.0),
                )?;
                total.add_scaled(&parts, 1.0);
            }
        },
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {:?}", total)));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Embedding, ModelConfig, NoRng};
    use crate::numcore::Tensor;
    use rand::SeedableRng;
    use approx::assert_abs_diff_eq;

    fn cfg() -> ModelConfig {
        ModelConfig {
            num_classes: 2,
            embed_dim: 4,
            filter_widths: vec![2, 3],
            feature_maps: 3,
            attention_dim: 3,
            dropout: 0.0,
        }
    }

    fn zero_model() -> LeTraNets {
        LeTraNets::zeros(&cfg(), Embedding::new(Tensor::zeros(&[10, 4])))
    }

    fn short(tokens: Vec<u32>, label: usize) -> Bag {
        Bag::from_short(&crate::textproc::Instance { tokens, label })
    }

    #[test]
    fn detach_roles() {
        assert_eq!(pr_detach_direction(Direction::LongToShort), (PrRole::Bag, PrRole::Lone));
        assert_eq!(pr_detach_direction(Direction::ShortToLong), (PrRole::Lone, PrRole::Bag));
    }

    #[test]
    fn zero_init_one_segment_long_loss_is_three_ln2() {
        let mut m = zero_model();
        let bag = Bag::from_segments(vec![vec![2, 3, 4]], Some(1));
        let parts = loss_long(&mut m, &bag, None, 0.1, Terms::FULL, Mode::Eval, &mut NoRng, None).unwrap();
        assert_abs_diff_eq!(parts.total(), 3.0 * std::f64::consts::LN_2 as Real, epsilon = 1e-10);
        assert_eq!(parts.reg, 0.0);
    }

    #[test]
    fn zero_init_short_loss_is_three_ln2() {
        let mut m = zero_model();
        let b = short(vec![2, 3], 0);
        let terms = Terms {
            reg: false,
            ..Terms::FULL
        };
        let parts = loss_short(&mut m, &[&b], None, None, 0.0, terms, Mode::Eval, &mut NoRng, None).unwrap();
        assert_abs_diff_eq!(parts.total(), 3.0 * std::f64::consts::LN_2 as Real, epsilon = 1e-10);
    }

    #[test]
    fn lambda_zero_is_sum_of_cross_entropies() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let table = crate::datasets::random_embeddings(10, 4, 2);
        let mut m = LeTraNets::random(&cfg(), Embedding::new(table), &mut rng);
        let bag = Bag::from_segments(vec![vec![2, 3, 4], vec![5, 6]], Some(0));
        let p = loss_long(&mut m, &bag, None, 0.0, Terms::FULL, Mode::Eval, &mut NoRng, None).unwrap();
        assert_eq!(p.total(), p.lone + p.bag + p.joint);
        assert!(p.reg > 0.0);
    }

    #[test]
    fn duplicated_batch_keeps_the_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let table = crate::datasets::random_embeddings(10, 4, 3);
        let mut m = LeTraNets::random(&cfg(), Embedding::new(table), &mut rng);
        let b = short(vec![2, 7, 3], 1);
        let terms = Terms {
            reg: false,
            ..Terms::FULL
        };
        let one = loss_short(&mut m, &[&b], None, None, 0.0, terms, Mode::Eval, &mut NoRng, None).unwrap();
        let two = loss_short(&mut m, &[&b, &b], None, None, 0.0, terms, Mode::Eval, &mut NoRng, None).unwrap();
        assert_abs_diff_eq!(one.total(), two.total(), epsilon = 1e-12);
    }

    #[test]
    fn regularizer_gives_reference_no_gradient() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let table = crate::datasets::random_embeddings(10, 4, 4);
        let reg_only = Terms {
            reg: true,
            ..Terms::NONE
        };
        // long to short: the bag path is the reference
        let mut m = LeTraNets::random(&cfg(), Embedding::new(table.clone()), &mut rng);
        let bag = Bag::from_segments(vec![vec![2, 3, 4], vec![5, 6, 7]], Some(0));
        loss_long(&mut m, &bag, None, 1.0, reg_only, Mode::Eval, &mut NoRng, Some(1.0)).unwrap();
        for p in m.bag.parameters().into_iter().chain(m.head_b.parameters()).chain(m.attention.parameters()) {
            assert!(p.grad.data().iter().all(|&g| g == 0.0), "{}", p.name);
        }
        assert!(m.head_l.weight.grad.data().iter().any(|&g| g != 0.0));
        // short to long: the lone path is the reference
        let mut m = LeTraNets::random(&cfg(), Embedding::new(table), &mut rng);
        let b = short(vec![2, 3], 1);
        loss_short(&mut m, &[&b], Some(&bag), None, 1.0, reg_only, Mode::Eval, &mut NoRng, Some(1.0)).unwrap();
        for p in m.lone.parameters().into_iter().chain(m.head_l.parameters()) {
            assert!(p.grad.data().iter().all(|&g| g == 0.0), "{}", p.name);
        }
        assert!(m.head_b.weight.grad.data().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn identical_predictions_give_zero_regularizer() {
        // zero-init model: both paths predict uniform everywhere
        let mut m = zero_model();
        let bag = Bag::from_segments(vec![vec![2, 3], vec![4, 5, 6]], Some(0));
        let p = loss_long(&mut m, &bag, None, 1.0, Terms::FULL, Mode::Eval, &mut NoRng, None).unwrap();
        assert_eq!(p.reg, 0.0);
        let b = short(vec![2, 3], 1);
        let p = loss_short(&mut m, &[&b], Some(&bag), None, 1.0, Terms::FULL, Mode::Eval, &mut NoRng, None).unwrap();
        assert_eq!(p.reg, 0.0);
    }

    #[test]
    fn missing_labels_are_contract_errors() {
        let mut m = zero_model();
        let bag = Bag::from_segments(vec![vec![2, 3]], None);
        assert!(loss_long(&mut m, &bag, None, 0.1, Terms::FULL, Mode::Eval, &mut NoRng, None).is_err());
        assert!(loss_short(&mut m, &[], None, None, 0.1, Terms::FULL, Mode::Eval, &mut NoRng, None).is_err());
    }
}
