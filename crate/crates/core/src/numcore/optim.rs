use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{Parameter, Real, Tensor};
use crate::error::{Error, Result};

/// Adadelta (Zeiler, 2012) with per-parameter running averages of squared
/// gradients and squared updates, keyed by parameter name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adadelta {
    pub rho: Real,
    pub epsilon: Real,
    accumulators: BTreeMap<String, Accumulators>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Accumulators {
    sq_grad: Tensor,
    sq_update: Tensor,
}

impl Default for Adadelta {
    fn default() -> Self {
        Self::new(0.95, 1e-6)
    }
}

impl Adadelta {
    pub fn new(rho: Real, epsilon: Real) -> Self {
        assert!(rho > 0.0 && rho < 1.0, "rho must lie in (0, 1)");
        assert!(epsilon > 0.0, "epsilon must be positive");
        Self {
            rho,
            epsilon,
            accumulators: BTreeMap::new(),
        }
    }

    /// Running average of squared gradients for `name`, if the parameter has been stepped.
    pub fn sq_grad(&self, name: &str) -> Option<&Tensor> {
        self.accumulators.get(name).map(|a| &a.sq_grad)
    }

    pub fn sq_update(&self, name: &str) -> Option<&Tensor> {
        self.accumulators.get(name).map(|a| &a.sq_update)
    }

    /// Applies one update to every trainable parameter. Nothing is modified if
    /// any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        for p in params.iter().filter(|p| p.trainable) {
            if let Some(index) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    param: p.name.clone(),
                    index,
                });
            }
        }
        let (rho, eps) = (self.rho, self.epsilon);
        for p in params.iter_mut().filter(|p| p.trainable) {
            let acc = self
                .accumulators
                .entry(p.name.clone())
                .or_insert_with(|| Accumulators {
                    sq_grad: Tensor::zeros(p.value.shape()),
                    sq_update: Tensor::zeros(p.value.shape()),
                });
            debug_assert_eq!(acc.sq_grad.shape(), p.value.shape());
            let Parameter { value, grad, .. } = &mut **p;
            let eg = acc.sq_grad.data_mut();
            let ex = acc.sq_update.data_mut();
            for (((x, &g), eg), ex) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(eg.iter_mut())
                .zip(ex.iter_mut())
            {
                *eg = rho * *eg + (1.0 - rho) * g * g;
                let dx = -((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
                *ex = rho * *ex + (1.0 - rho) * dx * dx;
                *x += dx;
            }
        }
        Ok(())
    }
}

/// Rescales every row of a 2-D parameter whose l2 norm exceeds `c` onto the
/// sphere of radius `c`.
pub fn maxnorm_constrain(param: &mut Parameter, c: Real) {
    assert!(c > 0.0, "max-norm radius must be positive");
    assert_eq!(param.value.shape().len(), 2, "max-norm needs a 2-D parameter");
    for i in 0..param.value.rows() {
        let row = param.value.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<Real>().sqrt();
        if norm > c {
            let s = c / norm;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scalar(x: Real, g: Real) -> Parameter {
        let mut p = Parameter::new("x", Tensor::vector(vec![x]));
        p.grad.data_mut()[0] = g;
        p
    }

    #[test]
    fn zero_gradient_is_a_noop() {
        let mut opt = Adadelta::default();
        let mut p = Parameter::new("w", Tensor::vector(vec![0.3, -1.0, 2.5]));
        let before = p.value.clone();
        for _ in 0..5 {
            opt.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value, before);
        assert!(opt.sq_grad("w").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn accumulators_decay_under_zero_gradient() {
        let mut opt = Adadelta::default();
        let mut p = scalar(0.0, 1.0);
        opt.step(&mut [&mut p]).unwrap();
        let first = opt.sq_grad("x").unwrap().data()[0];
        p.zero_grad();
        opt.step(&mut [&mut p]).unwrap();
        let second = opt.sq_grad("x").unwrap().data()[0];
        assert_abs_diff_eq!(second, 0.95 * first, epsilon = 1e-15);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let mut opt = Adadelta::new(0.95, 1e-6);
        let mut p = scalar(0.0, 1.0);
        opt.step(&mut [&mut p]).unwrap();
        // -sqrt(1e-6) / sqrt(0.05 + 1e-6)
        let expected = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert_abs_diff_eq!(expected, -0.004472091, epsilon = 1e-9);
        assert_abs_diff_eq!(p.value.data()[0], expected as Real, epsilon = 1e-15);
    }

    #[test]
    fn steps_grow_under_constant_gradient() {
        let mut opt = Adadelta::new(0.95, 1e-6);
        let mut p = scalar(0.0, 1.0);
        opt.step(&mut [&mut p]).unwrap();
        let dx1 = p.value.data()[0];
        opt.step(&mut [&mut p]).unwrap();
        let dx2 = p.value.data()[0] - dx1;
        assert!(dx2.abs() > dx1.abs(), "{dx2} vs {dx1}");
    }

    #[test]
    fn frozen_parameters_are_untouched() {
        let mut opt = Adadelta::default();
        let mut p = scalar(1.0, 3.0);
        p.trainable = false;
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data()[0], 1.0);
        assert!(opt.sq_grad("x").is_none());
    }

    #[test]
    fn non_finite_gradient_aborts_and_names_parameter() {
        let mut opt = Adadelta::default();
        let mut good = scalar(1.0, 1.0);
        good.name = "good".into();
        let mut bad = scalar(1.0, Real::NAN);
        bad.name = "head.w".into();
        let err = opt.step(&mut [&mut good, &mut bad]).unwrap_err();
        assert!(err.to_string().contains("head.w"));
        assert_eq!(good.value.data()[0], 1.0);
    }

    fn matrix(rows: &[[Real; 2]]) -> Parameter {
        let data = rows.iter().flatten().copied().collect();
        Parameter::new("W", Tensor::from_vec(&[rows.len(), 2], data).unwrap())
    }

    #[test]
    fn maxnorm_examples() {
        let mut p = matrix(&[[6.0, 0.0], [1.0, 1.0], [3.0, 4.0]]);
        maxnorm_constrain(&mut p, 3.0);
        assert_eq!(p.value.row(0), &[3.0, 0.0]);
        assert_eq!(p.value.row(1), &[1.0, 1.0]);
        assert_abs_diff_eq!(p.value.row(2)[0], 1.8, epsilon = 1e-12);
        assert_abs_diff_eq!(p.value.row(2)[1], 2.4, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn maxnorm_is_idempotent(rows in prop::collection::vec(prop::array::uniform2(-10.0..10.0 as Real), 1..6), c in 0.1..5.0 as Real) {
            let mut once = matrix(&rows);
            maxnorm_constrain(&mut once, c);
            let mut twice = once.clone();
            maxnorm_constrain(&mut twice, c);
            for (a, b) in once.value.data().iter().zip(twice.value.data()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            for i in 0..once.value.rows() {
                let n = once.value.row(i).iter().map(|v| v * v).sum::<Real>().sqrt();
                prop_assert!(n <= c * (1.0 + 1e-12));
            }
        }
    }
}
