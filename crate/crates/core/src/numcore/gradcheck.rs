//! Central finite-difference oracle for analytic gradients.

use rand::Rng;
use serde::Serialize;

use super::tensor::{Parameter, Real};
use crate::error::{Error, Result};

/// Anything that owns a list of parameters.
pub trait HasParameters {
    fn parameters(&self) -> Vec<&Parameter>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: Real,
    pub numeric: Real,
    pub rel_error: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: Real,
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    /// Probes above `tol`, worst first.
    pub fn offenders(&self, tol: Real) -> Vec<&Probe> {
        let mut v: Vec<_> = self.probes.iter().filter(|p| p.rel_error >= tol).collect();
        v.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
        v
    }
}

/// Relative error with an absolute floor of 1e-6 on the denominator; central
/// differences carry round-off near 1e-11, which swamps smaller gradients.
pub fn relative_error(analytic: Real, numeric: Real) -> Real {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Compares analytic gradients against `(f(x+h) - f(x-h)) / 2h` on
/// `probe_count` randomly chosen coordinates of trainable parameters.
///
/// `loss(model, true)` must evaluate the loss and accumulate gradients;
/// `loss(model, false)` only evaluates. Both must be deterministic.
pub fn grad_check<M, F, R>(
    model: &mut M,
    mut loss: F,
    probe_count: usize,
    h: Real,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    M: HasParameters,
    F: FnMut(&mut M, bool) -> Result<Real>,
    R: Rng + ?Sized,
{
    model.zero_grad();
    let base = loss(model, true)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss at the unperturbed point is {base}")));
    }
    let (trainable, sizes): (Vec<usize>, Vec<usize>) = model
        .parameters()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.trainable)
        .map(|(i, p)| (i, p.numel()))
        .unzip();
    if trainable.is_empty() {
        return Ok(GradCheckReport {
            max_rel_error: 0.0,
            probes: vec![],
        });
    }
    let mut probes = Vec::with_capacity(probe_count);
    for _ in 0..probe_count {
        let pick = rng.gen_range(0..trainable.len());
        let (pi, index) = (trainable[pick], rng.gen_range(0..sizes[pick]));
        let (name, x0, analytic) = {
            let params = model.parameters();
            let p = params[pi];
            (p.name.clone(), p.value.data()[index], p.grad.data()[index])
        };
        let mut eval_at = |m: &mut M, x: Real| -> Result<Real> {
            m.parameters_mut()[pi].value.data_mut()[index] = x;
            loss(m, false)
        };
        let fp = eval_at(model, x0 + h)?;
        let fm = eval_at(model, x0 - h)?;
        model.parameters_mut()[pi].value.data_mut()[index] = x0;
        let numeric = (fp - fm) / (2.0 * h);
        if !analytic.is_finite() || !numeric.is_finite() {
            return Err(Error::NonFinite(format!(
                "{name}[{index}]: analytic {analytic}, numeric {numeric}"
            )));
        }
        probes.push(Probe {
            rel_error: relative_error(analytic, numeric),
            param: name,
            index,
            analytic,
            numeric,
        });
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, Real::max);
    Ok(GradCheckReport {
        max_rel_error,
        probes,
    })
}
