use serde::Serialize;

use crate::error::{ensure, Result};
use crate::numcore::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaChoice {
    pub lambda: Real,
    /// `(lambda, mean dev accuracy)` for every grid point, in grid order.
    pub scores: Vec<(Real, Real)>,
}

/// Picks the grid value with the highest mean dev accuracy; ties go to the
/// smaller lambda. `evaluate` trains with a given lambda and returns its mean
/// dev accuracy over folds.
pub fn tune_lambda<F>(grid: &[Real], mut evaluate: F) -> Result<LambdaChoice>
where
    F: FnMut(Real) -> Result<Real>,
{
    ensure!(!grid.is_empty(), "lambda grid is empty");
    let mut scores = Vec::with_capacity(grid.len());
    for &l in grid {
        scores.push((l, evaluate(l)?));
    }
    let (lambda, _) = scores
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .unwrap();
    log::info!("lambda grid {scores:?} -> {lambda}");
    Ok(LambdaChoice { lambda, scores })
}
