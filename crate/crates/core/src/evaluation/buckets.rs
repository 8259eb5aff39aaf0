use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::models::Model;
use crate::numcore::Real;
use crate::textproc::Bag;

/// Texts with `lower <= length < upper` tokens; `upper == None` is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub lower: usize,
    pub upper: Option<usize>,
    pub count: usize,
    /// `None` for an empty bucket.
    pub accuracy: Option<Real>,
}

/// Distinct cut points at the 10%, ..., 90% quantiles of `lengths`, each
/// strictly above the minimum so that no bucket starts empty.
pub fn decile_edges(lengths: &[usize]) -> Vec<usize> {
    if lengths.is_empty() {
        return Vec::new();
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut edges: Vec<usize> = (1..10).map(|q| sorted[(q * n / 10).min(n - 1)]).collect();
    edges.retain(|&e| e > sorted[0]);
    edges.dedup();
    edges
}

/// Buckets `(length, correct)` outcomes by interior cut points `edges`, which
/// must be strictly increasing. `k` edges give `k + 1` buckets.
pub fn length_buckets(outcomes: &[(usize, bool)], edges: &[usize]) -> Result<Vec<LengthBucket>> {
    ensure!(
        edges.windows(2).all(|w| w[0] < w[1]),
        "bucket edges must be strictly increasing"
    );
    let mut counts = vec![(0usize, 0usize); edges.len() + 1];
    for &(len, ok) in outcomes {
        let c = &mut counts[edges.partition_point(|&e| e <= len)];
        c.0 += 1;
        c.1 += usize::from(ok);
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, (count, correct))| LengthBucket {
            lower: if i == 0 { 0 } else { edges[i - 1] },
            upper: edges.get(i).copied(),
            count,
            accuracy: (count > 0).then(|| correct as Real / count as Real),
        })
        .collect())
}

/// Averages per-fold bucket tables computed on the same texts with the same edges.
pub fn mean_buckets(per_fold: &[Vec<LengthBucket>]) -> Result<Vec<LengthBucket>> {
    ensure!(!per_fold.is_empty(), "no bucket tables to average");
    let first = &per_fold[0];
    ensure!(
        per_fold
            .iter()
            .all(|t| t.len() == first.len() && t.iter().zip(first).all(|(a, b)| (a.lower, a.upper, a.count) == (b.lower, b.upper, b.count))),
        "bucket tables differ in layout"
    );
    Ok(first
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let accs: Vec<Real> = per_fold.iter().filter_map(|t| t[i].accuracy).collect();
            LengthBucket {
                accuracy: super::metrics::mean(&accs).ok(),
                ..b.clone()
            }
        })
        .collect())
}

/// Accuracy of `model` per token-length bucket of `data`; `edges` defaults to
/// the deciles of `data`'s lengths.
pub fn per_length_report(model: &Model, data: &[Bag], edges: Option<&[usize]>) -> Result<Vec<LengthBucket>> {
    let mut outcomes = Vec::with_capacity(data.len());
    for bag in data {
        let gold = bag
            .label
            .ok_or_else(|| crate::Error::contract("per-length report needs labeled texts"))?;
        outcomes.push((bag.token_count(), model.predict(bag)? == gold));
    }
    let default;
    let edges = match edges {
        Some(e) => e,
        None => {
            default = decile_edges(&outcomes.iter().map(|o| o.0).collect::<Vec<_>>());
            &default
        }
    };
    length_buckets(&outcomes, edges)
}
