use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::buckets::LengthBucket;
use super::metrics::mean;
use crate::datasets::Channel;
use crate::error::Result;
use crate::models::ModelKind;
use crate::numcore::Real;
use crate::training::{Direction, Mechanisms};

/// One fold of the out-channel run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub selected_epoch: Option<usize>,
    pub dev_accuracy: Option<Real>,
    /// Accuracy on the fold's held-out slice of the source channel.
    pub source_accuracy: Real,
    /// Accuracy on the target channel's test split.
    pub accuracy: Real,
    pub error: Real,
    pub rmse: Option<Real>,
    pub transfer_loss: Real,
}

/// In-channel CNN trained and tested on the target channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub channel: Channel,
    pub accuracy: Real,
    pub error: Real,
    pub rmse: Option<Real>,
    pub fold_accuracies: Vec<Real>,
}

/// Result of one transfer run. Field order is the JSON key order; wall-clock
/// times are kept out so equal inputs serialize to equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: ModelKind,
    pub direction: Direction,
    pub mechanisms: Mechanisms,
    pub variant: String,
    pub num_classes: usize,
    pub seed: u64,
    pub lambda: Real,
    /// `(lambda, mean dev accuracy)` per grid point; empty without a search.
    pub lambda_scores: Vec<(Real, Real)>,
    pub source_train_size: usize,
    pub target_test_size: usize,
    pub accuracy: Real,
    pub error: Real,
    pub rmse: Option<Real>,
    pub source_accuracy: Real,
    pub in_channel: BaselineMetrics,
    pub transfer_loss: Real,
    /// `None` when the in-channel error is zero.
    pub transfer_ratio: Option<Real>,
    pub folds: Vec<FoldMetrics>,
    pub per_length: Vec<LengthBucket>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Row name in the model table: the model, plus the variant for a
    /// LeTraNets run without all three mechanisms.
    pub fn row_name(&self) -> String {
        if self.model == ModelKind::LeTraNets && self.mechanisms != Mechanisms::ALL {
            format!("{} ({})", self.model, self.variant)
        } else {
            self.model.to_string()
        }
    }
}

fn opt4(v: Option<Real>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

/// Plain-text account of one report: headline metrics, folds and length buckets.
pub fn render_summary(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} [{}] seed {} lambda {}",
        r.model, r.direction, r.variant, r.seed, r.lambda
    );
    let _ = writeln!(
        s,
        "target accuracy {:.4}  error {:.4}  rmse {}  source accuracy {:.4}",
        r.accuracy,
        r.error,
        opt4(r.rmse),
        r.source_accuracy
    );
    let _ = writeln!(
        s,
        "in-channel CNN ({:?}) accuracy {:.4}  error {:.4}",
        r.in_channel.channel, r.in_channel.accuracy, r.in_channel.error
    );
    let _ = writeln!(
        s,
        "transfer loss {:.2} points  transfer ratio {}",
        r.transfer_loss,
        opt4(r.transfer_ratio)
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<6}{:>7}{:>9}{:>9}{:>9}{:>9}", "fold", "epoch", "dev", "source", "target", "TL");
    for f in &r.folds {
        let _ = writeln!(
            s,
            "{:<6}{:>7}{:>9}{:>9.4}{:>9.4}{:>9.2}",
            f.fold,
            f.selected_epoch.map_or_else(|| "-".to_owned(), |e| e.to_string()),
            opt4(f.dev_accuracy),
            f.source_accuracy,
            f.accuracy,
            f.transfer_loss
        );
    }
    let _ = writeln!(
        s,
        "{:<6}{:>7}{:>9}{:>9.4}{:>9.4}{:>9.2}",
        "mean", "", "", r.source_accuracy, r.accuracy, r.transfer_loss
    );
    if !r.per_length.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14}{:>7}{:>10}", "length", "count", "accuracy");
        for b in &r.per_length {
            let range = match b.upper {
                Some(u) => format!("[{}, {})", b.lower, u),
                None => format!("[{}, inf)", b.lower),
            };
            let _ = writeln!(s, "{:<14}{:>7}{:>10}", range, b.count, opt4(b.accuracy));
        }
    }
    s
}

/// Ordered distinct keys.
fn distinct<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Mean of `value` over the reports in one table cell (several seeds average).
fn cell<'a>(
    reports: impl Iterator<Item = &'a MetricsReport>,
    value: impl Fn(&MetricsReport) -> Option<Real>,
) -> Option<Real> {
    let vals: Vec<Real> = reports.filter_map(value).collect();
    mean(&vals).ok()
}

/// Models as rows, one accuracy and RMSE column pair per direction.
pub fn render_model_table(reports: &[MetricsReport]) -> String {
    let rows = distinct(reports.iter().map(MetricsReport::row_name));
    let dirs = distinct(reports.iter().map(|r| r.direction));
    let width = rows.iter().map(String::len).max().unwrap_or(5).max(5) + 2;
    let mut s = String::new();
    let _ = write!(s, "{:<width$}", "Model");
    for d in &dirs {
        let _ = write!(s, "{:<18}", d.as_str());
    }
    let _ = writeln!(s);
    let _ = write!(s, "{:<width$}", "");
    for _ in &dirs {
        let _ = write!(s, "{:<9}{:<9}", "Acc", "RMSE");
    }
    let _ = writeln!(s);
    for row in &rows {
        let _ = write!(s, "{row:<width$}");
        for d in &dirs {
            let group = || reports.iter().filter(|r| &r.row_name() == row && r.direction == *d);
            let _ = write!(
                s,
                "{:<9}{:<9}",
                opt4(cell(group(), |r| Some(r.accuracy))),
                opt4(cell(group(), |r| r.rmse))
            );
        }
        let _ = writeln!(s);
    }
    s
}

const ABLATION_ROWS: [&str; 5] = ["-", "JT", "PR", "SP", "All"];

/// LeTraNets mechanism variants as rows (`-`, `JT`, `PR`, `SP`, `All`, then
/// any others), target accuracy per direction as columns.
pub fn render_ablation_table(reports: &[MetricsReport]) -> String {
    let lt: Vec<&MetricsReport> = reports.iter().filter(|r| r.model == ModelKind::LeTraNets).collect();
    let mut rows: Vec<String> = ABLATION_ROWS
        .iter()
        .filter(|l| lt.iter().any(|r| r.variant == **l))
        .map(|l| (*l).to_owned())
        .collect();
    for v in distinct(lt.iter().map(|r| r.variant.clone())) {
        if !rows.contains(&v) {
            rows.push(v);
        }
    }
    let dirs = distinct(lt.iter().map(|r| r.direction));
    let mut s = String::new();
    let _ = write!(s, "{:<10}", "Mechanism");
    for d in &dirs {
        let _ = write!(s, "{:<12}", d.as_str());
    }
    let _ = writeln!(s);
    for row in &rows {
        let _ = write!(s, "{row:<10}");
        for d in &dirs {
            let group = lt.iter().copied().filter(|r| &r.variant == row && r.direction == *d);
            let _ = write!(s, "{:<12}", opt4(cell(group, |r| Some(r.accuracy))));
        }
        let _ = writeln!(s);
    }
    s
}
