//! Metrics, per-length analysis and the in-channel/out-channel transfer protocol.

mod buckets;
mod metrics;
mod protocol;
mod report;

pub use buckets::{decile_edges, length_buckets, mean_buckets, per_length_report, LengthBucket};
pub use metrics::{accuracy, class_to_score, error_rate, mean, rmse, transfer_loss, transfer_ratio};
pub use protocol::{
    ablation_variants, run_ablation, run_in_channel_baseline, run_transfer_protocol, PreparedData, ProtocolConfig,
    ProtocolOutput, RunLog,
};
pub use report::{render_ablation_table, render_model_table, render_summary, BaselineMetrics, FoldMetrics, MetricsReport};
