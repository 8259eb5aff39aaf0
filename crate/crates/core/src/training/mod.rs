//! Objectives, the three LeTraNets training mechanisms and the training loop.

mod check;
mod lambda;
mod losses;
mod trainer;

use serde::{Deserialize, Serialize};

pub use check::{check_all, check_gradients, GradCheckCase, GradCheckConfig, GRADCHECK_FIXTURE};
pub use lambda::{tune_lambda, LambdaChoice};
pub use losses::{
    batch_loss, loss_long, loss_short, pr_detach_direction, reference_predictions, LossParts, PrRole,
    Reference, Terms,
};
pub use trainer::{stepwise_pretrain, train, EpochRecord, Stage, TrainHistory, TrainOutcome};

use crate::datasets::Channel;
use crate::error::{ensure, Result};
use crate::numcore::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "long2short")]
    LongToShort,
    #[serde(rename = "short2long")]
    ShortToLong,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::LongToShort, Direction::ShortToLong];

    pub fn source(self) -> Channel {
        match self {
            Direction::LongToShort => Channel::Long,
            Direction::ShortToLong => Channel::Short,
        }
    }

    pub fn target(self) -> Channel {
        self.source().other()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::LongToShort => "long2short",
            Direction::ShortToLong => "short2long",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "long2short" | "longtoshort" | "l2s" => Ok(Direction::LongToShort),
            "short2long" | "shorttolong" | "s2l" => Ok(Direction::ShortToLong),
            _ => Err(crate::Error::contract(format!("unknown direction `{s}`"))),
        }
    }
}

/// Switches for Joint Training, Prediction Regularization and Stepwise Pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mechanisms {
    pub jt: bool,
    pub pr: bool,
    pub sp: bool,
}

impl Default for Mechanisms {
    fn default() -> Self {
        Self::ALL
    }
}

impl Mechanisms {
    pub const ALL: Mechanisms = Mechanisms {
        jt: true,
        pr: true,
        sp: true,
    };
    pub const NONE: Mechanisms = Mechanisms {
        jt: false,
        pr: false,
        sp: false,
    };

    /// Row label in the ablation table: `-`, `JT`, `PR`, `SP`, `All`, or a `+`-joined pair.
    pub fn label(self) -> String {
        if self == Self::ALL {
            return "All".into();
        }
        let names: Vec<&str> = [(self.jt, "JT"), (self.pr, "PR"), (self.sp, "SP")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if names.is_empty() {
            "-".into()
        } else {
            names.join("+")
        }
    }

    pub fn only(name: &str) -> Result<Self> {
        let mut m = Self::NONE;
        match name.trim().to_ascii_lowercase().as_str() {
            "jt" => m.jt = true,
            "pr" => m.pr = true,
            "sp" => m.sp = true,
            "all" => m = Self::ALL,
            "none" | "-" => {}
            other => {
                return Err(crate::Error::contract(format!(
                    "unknown mechanism `{other}` (expected jt, pr, sp, all or none)"
                )))
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub direction: Direction,
    /// Weight of the prediction regularizer when no grid search is run.
    pub lambda: Real,
    /// Candidate weights tuned on the dev split; empty means use `lambda`.
    pub lambda_grid: Vec<Real>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub pretrain_epochs: usize,
    pub mechanisms: Mechanisms,
    pub pseudo_k_min: usize,
    pub pseudo_k_max: usize,
    pub rho: Real,
    pub epsilon: Real,
    pub max_norm: Real,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            direction: Direction::LongToShort,
            lambda: 0.1,
            lambda_grid: vec![0.01, 0.1, 1.0],
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            pretrain_epochs: 3,
            mechanisms: Mechanisms::ALL,
            pseudo_k_min: 3,
            pseudo_k_max: 10,
            rho: 0.95,
            epsilon: 1e-6,
            max_norm: 3.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be a nonnegative number");
        ensure!(
            self.lambda_grid.iter().all(|l| *l >= 0.0 && l.is_finite()),
            "lambda grid values must be nonnegative numbers"
        );
        ensure!(self.batch_size >= 1, "batch_size must be at least 1");
        ensure!(self.max_epochs >= 1, "max_epochs must be at least 1");
        ensure!(
            1 <= self.pseudo_k_min && self.pseudo_k_min <= self.pseudo_k_max,
            "need 1 <= pseudo_k_min <= pseudo_k_max"
        );
        ensure!(self.rho > 0.0 && self.rho < 1.0, "rho must lie in (0, 1)");
        ensure!(self.epsilon > 0.0, "epsilon must be positive");
        ensure!(self.max_norm > 0.0, "max_norm must be positive");
        Ok(())
    }
}
