//! Fixtures shared by the kernel benchmarks: seeded synthetic batches and
//! freshly initialised models at a chosen size.

use clt_core::datasets::{gen_synthetic, SyntheticConfig};
use clt_core::evaluation::{PreparedData, ProtocolConfig};
use clt_core::models::{Model, ModelConfig, ModelKind};
use clt_core::seed::rng_for;
use clt_core::training::Direction;
use clt_core::Bag;

/// Architecture used by the model-level benchmarks: the paper's widths and
/// dropout with a smaller embedding and fewer maps so one iteration stays short.
pub fn bench_model_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 64,
        feature_maps: 32,
        attention_dim: 32,
        ..ModelConfig::default()
    }
}

pub struct Fixture {
    pub data: PreparedData,
    pub cfg: ProtocolConfig,
}

impl Fixture {
    /// 400 short and 400 long synthetic texts, encoded with one vocabulary.
    pub fn new(model: ModelConfig) -> Self {
        let syn = gen_synthetic(&SyntheticConfig {
            num_short: 400,
            num_long: 400,
            seed: 1,
            ..SyntheticConfig::default()
        })
        .expect("valid generator config");
        let cfg = ProtocolConfig {
            model,
            ..ProtocolConfig::default()
        };
        let data = PreparedData::new(&syn.short, &syn.long, &cfg, None).expect("synthetic data prepares");
        Self { data, cfg }
    }

    pub fn model(&self, kind: ModelKind) -> Model {
        Model::random(kind, &self.cfg.model, self.data.embeddings.clone(), &mut rng_for(1, "bench", &[]))
            .expect("valid model config")
    }

    /// The first `n` training texts of the direction's source channel.
    pub fn batch(&self, direction: Direction, n: usize) -> Vec<&Bag> {
        self.data.train_split(direction.source()).iter().take(n).collect()
    }

    /// A pseudo-long text of `k` source shorts for short-to-long objectives.
    pub fn pseudo(&self, direction: Direction, k: usize) -> Option<Bag> {
        (direction == Direction::ShortToLong).then(|| Bag {
            segments: self
                .data
                .train_split(direction.source())
                .iter()
                .rev()
                .take(k)
                .flat_map(|b| b.segments.clone())
                .collect(),
            label: None,
        })
    }
}
