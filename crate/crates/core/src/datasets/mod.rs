//! Corpus files, pretrained embeddings, cross-validation folds and the
//! synthetic corpus generator.

mod corpus;
mod embeddings;
mod folds;
mod synthetic;

pub use corpus::{
    load_corpus, load_unlabeled, parse_corpus, write_corpus, write_unlabeled, Channel, Corpus,
    LabelScheme, LabeledText, LoadReport,
};
pub use embeddings::{
    load_embeddings, random_embeddings, read_embeddings, EmbeddingLoadReport,
    DEFAULT_EMBEDDING_DIM, RANDOM_INIT_BOUND,
};
pub use folds::{kfold_split, FoldPlan, FoldSplit, DEV_FRACTION};
pub use synthetic::{gen_synthetic, lexicon_vote, SyntheticConfig, SyntheticCorpora};
