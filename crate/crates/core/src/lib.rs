//! Cross-length transfer (CLT) sentiment classification.
//!
//! Three classifiers are provided: a Kim-style CNN, `BaggedCNN` (segment
//! encoder + attention pooling + one head shared by segments and documents)
//! and `LeTraNets` (a stand-alone CNN and a BaggedCNN sharing one embedding
//! table, tied together by a joint head, KL prediction regularization and
//! stepwise pretraining). Around them sit corpus I/O, a deterministic
//! synthetic corpus generator, the training loop and the transfer-evaluation
//! protocol (transfer loss, transfer ratio, per-length reports).

pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod numcore;
pub mod seed;
pub mod textproc;
pub mod training;

pub use error::{Error, Result};
pub use numcore::{Mode, Parameter, Real, Tensor};
pub use textproc::{Bag, Segment, TokenId, Vocabulary};
