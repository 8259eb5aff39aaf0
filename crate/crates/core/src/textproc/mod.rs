//! Tokenization, vocabulary, segmentation of long texts into pseudo-short
//! segments, and pseudo-long construction by concatenating short texts.

mod pseudo;
mod segment;
mod tokenize;
mod vocab;

use serde::{Deserialize, Serialize};

pub use pseudo::{make_pseudo_long, PseudoLongConfig};
pub use segment::{segment, segment_by, SegmentMode, Segmenter};
pub use tokenize::tokenize;
pub use vocab::{TokenId, Vocabulary, PAD, UNK};

/// One labeled text as token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub tokens: Vec<TokenId>,
    pub label: usize,
}

impl Instance {
    pub fn raw_len(&self) -> usize {
        self.tokens.len()
    }
}

/// A piece of a bag. Segments of real long documents carry no label; segments of
/// pseudo-long texts keep the label of the short text they came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub tokens: Vec<TokenId>,
    pub label: Option<usize>,
}

/// A text viewed as an ordered list of segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bag {
    pub segments: Vec<Segment>,
    pub label: Option<usize>,
}

impl Bag {
    /// A short text is a one-segment bag; its label is both the segment and the document label.
    pub fn from_short(inst: &Instance) -> Self {
        Bag {
            segments: vec![Segment {
                tokens: inst.tokens.clone(),
                label: Some(inst.label),
            }],
            label: Some(inst.label),
        }
    }

    /// A long document split into unlabeled segments.
    pub fn from_segments(pieces: Vec<Vec<TokenId>>, label: Option<usize>) -> Self {
        Bag {
            segments: pieces
                .into_iter()
                .map(|tokens| Segment {
                    tokens,
                    label: None,
                })
                .collect(),
            label,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segments concatenated with no separator.
    pub fn flat_tokens(&self) -> Vec<TokenId> {
        self.segments
            .iter()
            .flat_map(|s| s.tokens.iter().copied())
            .collect()
    }

    pub fn token_count(&self) -> usize {
        self.segments.iter().map(|s| s.tokens.len()).sum()
    }
}
