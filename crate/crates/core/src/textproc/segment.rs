use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentMode {
    /// Split after sentence-final punctuation, falling back to fixed chunks.
    SentencePunctuation,
    FixedChunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmenter {
    pub mode: SegmentMode,
    pub chunk_size: usize,
    pub max_segments: usize,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self {
            mode: SegmentMode::SentencePunctuation,
            chunk_size: 20,
            max_segments: 60,
        }
    }
}

const SENTENCE_END: [&str; 4] = [".", "!", "?", ";"];

fn chunks<T: Clone>(tokens: &[T], size: usize) -> impl Iterator<Item = Vec<T>> + '_ {
    tokens.chunks(size).map(<[T]>::to_vec)
}

/// Splits a token sequence into non-empty segments. An empty input yields no segments.
///
/// Generic over the token type so the same rule applies to strings and to ids
/// (with `is_end` deciding what counts as sentence-final).
pub fn segment_by<T: Clone>(
    tokens: &[T],
    seg: &Segmenter,
    is_end: impl Fn(&T) -> bool,
) -> Vec<Vec<T>> {
    assert!(seg.chunk_size > 0 && seg.max_segments > 0);
    if tokens.is_empty() {
        return vec![];
    }
    let mut pieces: Vec<Vec<T>> = match seg.mode {
        SegmentMode::FixedChunk => chunks(tokens, seg.chunk_size).collect(),
        SegmentMode::SentencePunctuation => {
            if !tokens.iter().any(&is_end) {
                chunks(tokens, seg.chunk_size).collect()
            } else {
                let mut out = Vec::new();
                let mut start = 0;
                for (i, t) in tokens.iter().enumerate() {
                    if is_end(t) {
                        out.push(&tokens[start..=i]);
                        start = i + 1;
                    }
                }
                if start < tokens.len() {
                    out.push(&tokens[start..]);
                }
                out.into_iter()
                    .flat_map(|p| {
                        if p.len() > 2 * seg.chunk_size {
                            chunks(p, seg.chunk_size).collect::<Vec<_>>()
                        } else {
                            vec![p.to_vec()]
                        }
                    })
                    .collect()
            }
        }
    };
    if pieces.len() > seg.max_segments {
        let overflow: Vec<T> = pieces
            .drain(seg.max_segments..)
            .flatten()
            .collect();
        pieces.last_mut().expect("max_segments > 0").extend(overflow);
    }
    pieces
}

/// Segments a tokenized text.
pub fn segment(tokens: &[String], seg: &Segmenter) -> Vec<Vec<String>> {
    segment_by(tokens, seg, |t| SENTENCE_END.contains(&t.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn splits_after_punctuation() {
        let out = segment(&toks(&["good", ".", "bad", "."]), &Segmenter::default());
        assert_eq!(out, vec![toks(&["good", "."]), toks(&["bad", "."])]);
    }

    #[test]
    fn no_punctuation_falls_back_to_chunks() {
        let t: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let out = segment(&t, &Segmenter::default());
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|s| s.len() == 20));
    }

    #[test]
    fn single_sentence_is_one_segment() {
        let t = toks(&["fine", "food", "!"]);
        assert_eq!(segment(&t, &Segmenter::default()), vec![t]);
    }

    #[test]
    fn long_sentences_are_resplit() {
        let mut t: Vec<String> = (0..45).map(|i| format!("w{i}")).collect();
        t.push(".".into());
        let out = segment(&t, &Segmenter::default());
        assert_eq!(out.iter().map(Vec::len).collect::<Vec<_>>(), vec![20, 20, 6]);
    }

    #[test]
    fn overflow_merges_into_last_segment() {
        let t: Vec<String> = (0..10).flat_map(|i| [format!("w{i}"), ".".into()]).collect();
        let seg = Segmenter {
            max_segments: 3,
            ..Segmenter::default()
        };
        let out = segment(&t, &seg);
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].len(), 16);
        assert_eq!(out.concat(), t);
    }

    #[test]
    fn trailing_piece_without_punctuation_kept() {
        let out = segment(&toks(&["a", ".", "b", "c"]), &Segmenter::default());
        assert_eq!(out, vec![toks(&["a", "."]), toks(&["b", "c"])]);
    }

    proptest! {
        #[test]
        fn flatten_reproduces_input(
            t in prop::collection::vec(prop::sample::select(vec!["a", "b", ".", "!", "x", ";"]), 1..200),
            chunk in 1usize..25,
            fixed in any::<bool>(),
        ) {
            let t: Vec<String> = t.into_iter().map(String::from).collect();
            let seg = Segmenter {
                mode: if fixed { SegmentMode::FixedChunk } else { SegmentMode::SentencePunctuation },
                chunk_size: chunk,
                max_segments: 60,
            };
            let out = segment(&t, &seg);
            prop_assert!(out.iter().all(|s| !s.is_empty()));
            prop_assert!(out.len() <= 60);
            prop_assert_eq!(out.concat(), t);
        }
    }
}
