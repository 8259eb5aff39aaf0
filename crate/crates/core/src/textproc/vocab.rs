use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token <-> id bijection with reserved padding and unknown ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
    min_count: usize,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times. Ids are assigned by
    /// descending frequency, ties broken lexicographically.
    pub fn build<'a, I, T>(corpora: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = &'a String>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in corpora {
            for tok in text {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary { min_count });
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = kept.into_iter().map(|(t, _)| t.to_owned());
        Ok(Self::from_tokens(tokens, min_count))
    }

    fn from_tokens(rest: impl IntoIterator<Item = String>, min_count: usize) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()];
        tokens.extend(rest);
        let mut v = Self {
            tokens,
            index: HashMap::new(),
            min_count,
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Never true: the reserved ids are always present.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// One token per line in id order, reserved entries first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for t in &self.tokens {
            writeln!(f, "{t}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let reserved: Vec<_> = lines.by_ref().take(2).collect();
        if reserved != [PAD_TOKEN, UNK_TOKEN] {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: "vocabulary file must start with <pad> and <unk>".into(),
            });
        }
        Ok(Self::from_tokens(lines.map(str::to_owned), 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn min_count_filters_rare_tokens() {
        let corpus = toks(&["a", "a", "b"]);
        let v = Vocabulary::build([&corpus], 2).unwrap();
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn ties_are_lexicographic() {
        let corpus = toks(&["y", "x"]);
        let v = Vocabulary::build([&corpus], 1).unwrap();
        assert_eq!(v.id("x"), 2);
        assert_eq!(v.id("y"), 3);
    }

    #[test]
    fn frequency_orders_ids() {
        let corpus = toks(&["b", "a", "b", "c", "c", "c"]);
        let v = Vocabulary::build([&corpus], 1).unwrap();
        assert_eq!(v.encode(&["c", "b", "a", "zzz"]), vec![2, 3, 4, UNK]);
    }

    #[test]
    fn unseen_and_reserved() {
        let corpus = toks(&["a"]);
        let v = Vocabulary::build([&corpus], 1).unwrap();
        assert_eq!(v.id("never-seen"), 1);
        assert_eq!(v.token(PAD), Some("<pad>"));
        assert_eq!(v.token(UNK), Some("<unk>"));
    }

    #[test]
    fn empty_after_filtering_is_an_error() {
        let corpus = toks(&["a", "b"]);
        assert!(matches!(
            Vocabulary::build([&corpus], 2),
            Err(Error::EmptyVocabulary { min_count: 2 })
        ));
    }

    #[test]
    fn multiple_corpora_are_pooled() {
        let a = toks(&["x"]);
        let b = toks(&["x", "y"]);
        let v = Vocabulary::build([&a, &b], 2).unwrap();
        assert!(v.contains("x") && !v.contains("y"));
    }

    #[test]
    fn save_load_round_trip() {
        let corpus = toks(&["b", "a", "b"]);
        let v = Vocabulary::build([&corpus], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        let w = Vocabulary::load(&p).unwrap();
        assert_eq!(v.tokens(), w.tokens());
        assert_eq!(w.id("a"), v.id("a"));
    }
}
