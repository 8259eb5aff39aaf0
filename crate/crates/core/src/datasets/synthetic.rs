//! Deterministic synthetic short/long corpora with a planted sentiment lexicon.
//!
//! Every text is built from three word pools: positive and negative lexicon
//! words (disjoint) and neutral filler. A short text draws a label, places
//! lexicon words of that polarity at the injection rate and, at the noise rate,
//! lexicon words of the opposite polarity, always keeping the label's polarity
//! in the majority. A long text concatenates several short texts of one label.
//! Lexicon words are drawn from a Zipf law, so frequent "head" words show up in
//! nearly every long text while most short texts only carry one or two cues.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Channel, Corpus, LabeledText};
use crate::error::{ensure, Result};
use crate::seed::{rng_for, Rng as SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub num_short: usize,
    pub num_long: usize,
    /// Unlabeled texts generated per channel.
    pub num_unlabeled: usize,
    pub num_classes: usize,
    /// Number of neutral filler words.
    pub vocab_size: usize,
    pub positive_lexicon: usize,
    pub negative_lexicon: usize,
    /// Per-token probability of a lexicon word of the text's polarity.
    pub injection_rate: f64,
    /// Per-token probability of a lexicon word of the opposite polarity in a short text.
    pub noise_rate: f64,
    /// The same for the segments of a long text. Long texts digress, so stray
    /// opposite-polarity words pile up over their segments.
    pub long_noise_rate: f64,
    /// Inclusive token-length range of a short text (before the final period).
    pub short_len: (usize, usize),
    /// Inclusive range of short texts concatenated into one long text.
    pub segments_per_long: (usize, usize),
    /// Exponent of the Zipf law over lexicon ranks (0 = uniform).
    pub lexicon_zipf: f64,
    /// Exponent of the Zipf law over filler ranks.
    pub filler_zipf: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_short: 2000,
            num_long: 2000,
            num_unlabeled: 0,
            num_classes: 2,
            vocab_size: 300,
            positive_lexicon: 30,
            negative_lexicon: 30,
            injection_rate: 0.1,
            noise_rate: 0.0,
            long_noise_rate: 0.15,
            short_len: (8, 14),
            segments_per_long: (2, 5),
            lexicon_zipf: 0.5,
            filler_zipf: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.num_classes == 2 || self.num_classes == 5,
            "synthetic corpora support 2 or 5 classes, got {}",
            self.num_classes
        );
        ensure!(self.vocab_size >= 1, "need at least one filler word");
        ensure!(
            self.positive_lexicon >= 1 && self.negative_lexicon >= 1,
            "both lexicons must be non-empty"
        );
        ensure!(
            [self.injection_rate, self.noise_rate, self.long_noise_rate]
                .iter()
                .all(|r| (0.0..=1.0).contains(r)),
            "rates must lie in [0, 1]"
        );
        ensure!(
            self.injection_rate + self.noise_rate.max(self.long_noise_rate) <= 1.0,
            "injection rate plus a noise rate must not exceed 1"
        );
        ensure!(
            1 <= self.short_len.0 && self.short_len.0 <= self.short_len.1,
            "short_len must be a non-empty range of positive lengths"
        );
        ensure!(
            1 <= self.segments_per_long.0 && self.segments_per_long.0 <= self.segments_per_long.1,
            "segments_per_long must be a non-empty range of positive counts"
        );
        ensure!(
            self.lexicon_zipf >= 0.0 && self.filler_zipf >= 0.0,
            "zipf exponents must be non-negative"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpora {
    pub short: Corpus,
    pub long: Corpus,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Polarity {
    Negative,
    Neutral,
    Positive,
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| (r as f64).powf(-s))).expect("non-empty pool")
}

struct Generator<'a> {
    cfg: &'a SyntheticConfig,
    filler: Vec<String>,
    positive: Vec<String>,
    negative: Vec<String>,
    filler_law: WeightedIndex<f64>,
    pos_law: WeightedIndex<f64>,
    neg_law: WeightedIndex<f64>,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a SyntheticConfig) -> Self {
        Self {
            cfg,
            filler: (0..cfg.vocab_size).map(|i| format!("w{i}")).collect(),
            positive: (0..cfg.positive_lexicon).map(|i| format!("pos{i}")).collect(),
            negative: (0..cfg.negative_lexicon).map(|i| format!("neg{i}")).collect(),
            filler_law: zipf(cfg.vocab_size, cfg.filler_zipf),
            pos_law: zipf(cfg.positive_lexicon, cfg.lexicon_zipf),
            neg_law: zipf(cfg.negative_lexicon, cfg.lexicon_zipf),
        }
    }

    /// Polarity and injection rate for a class. Five-way labels encode intensity
    /// as density bands: the outer classes use the full rate, the inner ones 40% of it.
    fn class_profile(&self, label: usize) -> (Polarity, f64) {
        let r = self.cfg.injection_rate;
        match (self.cfg.num_classes, label) {
            (2, 0) => (Polarity::Negative, r),
            (2, _) => (Polarity::Positive, r),
            (_, 0) => (Polarity::Negative, r),
            (_, 1) => (Polarity::Negative, 0.4 * r),
            (_, 2) => (Polarity::Neutral, 0.0),
            (_, 3) => (Polarity::Positive, 0.4 * r),
            _ => (Polarity::Positive, r),
        }
    }

    fn word<R: Rng>(&self, pol: Polarity, rng: &mut R) -> String {
        match pol {
            Polarity::Positive => self.positive[self.pos_law.sample(rng)].clone(),
            Polarity::Negative => self.negative[self.neg_law.sample(rng)].clone(),
            Polarity::Neutral => self.filler[self.filler_law.sample(rng)].clone(),
        }
    }

    fn short_text<R: Rng>(&self, label: usize, noise_rate: f64, rng: &mut R) -> Vec<String> {
        let (pol, rate) = self.class_profile(label);
        let len = rng.gen_range(self.cfg.short_len.0..=self.cfg.short_len.1);
        let opposite = match pol {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
            Polarity::Neutral => Polarity::Neutral,
        };
        // 0 = filler, 1 = label polarity, 2 = opposite polarity
        let mut kinds: Vec<u8> = (0..len)
            .map(|_| {
                let u: f64 = rng.gen();
                if pol == Polarity::Neutral {
                    0
                } else if u < rate {
                    1
                } else if u < rate + noise_rate {
                    2
                } else {
                    0
                }
            })
            .collect();
        if pol != Polarity::Neutral {
            if !kinds.contains(&1) {
                let at = rng.gen_range(0..len);
                kinds[at] = 1;
            }
            // keep the label's polarity in a strict majority
            let label_words = kinds.iter().filter(|&&k| k == 1).count();
            let mut noise_words = kinds.iter().filter(|&&k| k == 2).count();
            for k in kinds.iter_mut() {
                if noise_words < label_words {
                    break;
                }
                if *k == 2 {
                    *k = 0;
                    noise_words -= 1;
                }
            }
        }
        let mut out: Vec<String> = kinds
            .into_iter()
            .map(|k| match k {
                1 => self.word(pol, rng),
                2 => self.word(opposite, rng),
                _ => self.word(Polarity::Neutral, rng),
            })
            .collect();
        out.push(".".into());
        out
    }

    fn long_text<R: Rng>(&self, label: usize, rng: &mut R) -> Vec<String> {
        let k = rng.gen_range(self.cfg.segments_per_long.0..=self.cfg.segments_per_long.1);
        (0..k)
            .flat_map(|_| self.short_text(label, self.cfg.long_noise_rate, rng))
            .collect()
    }

    fn corpus(&self, channel: Channel, n: usize, rng: &mut SeededRng) -> Corpus {
        let texts = (0..n)
            .map(|_| {
                let label = rng.gen_range(0..self.cfg.num_classes);
                let tokens = match channel {
                    Channel::Short => self.short_text(label, self.cfg.noise_rate, rng),
                    Channel::Long => self.long_text(label, rng),
                };
                LabeledText { label, tokens }
            })
            .collect();
        let unlabeled = (0..self.cfg.num_unlabeled)
            .map(|_| {
                let label = rng.gen_range(0..self.cfg.num_classes);
                match channel {
                    Channel::Short => self.short_text(label, self.cfg.noise_rate, rng),
                    Channel::Long => self.long_text(label, rng),
                }
            })
            .collect();
        Corpus {
            name: format!(
                "synthetic-{}",
                match channel {
                    Channel::Short => "short",
                    Channel::Long => "long",
                }
            ),
            channel,
            num_classes: self.cfg.num_classes,
            texts,
            unlabeled,
        }
    }
}

/// Generates the short and long corpora (each with its unlabeled pool).
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticCorpora> {
    cfg.validate()?;
    let g = Generator::new(cfg);
    let short = g.corpus(Channel::Short, cfg.num_short, &mut rng_for(cfg.seed, "synthetic", &[0]));
    let long = g.corpus(Channel::Long, cfg.num_long, &mut rng_for(cfg.seed, "synthetic", &[1]));
    Ok(SyntheticCorpora {
        short,
        long,
        positive_words: g.positive.clone(),
        negative_words: g.negative.clone(),
    })
}

/// Counting classifier over the planted lexicons: the Bayes-optimal rule for
/// binary corpora produced by [`gen_synthetic`].
pub fn lexicon_vote(tokens: &[String]) -> usize {
    let pos = tokens.iter().filter(|t| t.starts_with("pos")).count();
    let neg = tokens.iter().filter(|t| t.starts_with("neg")).count();
    usize::from(pos > neg)
}
