use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::textproc::{segment, tokenize, Bag, Instance, Segmenter, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Short,
    Long,
}

impl Channel {
    pub fn other(self) -> Channel {
        match self {
            Channel::Short => Channel::Long,
            Channel::Long => Channel::Short,
        }
    }
}

/// How labels are written in corpus files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelScheme {
    #[default]
    ZeroBased,
    /// Fine-grained ratings written as 1..=C.
    OneBased,
}

impl LabelScheme {
    fn offset(self) -> i64 {
        match self {
            LabelScheme::ZeroBased => 0,
            LabelScheme::OneBased => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub label: usize,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub channel: Channel,
    pub num_classes: usize,
    pub texts: Vec<LabeledText>,
    #[serde(default)]
    pub unlabeled: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub blank_lines: usize,
    pub empty_texts: usize,
    pub comments: usize,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn mean_length(&self) -> f64 {
        if self.texts.is_empty() {
            return 0.0;
        }
        self.texts.iter().map(|t| t.tokens.len()).sum::<usize>() as f64 / self.texts.len() as f64
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for t in &self.texts {
            h[t.label] += 1;
        }
        h
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            texts: indices.iter().map(|&i| self.texts[i].clone()).collect(),
            unlabeled: self.unlabeled.clone(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Corpus {
        Corpus {
            name: self.name.clone(),
            channel: self.channel,
            num_classes: self.num_classes,
            texts: vec![],
            unlabeled: vec![],
        }
    }

    /// Encodes every text as a bag: short texts become one-segment bags, long
    /// texts are split with `segmenter`.
    pub fn bags(&self, vocab: &Vocabulary, segmenter: &Segmenter) -> Vec<Bag> {
        self.texts
            .iter()
            .map(|t| match self.channel {
                Channel::Short => Bag::from_short(&Instance {
                    tokens: vocab.encode(&t.tokens),
                    label: t.label,
                }),
                Channel::Long => Bag::from_segments(
                    segment(&t.tokens, segmenter)
                        .iter()
                        .map(|s| vocab.encode(s))
                        .collect(),
                    Some(t.label),
                ),
            })
            .collect()
    }

    /// Seeded split into (train, test) with `test_fraction` of the texts held out.
    pub fn split_holdout(&self, test_fraction: f64, seed: u64) -> (Corpus, Corpus) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng_for(seed, "holdout", &[]));
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test);
        let mut train = train.to_vec();
        let mut test = test.to_vec();
        train.sort_unstable();
        test.sort_unstable();
        let mut test_c = self.subset(&test);
        test_c.unlabeled.clear();
        (self.subset(&train), test_c)
    }
}

/// Reads `label<TAB>text` lines. Blank lines and `#` comments are skipped;
/// records with empty text are skipped with a warning.
pub fn load_corpus(
    path: &Path,
    channel: Channel,
    num_classes: usize,
    scheme: LabelScheme,
) -> Result<(Corpus, LoadReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (corpus, report) = parse_corpus(&text, &path.display().to_string(), channel, num_classes, scheme)?;
    Ok((Corpus { name, ..corpus }, report))
}

pub fn parse_corpus(
    text: &str,
    origin: &str,
    channel: Channel,
    num_classes: usize,
    scheme: LabelScheme,
) -> Result<(Corpus, LoadReport)> {
    let mut report = LoadReport::default();
    let mut texts = Vec::new();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_owned(),
        line,
        message,
    };
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            report.blank_lines += 1;
            continue;
        }
        if line.starts_with('#') {
            report.comments += 1;
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(lineno, "expected `label<TAB>text`".into()))?;
        let raw: i64 = label
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("label `{label}` is not an integer")))?;
        let label = raw - scheme.offset();
        if label < 0 || label >= num_classes as i64 {
            return Err(parse_err(
                lineno,
                format!("label {raw} outside the {num_classes} declared classes"),
            ));
        }
        let tokens = tokenize(body);
        if tokens.is_empty() {
            warn!("{origin}:{lineno}: empty text skipped");
            report.empty_texts += 1;
            continue;
        }
        texts.push(LabeledText {
            label: label as usize,
            tokens,
        });
    }
    if report.blank_lines > 0 {
        log::info!("{origin}: skipped {} blank lines", report.blank_lines);
    }
    Ok((
        Corpus {
            name: String::new(),
            channel,
            num_classes,
            texts,
            unlabeled: vec![],
        },
        report,
    ))
}

/// One raw text per line; blank lines and `#` comments skipped.
pub fn load_unlabeled(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .collect())
}

pub fn write_corpus(corpus: &Corpus, path: &Path, scheme: LabelScheme) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for t in &corpus.texts {
        writeln!(w, "{}\t{}", t.label as i64 + scheme.offset(), t.tokens.join(" "))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_unlabeled(texts: &[Vec<String>], path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for t in texts {
        writeln!(w, "{}", t.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, c: usize) -> Result<(Corpus, LoadReport)> {
        parse_corpus(text, "mem", Channel::Short, c, LabelScheme::ZeroBased)
    }

    #[test]
    fn parses_a_record() {
        let (c, _) = parse("1\tgreat film .\n", 2).unwrap();
        assert_eq!(
            c.texts,
            vec![LabeledText {
                label: 1,
                tokens: vec!["great".into(), "film".into(), ".".into()]
            }]
        );
    }

    #[test]
    fn out_of_range_label_names_the_line() {
        let err = parse("0\tok\n7\tx\n", 5).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn skips_blank_comment_and_empty_records() {
        let (c, r) = parse("# header\n\n0\ta\n1\t  \n1\tb\n", 2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(r, LoadReport { blank_lines: 1, empty_texts: 1, comments: 1 });
    }

    #[test]
    fn one_based_mapping() {
        let (c, _) =
            parse_corpus("5\tsuperb\n1\tawful\n", "mem", Channel::Long, 5, LabelScheme::OneBased).unwrap();
        assert_eq!(c.texts[0].label, 4);
        assert_eq!(c.texts[1].label, 0);
        assert!(parse_corpus("0\tx\n", "mem", Channel::Long, 5, LabelScheme::OneBased).is_err());
    }

    #[test]
    fn many_lines_many_instances() {
        let text: String = (0..1600).map(|i| format!("{}\ttext number {i} .\n", i % 2)).collect();
        assert_eq!(parse(&text, 2).unwrap().0.len(), 1600);
    }

    #[test]
    fn file_round_trip() {
        let (c, _) = parse("1\tgood .\n0\tbad !\n", 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsv");
        write_corpus(&c, &p, LabelScheme::ZeroBased).unwrap();
        let (d, _) = load_corpus(&p, Channel::Short, 2, LabelScheme::ZeroBased).unwrap();
        assert_eq!(c.texts, d.texts);
        assert_eq!(d.name, "c");
    }

    #[test]
    fn holdout_split_partitions() {
        let text: String = (0..2000).map(|i| format!("{}\tt{i}\n", i % 2)).collect();
        let (c, _) = parse(&text, 2).unwrap();
        let (train, test) = c.split_holdout(0.2, 4);
        assert_eq!((train.len(), test.len()), (1600, 400));
        let mut all: Vec<_> = train.texts.iter().chain(&test.texts).map(|t| t.tokens[0].clone()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 2000);
    }
}
