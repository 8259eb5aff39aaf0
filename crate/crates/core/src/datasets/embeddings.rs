use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Real, Tensor};
use crate::seed::rng_for;
use crate::textproc::{Vocabulary, PAD};

/// Dimension of the pretrained vectors the models are configured for by default.
pub const DEFAULT_EMBEDDING_DIM: usize = 300;

/// Range of the uniform initialisation for rows without a pretrained vector.
pub const RANDOM_INIT_BOUND: Real = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingLoadReport {
    /// In-vocabulary tokens (reserved ids excluded) found in the file.
    pub found: usize,
    /// In-vocabulary tokens with no vector in the file.
    pub missing: usize,
    pub duplicates: usize,
    pub coverage: f64,
}

/// Random table: uniform(-0.25, 0.25) everywhere except the all-zero PAD row.
pub fn random_embeddings(vocab_size: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = rng_for(seed, "embedding-init", &[]);
    let mut t = Tensor::zeros(&[vocab_size, dim]);
    for i in 0..vocab_size {
        if i as u32 == PAD {
            continue;
        }
        for v in t.row_mut(i) {
            *v = rng.gen_range(-RANDOM_INIT_BOUND..RANDOM_INIT_BOUND);
        }
    }
    t
}

/// Reads `token v1 .. vD` lines. Rows of tokens present in `vocab` are copied;
/// every other row (and UNK) keeps its seeded random initialisation; PAD stays
/// zero. The first occurrence of a duplicated token wins.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<(Tensor, EmbeddingLoadReport)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(f), &path.display().to_string(), vocab, dim, seed)
}

pub fn read_embeddings<R: BufRead>(
    reader: R,
    origin: &str,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<(Tensor, EmbeddingLoadReport)> {
    let mut table = random_embeddings(vocab.len(), dim, seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut found = 0usize;
    let mut duplicates = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().expect("non-blank line has a field");
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(Error::Parse {
                path: origin.to_owned(),
                line: lineno,
                message: format!("expected {dim} components, found {}", values.len()),
            });
        }
        if !seen.insert(token.to_owned()) {
            warn!("{origin}:{lineno}: duplicate vector for `{token}` ignored");
            duplicates += 1;
            continue;
        }
        let id = vocab.id(token);
        if !vocab.contains(token) || id == PAD || id == crate::textproc::UNK {
            continue;
        }
        let row = table.row_mut(id as usize);
        for (slot, v) in row.iter_mut().zip(&values) {
            *slot = v.parse::<Real>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Parse {
                path: origin.to_owned(),
                line: lineno,
                message: format!("`{v}` is not a finite number"),
            })?;
        }
        found += 1;
    }
    let regular = vocab.len() - 2;
    let coverage = if regular == 0 {
        0.0
    } else {
        found as f64 / regular as f64
    };
    Ok((
        table,
        EmbeddingLoadReport {
            found,
            missing: regular - found,
            duplicates,
            coverage,
        },
    ))
}
