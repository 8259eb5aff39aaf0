//! Binary checkpoint format, all integers and reals little-endian:
//!
//! ```text
//! magic  "CLTMODEL"            8 bytes
//! version u32                   currently 1
//! kind u8, flags u8             bit 0: joint head used, bit 1: segment-mean test head
//! C u32, V u32, E u32, A u32, maps u32, n_widths u32, widths u32 * n_widths
//! dropout f64
//! n_params u32
//! per parameter, in declaration order:
//!   name_len u32, name utf-8, ndim u32, dims u64 * ndim, values f64 * numel
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, ModelKind, TestHead};
use crate::error::{Error, Result};
use crate::numcore::{HasParameters, Real};

const MAGIC: &[u8; 8] = b"CLTMODEL";
const VERSION: u32 = 1;

fn kind_tag(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Cnn => 0,
        ModelKind::BaggedCnn => 1,
        ModelKind::LeTraNets => 2,
    }
}

pub fn write_checkpoint<W: Write>(model: &Model, w: &mut W) -> std::io::Result<()> {
    let cfg = model.config();
    let flags = match model {
        Model::LeTraNets(m) => u8::from(m.use_joint) | (u8::from(m.test_head == TestHead::SegmentMean) << 1),
        _ => 0,
    };
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[kind_tag(model.kind()), flags])?;
    let header = [
        cfg.num_classes,
        model.embedding().vocab_size(),
        cfg.embed_dim,
        cfg.attention_dim,
        cfg.feature_maps,
        cfg.filter_widths.len(),
    ];
    for v in header.iter().chain(&cfg.filter_widths) {
        w.write_all(&(*v as u32).to_le_bytes())?;
    }
    w.write_all(&(cfg.dropout as f64).to_le_bytes())?;
    let params = model.parameters();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.value.shape().len() as u32).to_le_bytes())?;
        for &d in p.value.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in p.value.data() {
            w.write_all(&(x as f64).to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.bytes()?) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Model> {
    let mut c = Cursor { r };
    if &c.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a model checkpoint".into()));
    }
    let version = c.u32()?;
    if version as u32 != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let kind = match c.u8()? {
        0 => ModelKind::Cnn,
        1 => ModelKind::BaggedCnn,
        2 => ModelKind::LeTraNets,
        t => return Err(Error::Checkpoint(format!("unknown model tag {t}"))),
    };
    let flags = c.u8()?;
    if flags > 3 {
        return Err(Error::Checkpoint(format!("unknown flags {flags:#04x}")));
    }
    let (classes, vocab, embed_dim, attention_dim, maps, n_widths) =
        (c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?);
    let filter_widths = (0..n_widths).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let cfg = ModelConfig {
        num_classes: classes,
        embed_dim,
        filter_widths,
        feature_maps: maps,
        attention_dim,
        dropout: c.f64()? as Real,
    };
    cfg.validate()
        .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;
    let mut model = Model::zeros(kind, &cfg, vocab);
    if let Model::LeTraNets(m) = &mut model {
        m.use_joint = flags & 1 != 0;
        m.test_head = if flags & 2 != 0 {
            TestHead::SegmentMean
        } else {
            TestHead::Document
        };
    }
    let n_params = c.u32()?;
    let mut params = model.parameters_mut();
    if n_params != params.len() {
        return Err(Error::Checkpoint(format!(
            "{n_params} tensors stored, architecture has {}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let len = c.u32()?;
        let mut name = vec![0u8; len];
        c.r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("non-utf8 name".into()))?;
        if name != p.name {
            return Err(Error::Checkpoint(format!(
                "expected tensor `{}`, found `{name}`",
                p.name
            )));
        }
        let ndim = c.u32()?;
        let dims = (0..ndim).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
        if dims != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {dims:?}, expected {:?}",
                p.value.shape()
            )));
        }
        for x in p.value.data_mut() {
            *x = c.f64()? as Real;
        }
    }
    drop(params);
    let mut rest = [0u8; 1];
    if c.r.read(&mut rest).unwrap_or(0) != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(model, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
