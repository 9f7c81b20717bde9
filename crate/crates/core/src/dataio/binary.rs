//! Little-endian binary containers: feature matrices (`SZFM`), checkpoints
//! (`SZCK`) and normalized images (`SZIM`). Floats are always stored as
//! 32-bit IEEE-754.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matcher::TemplateMatrix;
use crate::nnkernel::Tensor;
use crate::prep::{NormalizedImage, CANVAS};
use crate::scalar::Scalar;
use crate::siamese::EMBED_DIM;

pub const FEATURE_MAGIC: &[u8; 4] = b"SZFM";
pub const FEATURE_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SZCK";
pub const IMAGE_MAGIC: &[u8; 4] = b"SZIM";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::LengthMismatch(format!(
                "{what}: need {n} bytes, {} left",
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::LengthMismatch(what.into()))?,
            what,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn magic(&mut self, expected: &'static [u8; 4], name: &'static str) -> Result<()> {
        let found = self.take(4, "magic").map_err(|_| Error::BadMagic {
            expected: name,
            found: self.buf.to_vec(),
        })?;
        if found != expected {
            return Err(Error::BadMagic {
                expected: name,
                found: found.to_vec(),
            });
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s<T: Scalar>(out: &mut Vec<u8>, vals: &[T]) {
    for v in vals {
        out.extend_from_slice(&v.to_single().to_le_bytes());
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_feature_matrix<T: Scalar>(m: &TemplateMatrix<T>) -> Result<Vec<u8>> {
    if m.rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut out = Vec::with_capacity(16 + m.features().len() * 4 + m.rows() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut out, FEATURE_VERSION);
    put_u32(&mut out, m.rows() as u32);
    put_u32(&mut out, m.dim() as u32);
    put_f32s(&mut out, m.features());
    for &id in m.class_ids() {
        put_u32(&mut out, id);
    }
    Ok(out)
}

pub fn decode_feature_matrix<T: Scalar>(bytes: &[u8]) -> Result<TemplateMatrix<T>> {
    let mut r = Reader::new(bytes);
    r.magic(FEATURE_MAGIC, "SZFM")?;
    let version = r.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    if cols != EMBED_DIM {
        return Err(Error::LengthMismatch(format!(
            "{cols} columns, expected {EMBED_DIM}"
        )));
    }
    let expected = rows * cols * 4 + rows * 4;
    if r.remaining() != expected {
        return Err(Error::LengthMismatch(format!(
            "{rows}x{cols} matrix needs {expected} payload bytes, file has {}",
            r.remaining()
        )));
    }
    let features = r
        .f32s(rows * cols, "payload")?
        .into_iter()
        .map(T::narrow_from)
        .collect();
    let ids = (0..rows)
        .map(|_| r.u32("class ids"))
        .collect::<Result<Vec<_>>>()?;
    TemplateMatrix::new(ids, features, cols)
}

pub fn write_feature_matrix<T: Scalar>(
    m: &TemplateMatrix<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), &encode_feature_matrix(m)?)
}

pub fn read_feature_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<TemplateMatrix<T>> {
    decode_feature_matrix(&read_file(path.as_ref())?)
}

/// A set of named tensors that can be persisted as a checkpoint.
pub trait ParameterSet<T: Scalar> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)>;
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;
}

pub fn encode_tensors<T: Scalar>(tensors: &[(String, &Tensor<T>)]) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    for (name, t) in tensors {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        put_f32s(&mut out, t.data());
    }
    out
}

/// Decodes every record of a checkpoint, keyed by name.
pub fn decode_tensors<T: Scalar>(bytes: &[u8]) -> Result<BTreeMap<String, Tensor<T>>> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC, "SZCK")?;
    let mut out = BTreeMap::new();
    while r.remaining() > 0 {
        let len = r.u32("name length")? as usize;
        let name = String::from_utf8(r.take(len, "name")?.to_vec())
            .map_err(|_| Error::LengthMismatch("tensor name is not UTF-8".into()))?;
        let rank = r.u32("rank")? as usize;
        let dims = (0..rank)
            .map(|_| r.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = dims.iter().product();
        let data = r
            .f32s(count, &name)?
            .into_iter()
            .map(T::narrow_from)
            .collect();
        out.insert(name, Tensor::new(&dims, data)?);
    }
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(
    params: &impl ParameterSet<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), &encode_tensors(&params.named_tensors()))
}

/// Overwrites every tensor of `params` from the records in `bytes`.
pub fn restore_tensors<T: Scalar>(params: &mut impl ParameterSet<T>, bytes: &[u8]) -> Result<()> {
    let mut records = decode_tensors::<T>(bytes)?;
    for (name, slot) in params.named_tensors_mut() {
        let stored = records
            .remove(&name)
            .ok_or_else(|| Error::MissingParameter(name.clone()))?;
        if stored.shape() != slot.shape() {
            return Err(Error::ShapeMismatch {
                name,
                expected: slot.shape().to_vec(),
                found: stored.shape().to_vec(),
            });
        }
        *slot = stored;
    }
    if let Some(extra) = records.keys().next() {
        return Err(Error::LengthMismatch(format!("unexpected tensor {extra}")));
    }
    Ok(())
}

pub fn load_checkpoint_into<T: Scalar>(
    params: &mut impl ParameterSet<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    restore_tensors(params, &read_file(path.as_ref())?)
}

pub fn encode_normalized(img: &NormalizedImage) -> Vec<u8> {
    let mut out = IMAGE_MAGIC.to_vec();
    put_u32(&mut out, CANVAS as u32);
    put_u32(&mut out, CANVAS as u32);
    put_f32s(&mut out, img.pixels());
    out
}

pub fn decode_normalized(bytes: &[u8]) -> Result<NormalizedImage> {
    let mut r = Reader::new(bytes);
    r.magic(IMAGE_MAGIC, "SZIM")?;
    let w = r.u32("width")? as usize;
    let h = r.u32("height")? as usize;
    if (w, h) != (CANVAS, CANVAS) {
        return Err(Error::LengthMismatch(format!(
            "{w}x{h} image, expected {CANVAS}x{CANVAS}"
        )));
    }
    let px = r.f32s(w * h, "payload")?;
    if r.remaining() != 0 {
        return Err(Error::LengthMismatch(format!(
            "{} trailing bytes",
            r.remaining()
        )));
    }
    NormalizedImage::new(px)
}

pub fn save_normalized(img: &NormalizedImage, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_normalized(img))
}

pub fn load_normalized(path: impl AsRef<Path>) -> Result<NormalizedImage> {
    decode_normalized(&read_file(path.as_ref())?)
}
