//! EMB1 embedding container: one JSON header line, then `n·h` little-endian
//! f32 values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::EmbeddingMatrix;
use crate::io::canonical::to_canonical_string;
use crate::scalar::Scalar;

pub const FORMAT: &str = "EMB1";
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emb1Header {
    pub format: String,
    pub n: usize,
    pub h: usize,
    pub dtype: String,
    pub cell_id: String,
    pub architecture: String,
    pub layer: i64,
}

pub fn write_embeddings<T: Scalar, W: Write>(emb: &EmbeddingMatrix<T>, mut w: W) -> Result<()> {
    let header = Emb1Header {
        format: FORMAT.into(),
        n: emb.n(),
        h: emb.h(),
        dtype: DTYPE.into(),
        cell_id: emb.cell_id.clone(),
        architecture: emb.architecture.clone(),
        layer: emb.layer,
    };
    let mut bytes = to_canonical_string(&header)?.into_bytes();
    bytes.push(b'\n');
    bytes.reserve(4 * emb.n() * emb.h());
    for v in emb.data().iter() {
        bytes.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    w.write_all(&bytes).map_err(|e| Error::io("<writer>", e))
}

/// Parses an EMB1 stream; `path` only labels errors.
pub fn read_embeddings<T: Scalar, R: Read>(mut r: R, path: &Path) -> Result<EmbeddingMatrix<T>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let Some(nl) = buf.iter().position(|&b| b == b'\n') else {
        return Err(Error::format(path, "header line is not newline-terminated"));
    };
    let header: Emb1Header = serde_json::from_slice(&buf[..nl])
        .map_err(|e| Error::format(path, format!("header is not valid EMB1 JSON: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::format(
            path,
            format!("format `{}` is not {FORMAT}", header.format),
        ));
    }
    if header.dtype != DTYPE {
        return Err(Error::format(
            path,
            format!("dtype `{}` is not {DTYPE}", header.dtype),
        ));
    }
    let body = &buf[nl + 1..];
    let expected = header
        .n
        .checked_mul(header.h)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::format(path, "n·h overflows"))?;
    if body.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: body.len(),
        });
    }
    if body.len() > expected {
        return Err(Error::format(
            path,
            format!(
                "body holds {} bytes but header n = {}, h = {} implies {expected}",
                body.len(),
                header.n,
                header.h
            ),
        ));
    }
    let values: Vec<T> = body
        .chunks_exact(4)
        .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])).unwrap_or(T::nan()))
        .collect();
    let data = Array2::from_shape_vec((header.n, header.h), values)
        .map_err(|e| Error::format(path, e.to_string()))?;
    EmbeddingMatrix::new(header.cell_id, header.architecture, header.layer, data)
}

pub fn save_embeddings<T: Scalar>(emb: &EmbeddingMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_embeddings(emb, &mut w).map_err(|e| relabel(e, path))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_embeddings<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingMatrix<T>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(f), path)
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}
