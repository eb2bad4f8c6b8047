//! Import shim for 2-D `.npy` arrays (`<f4` or `<f8`, C order). EMB1 stays
//! the canonical container; this only converts.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::EmbeddingMatrix;
use crate::scalar::Scalar;

const MAGIC: &[u8] = b"\x93NUMPY";

fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}':");
    let start = header.find(&pat)? + pat.len();
    Some(header[start..].trim_start())
}

/// Parses a `.npy` byte buffer into a row-major matrix.
pub fn parse_npy<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Array2<T>> {
    let bad = |m: &str| Error::format(path, m.to_string());
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad("missing NUMPY magic"));
    }
    let major = bytes[6];
    let (header_len, offset) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(bad("short header"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(bad(&format!("unsupported npy version {v}"))),
    };
    let end = offset + header_len;
    if bytes.len() < end {
        return Err(bad("header runs past end of file"));
    }
    let header = std::str::from_utf8(&bytes[offset..end]).map_err(|_| bad("header not UTF-8"))?;
    let descr = header_value(header, "descr").ok_or_else(|| bad("no descr"))?;
    let width = if descr.starts_with("'<f4'") {
        4
    } else if descr.starts_with("'<f8'") {
        8
    } else {
        return Err(bad(&format!(
            "unsupported dtype {}",
            descr.split(',').next().unwrap_or("")
        )));
    };
    let fortran = header_value(header, "fortran_order").ok_or_else(|| bad("no fortran_order"))?;
    if fortran.starts_with("True") {
        return Err(bad("Fortran-ordered arrays are not supported"));
    }
    let shape = header_value(header, "shape").ok_or_else(|| bad("no shape"))?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| bad("malformed shape"))?;
    let dims: Vec<usize> = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad("malformed shape")))
        .collect::<Result<_>>()?;
    let [n, h] = dims[..] else {
        return Err(bad(&format!("expected a 2-D array, got shape {dims:?}")));
    };
    let body = &bytes[end..];
    let expected = n * h * width;
    if body.len() != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: body.len(),
        });
    }
    let values: Vec<T> = if width == 4 {
        body.chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])).unwrap_or(T::nan()))
            .collect()
    } else {
        body.chunks_exact(8)
            .map(|c| {
                let mut b = [0u8; 8];
                b.copy_from_slice(c);
                T::from_f64(f64::from_le_bytes(b)).unwrap_or(T::nan())
            })
            .collect()
    };
    Array2::from_shape_vec((n, h), values).map_err(|e| bad(&e.to_string()))
}

pub fn import_npy<T: Scalar>(
    path: impl AsRef<Path>,
    cell_id: &str,
    architecture: &str,
    layer: i64,
) -> Result<EmbeddingMatrix<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::new(cell_id, architecture, layer, parse_npy(&bytes, path)?)
}
