//! Head file: a JSON object tagged by `kind`.
//!
//! ```json
//! {"kind":"linear","w_h":[...],"bias":0.0}
//! {"kind":"jacobian_bundle","rows":[[...],...],"baseline_logits":[...]}
//! {"kind":"mlp","w1":[[...],...],"b1":[...],"w2":[...],"b2":0.0}
//! ```
//! Jacobian rows follow manifest order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::canonical::to_canonical_string;
use crate::predictor::{HeadModel, JacobianBundle, LinearHead, MlpHead};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadFile {
    Linear {
        w_h: Vec<f64>,
        bias: f64,
    },
    JacobianBundle {
        rows: Vec<Vec<f64>>,
        baseline_logits: Vec<f64>,
    },
    Mlp {
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    },
}

fn vec_of<T: Scalar>(a: &Array1<T>) -> Vec<f64> {
    a.iter().map(|v| v.as_f64()).collect()
}

fn rows_of<T: Scalar>(a: &Array2<T>) -> Vec<Vec<f64>> {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

fn arr1<T: Scalar>(v: &[f64]) -> Array1<T> {
    v.iter()
        .map(|&x| T::from_f64(x).unwrap_or(T::nan()))
        .collect()
}

fn arr2<T: Scalar>(rows: &[Vec<f64>], what: &str) -> Result<Array2<T>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::LengthMismatch {
            what: format!("{what} row {i}"),
            expected: ncols,
            actual: r.len(),
        });
    }
    let flat: Vec<T> = rows
        .iter()
        .flatten()
        .map(|&x| T::from_f64(x).unwrap_or(T::nan()))
        .collect();
    Array2::from_shape_vec((rows.len(), ncols), flat)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

impl<T: Scalar> From<HeadModel<T>> for HeadFile {
    fn from(h: HeadModel<T>) -> Self {
        match h {
            HeadModel::Linear(l) => HeadFile::Linear {
                w_h: vec_of(&l.weights),
                bias: l.bias.as_f64(),
            },
            HeadModel::JacobianBundle(b) => HeadFile::JacobianBundle {
                rows: rows_of(&b.rows),
                baseline_logits: vec_of(&b.baseline_logits),
            },
            HeadModel::Mlp(m) => HeadFile::Mlp {
                w1: rows_of(&m.w1),
                b1: vec_of(&m.b1),
                w2: vec_of(&m.w2),
                b2: m.b2.as_f64(),
            },
        }
    }
}

impl<T: Scalar> TryFrom<HeadFile> for HeadModel<T> {
    type Error = Error;

    fn try_from(f: HeadFile) -> Result<Self> {
        let head = match f {
            HeadFile::Linear { w_h, bias } => HeadModel::Linear(LinearHead {
                weights: arr1(&w_h),
                bias: T::from_f64(bias).unwrap_or(T::nan()),
            }),
            HeadFile::JacobianBundle {
                rows,
                baseline_logits,
            } => HeadModel::JacobianBundle(JacobianBundle {
                rows: arr2(&rows, "jacobian")?,
                baseline_logits: arr1(&baseline_logits),
            }),
            HeadFile::Mlp { w1, b1, w2, b2 } => HeadModel::Mlp(MlpHead::new(
                arr2(&w1, "w1")?,
                arr1(&b1),
                arr1(&w2),
                T::from_f64(b2).unwrap_or(T::nan()),
            )?),
        };
        head.validate()?;
        Ok(head)
    }
}

pub fn load_head<T: Scalar>(path: impl AsRef<Path>) -> Result<HeadModel<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: HeadFile =
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("head file: {e}")))?;
    HeadModel::try_from(file)
}

pub fn save_head<T: Scalar>(head: &HeadModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_canonical_string(&HeadFile::from(head.clone()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
