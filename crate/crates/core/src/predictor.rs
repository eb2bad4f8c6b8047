//! Rank-1 intervention and its closed-form logit predictor.
//!
//! The intervention is `cls' = cls − ε⟨cls, d⟩d`; at ε = 1 it removes the
//! component along `d`. The predicted logit change is
//! `Δlogit = −ε⟨cls, d⟩⟨∇logit, d⟩`, which is exact for linear heads and
//! first-order for smooth nonlinear ones.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::geometry::{AxisId, AxisKind, Direction, EmbeddingMatrix};
use crate::intervention::Cell;
use crate::linalg::{dot, norm};
use crate::scalar::{compensated_sum, Scalar};

/// Upper end of the ε range where the first-order predictor is expected
/// to hold on smooth heads.
pub const TAYLOR_BAND: f64 = 0.7;

/// Default signed ε grid.
pub const DEFAULT_EPS_GRID: [f64; 10] = [-1.0, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 1.0];

pub const UPDATE_RULE: &str = "cls' = cls - eps * <cls, d> * d (d unit)";

/// Affine read-out `logit = ⟨w, cls⟩ + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearHead<T: Scalar> {
    pub weights: Array1<T>,
    pub bias: T,
}

/// Per-text gradient rows and baseline logits exported for a nonlinear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct JacobianBundle<T: Scalar> {
    pub rows: Array2<T>,
    pub baseline_logits: Array1<T>,
}

/// Two-layer tanh network `w2 · tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MlpHead<T: Scalar> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array1<T>,
    pub b2: T,
}

impl<T: Scalar> MlpHead<T> {
    pub fn new(w1: Array2<T>, b1: Array1<T>, w2: Array1<T>, b2: T) -> Result<Self> {
        ensure_dims(w1.nrows(), b1.len())?;
        ensure_dims(w1.nrows(), w2.len())?;
        if w1.nrows() == 0 || w1.ncols() == 0 {
            return Err(Error::InvalidArgument("MLP widths must be positive".into()));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn logit(&self, x: ArrayView1<T>) -> T {
        let hidden = (self.w1.dot(&x) + &self.b1).mapv(T::tanh);
        dot(self.w2.view(), hidden.view()) + self.b2
    }

    pub fn gradient(&self, x: ArrayView1<T>) -> Array1<T> {
        let act = (self.w1.dot(&x) + &self.b1).mapv(T::tanh);
        let upstream = &self.w2 * &act.mapv(|a| T::one() - a * a);
        self.w1.t().dot(&upstream)
    }
}

/// Serialized through the head-file schema (`kind` tag, plain arrays).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "",
    try_from = "crate::io::head::HeadFile",
    into = "crate::io::head::HeadFile"
)]
pub enum HeadModel<T: Scalar> {
    Linear(LinearHead<T>),
    JacobianBundle(JacobianBundle<T>),
    Mlp(MlpHead<T>),
}

impl<T: Scalar> HeadModel<T> {
    pub fn linear(weights: Array1<T>, bias: T) -> Self {
        HeadModel::Linear(LinearHead { weights, bias })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HeadModel::Linear(_) => "linear",
            HeadModel::JacobianBundle(_) => "jacobian_bundle",
            HeadModel::Mlp(_) => "mlp",
        }
    }

    pub fn h(&self) -> usize {
        match self {
            HeadModel::Linear(l) => l.weights.len(),
            HeadModel::JacobianBundle(b) => b.rows.ncols(),
            HeadModel::Mlp(m) => m.w1.ncols(),
        }
    }

    /// Whether the head can score arbitrary (e.g. ablated) vectors.
    pub fn is_evaluable(&self) -> bool {
        !matches!(self, HeadModel::JacobianBundle(_))
    }

    pub fn logit(&self, cls: ArrayView1<T>) -> Result<T> {
        ensure_dims(self.h(), cls.len())?;
        match self {
            HeadModel::Linear(l) => Ok(dot(l.weights.view(), cls) + l.bias),
            HeadModel::Mlp(m) => Ok(m.logit(cls)),
            HeadModel::JacobianBundle(_) => Err(Error::UnsupportedHead("jacobian_bundle")),
        }
    }

    /// Gradient of the logit for text `index` whose embedding is `cls`.
    pub fn gradient_row(&self, index: usize, cls: ArrayView1<T>) -> Result<Array1<T>> {
        ensure_dims(self.h(), cls.len())?;
        match self {
            HeadModel::Linear(l) => Ok(l.weights.clone()),
            HeadModel::Mlp(m) => Ok(m.gradient(cls)),
            HeadModel::JacobianBundle(b) => {
                if index >= b.rows.nrows() {
                    return Err(Error::MissingJacobianRow(index));
                }
                Ok(b.rows.row(index).to_owned())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            HeadModel::Linear(l) => all_finite(l.weights.iter()) && l.bias.is_finite(),
            HeadModel::JacobianBundle(b) => {
                if b.rows.nrows() != b.baseline_logits.len() {
                    return Err(Error::LengthMismatch {
                        what: "baseline logits".into(),
                        expected: b.rows.nrows(),
                        actual: b.baseline_logits.len(),
                    });
                }
                all_finite(b.rows.iter()) && all_finite(b.baseline_logits.iter())
            }
            HeadModel::Mlp(m) => {
                all_finite(m.w1.iter())
                    && all_finite(m.b1.iter())
                    && all_finite(m.w2.iter())
                    && m.b2.is_finite()
            }
        };
        if !ok {
            return Err(Error::NonFinite {
                what: "head parameters".into(),
                row: 0,
            });
        }
        Ok(())
    }
}

fn all_finite<'a, T: Scalar>(mut it: impl Iterator<Item = &'a T>) -> bool {
    it.all(|x| x.is_finite())
}

/// `cls − ε⟨cls, d⟩d`.
pub fn apply_ablation<T: Scalar>(
    cls: ArrayView1<T>,
    d: &Direction<T>,
    epsilon: T,
) -> Result<Array1<T>> {
    ensure_dims(d.h(), cls.len())?;
    let coeff = epsilon * dot(cls, d.unit());
    Ok(&cls - &(&d.unit() * coeff))
}

/// Row-wise ablation of a whole embedding matrix.
pub fn ablate_matrix<T: Scalar>(
    emb: &EmbeddingMatrix<T>,
    d: &Direction<T>,
    epsilon: T,
) -> Result<EmbeddingMatrix<T>> {
    ensure_dims(d.h(), emb.h())?;
    let proj = emb.data().dot(&d.unit()) * epsilon;
    let update = proj
        .insert_axis(Axis(1))
        .dot(&d.unit().insert_axis(Axis(0)));
    emb.with_data(&emb.data() - &update)
}

/// `−ε⟨cls, d⟩⟨grad, d⟩` given the head's gradient row for this text.
pub fn predict_from_gradient<T: Scalar>(
    cls: ArrayView1<T>,
    d: &Direction<T>,
    gradient: ArrayView1<T>,
    epsilon: T,
) -> Result<T> {
    ensure_dims(d.h(), cls.len())?;
    ensure_dims(d.h(), gradient.len())?;
    Ok(-epsilon * dot(cls, d.unit()) * dot(gradient, d.unit()))
}

/// Closed-form Δlogit for text `index`.
pub fn predict_delta_logit<T: Scalar>(
    cls: ArrayView1<T>,
    index: usize,
    d: &Direction<T>,
    head: &HeadModel<T>,
    epsilon: T,
) -> Result<T> {
    let grad = head.gradient_row(index, cls)?;
    predict_from_gradient(cls, d, grad.view(), epsilon)
}

/// Measured Δlogit for a linear head: `logit(ablated) − logit(cls)`.
/// Nonlinear measurements come precomputed from the extractor.
pub fn measure_delta_logit<T: Scalar>(
    cls: ArrayView1<T>,
    d: &Direction<T>,
    head: &HeadModel<T>,
    epsilon: T,
) -> Result<T> {
    match head {
        HeadModel::Linear(_) => evaluate_delta_logit(cls, d, head, epsilon),
        other => Err(Error::UnsupportedHead(other.kind())),
    }
}

/// Measured Δlogit for any head that can score ablated vectors.
pub fn evaluate_delta_logit<T: Scalar>(
    cls: ArrayView1<T>,
    d: &Direction<T>,
    head: &HeadModel<T>,
    epsilon: T,
) -> Result<T> {
    let ablated = apply_ablation(cls, d, epsilon)?;
    Ok(head.logit(ablated.view())? - head.logit(cls)?)
}

/// `1 − SS_resid / SS_total` of the identity fit measured ≈ predicted.
pub fn fit_r2<T: Scalar>(predicted: &[T], measured: &[T]) -> Result<T> {
    ensure_dims(measured.len(), predicted.len())?;
    if measured.len() < 2 {
        return Err(Error::Empty("R² needs at least two measurements".into()));
    }
    let m = compensated_sum(measured.iter().copied()) / T::from_usize_lossy(measured.len());
    let ss_tot = compensated_sum(measured.iter().map(|&v| (v - m) * (v - m)));
    if ss_tot <= T::zero() {
        return Err(Error::ZeroVariance("measured".into()));
    }
    let ss_res = compensated_sum(
        measured
            .iter()
            .zip(predicted)
            .map(|(&a, &b)| (a - b) * (a - b)),
    );
    Ok(T::one() - ss_res / ss_tot)
}

/// Per-text predictions for one (axis, ε), with both factors of the product
/// exposed so sign flips can be attributed to either side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PredictionRecord<T: Scalar> {
    pub epsilon: T,
    pub axis: AxisId,
    pub predicted: Vec<T>,
    pub measured: Option<Vec<T>>,
    /// ⟨cls_t, d⟩
    pub cls_factor: Vec<T>,
    /// ⟨∇logit_t, d⟩
    pub head_factor: Vec<T>,
    pub r2: Option<T>,
}

/// Predicts every text of `emb`; measures too when the head is evaluable
/// (or takes `measured` from the caller, e.g. extractor output).
pub fn prediction_record<T: Scalar>(
    emb: &EmbeddingMatrix<T>,
    d: &Direction<T>,
    head: &HeadModel<T>,
    epsilon: T,
    measured: Option<Vec<T>>,
) -> Result<PredictionRecord<T>> {
    ensure_dims(head.h(), emb.h())?;
    let n = emb.n();
    let mut predicted = Vec::with_capacity(n);
    let mut cls_factor = Vec::with_capacity(n);
    let mut head_factor = Vec::with_capacity(n);
    for i in 0..n {
        let cls = emb.row(i);
        let grad = head.gradient_row(i, cls)?;
        let c = dot(cls, d.unit());
        let g = dot(grad.view(), d.unit());
        cls_factor.push(c);
        head_factor.push(g);
        predicted.push(-epsilon * c * g);
    }
    let measured = match measured {
        Some(m) => {
            if m.len() != n {
                return Err(Error::LengthMismatch {
                    what: "measured Δlogit".into(),
                    expected: n,
                    actual: m.len(),
                });
            }
            Some(m)
        }
        None if head.is_evaluable() => Some(
            (0..n)
                .map(|i| evaluate_delta_logit(emb.row(i), d, head, epsilon))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let r2 = match &measured {
        Some(m) => fit_r2(&predicted, m).ok(),
        None => None,
    };
    Ok(PredictionRecord {
        epsilon,
        axis: d.axis.clone(),
        predicted,
        measured,
        cls_factor,
        head_factor,
        r2,
    })
}

/// Relative predictor error at one ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TaylorRow<T: Scalar> {
    pub epsilon: T,
    pub median_relative_error: T,
    pub max_relative_error: T,
    pub median_absolute_error: T,
    pub n: usize,
    pub in_band: bool,
}

fn median<T: Scalar>(mut v: Vec<T>) -> T {
    if v.is_empty() {
        return T::nan();
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

/// Linear-interpolated quantile (`q` in [0, 1]).
pub fn quantile<T: Scalar>(values: &[T], q: T) -> T {
    if values.is_empty() {
        return T::nan();
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = q * T::from_usize_lossy(v.len() - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(v.len() - 1);
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - T::from_usize_lossy(lo);
    v[lo] + (v[hi] - v[lo]) * frac
}

/// Predictor-vs-measured error table over an ε grid. Rows keep the sign of
/// ε so direction-asymmetric behaviour stays visible. Texts whose measured
/// change is below `1e-12` are left out of the relative error.
pub fn taylor_table<T: Scalar>(
    emb: &EmbeddingMatrix<T>,
    d: &Direction<T>,
    head: &HeadModel<T>,
    eps_grid: &[T],
) -> Result<Vec<TaylorRow<T>>> {
    if !head.is_evaluable() {
        return Err(Error::UnsupportedHead(head.kind()));
    }
    eps_grid
        .iter()
        .map(|&eps| {
            let rec = prediction_record(emb, d, head, eps, None)?;
            let measured = rec.measured.expect("evaluable head");
            let mut rel = Vec::new();
            let mut abs = Vec::new();
            for (&m, &p) in measured.iter().zip(&rec.predicted) {
                abs.push((m - p).abs());
                if m.abs() > T::lit(1e-12) {
                    rel.push((m - p).abs() / m.abs());
                }
            }
            let max_rel = rel.iter().fold(T::zero(), |a, &b| a.max(b));
            Ok(TaylorRow {
                epsilon: eps,
                n: rel.len(),
                median_relative_error: median(rel),
                max_relative_error: max_rel,
                median_absolute_error: median(abs),
                in_band: eps.abs() <= T::lit(TAYLOR_BAND + 1e-12),
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    ensure_dims(x.len(), y.len())?;
    if x.len() < 2 || x.iter().chain(y).any(|&v| v <= T::zero()) {
        return Err(Error::InvalidArgument(
            "log-log slope needs ≥ 2 positive points".into(),
        ));
    }
    let lx: Vec<T> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let n = T::from_usize_lossy(lx.len());
    let mx = compensated_sum(lx.iter().copied()) / n;
    let my = compensated_sum(ly.iter().copied()) / n;
    let sxy = compensated_sum(lx.iter().zip(&ly).map(|(&a, &b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(lx.iter().map(|&a| (a - mx) * (a - mx)));
    Ok(sxy / sxx)
}

/// Isotropic unit directions from a seeded ChaCha stream, optionally
/// Gram–Schmidt-orthogonalized against `orthogonal_to`.
pub fn random_directions<T: Scalar>(
    h: usize,
    k: usize,
    seed: u64,
    orthogonal_to: Option<&Direction<T>>,
) -> Result<Vec<Direction<T>>> {
    if let Some(o) = orthogonal_to {
        ensure_dims(h, o.h())?;
        if h < 2 {
            return Err(Error::InvalidArgument(
                "orthogonal complement is empty (h = 1)".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Array1<T> = (0..h)
            .map(|_| T::lit(StandardNormal.sample(&mut rng)))
            .collect();
        if let Some(o) = orthogonal_to {
            // two passes keep the residual cosine at rounding level
            for _ in 0..2 {
                let c = dot(v.view(), o.unit());
                v = &v - &(&o.unit() * c);
            }
        }
        if norm(v.view()) <= T::lit(1e-8) {
            continue;
        }
        let idx = out.len();
        out.push(Direction::from_unit(
            AxisId::with_suffix(AxisKind::Random, idx.to_string()),
            v,
            format!("isotropic normal, seed {seed}, draw {idx}"),
        )?);
    }
    Ok(out)
}

/// Distribution of bias-pool |ΔFPR| (and per-text |Δlogit|) over random axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NullSummary<T: Scalar> {
    pub k: usize,
    pub epsilon: T,
    pub seed: u64,
    pub abs_delta_fpr: Vec<T>,
    pub max_abs_delta_fpr: T,
    pub median_abs_delta_fpr: T,
    pub q90_abs_delta_fpr: T,
    pub abs_delta_logit_q50: T,
    pub abs_delta_logit_q90: T,
    pub abs_delta_logit_q99: T,
}

pub fn random_axis_null<T: Scalar>(
    cell: &Cell<T>,
    epsilon: T,
    k: usize,
    seed: u64,
    orthogonal_to: Option<&Direction<T>>,
) -> Result<NullSummary<T>> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let baseline = cell.evaluate(None)?;
    let dirs = random_directions(cell.h(), k, seed, orthogonal_to)?;
    let per_dir: Vec<(T, Vec<T>)> = dirs
        .par_iter()
        .map(|d| -> Result<(T, Vec<T>)> {
            let block = cell.evaluate(Some((d, epsilon)))?;
            let mut dl = Vec::new();
            for pool in cell.pools() {
                for i in 0..pool.emb.n() {
                    dl.push(evaluate_delta_logit(pool.emb.row(i), d, cell.head(), epsilon)?.abs());
                }
            }
            Ok(((block.fpr_at_tau - baseline.fpr_at_tau).abs(), dl))
        })
        .collect::<Result<_>>()?;
    let abs_delta_fpr: Vec<T> = per_dir.iter().map(|(f, _)| *f).collect();
    let all_dl: Vec<T> = per_dir.into_iter().flat_map(|(_, v)| v).collect();
    Ok(NullSummary {
        k,
        epsilon,
        seed,
        max_abs_delta_fpr: abs_delta_fpr.iter().fold(T::zero(), |a, &b| a.max(b)),
        median_abs_delta_fpr: quantile(&abs_delta_fpr, T::lit(0.5)),
        q90_abs_delta_fpr: quantile(&abs_delta_fpr, T::lit(0.9)),
        abs_delta_logit_q50: quantile(&all_dl, T::lit(0.5)),
        abs_delta_logit_q90: quantile(&all_dl, T::lit(0.9)),
        abs_delta_logit_q99: quantile(&all_dl, T::lit(0.99)),
        abs_delta_fpr,
    })
}
