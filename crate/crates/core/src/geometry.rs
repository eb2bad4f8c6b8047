//! Axis construction and direction-level linear algebra over embedding
//! populations: centroid-difference axes, projections, cosines, OLS
//! residualization, partial correlation, single-component PLS, effective
//! rank and joint partial R².

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::linalg::{self, column_means, dot, norm};
use crate::scalar::{compensated_sum, Scalar};

/// Centroid differences below this norm are rejected as degenerate.
pub const DEGENERATE_AXIS_NORM: f64 = 1e-12;
/// Axes shorter than this fraction of the median row norm are flagged weak.
pub const WEAK_AXIS_FRACTION: f64 = 1e-3;

/// Per-text representation vectors for one (population, architecture, layer) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EmbeddingMatrix<T: Scalar> {
    pub cell_id: String,
    pub architecture: String,
    pub layer: i64,
    data: Array2<T>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    /// Validates n ≥ 1, h ≥ 2 and finiteness of every row.
    pub fn new(
        cell_id: impl Into<String>,
        architecture: impl Into<String>,
        layer: i64,
        data: Array2<T>,
    ) -> Result<Self> {
        let (n, h) = data.dim();
        if n == 0 {
            return Err(Error::InvalidEmbedding("no rows (n = 0)".into()));
        }
        if h < 2 {
            return Err(Error::InvalidEmbedding(format!("h = {h}, need at least 2")));
        }
        if let Some(row) = data
            .axis_iter(Axis(0))
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite {
                what: "embedding".into(),
                row,
            });
        }
        Ok(Self {
            cell_id: cell_id.into(),
            architecture: architecture.into(),
            layer,
            data,
        })
    }

    /// Anonymous matrix, mostly for tests and synthetic pools.
    pub fn from_rows(data: Array2<T>) -> Result<Self> {
        Self::new("", "", 0, data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn h(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, T> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.data.row(i)
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }

    pub fn centroid(&self) -> Array1<T> {
        column_means(self.data.view())
    }

    /// Same metadata, new rows. Rows must keep the shape.
    pub fn with_data(&self, data: Array2<T>) -> Result<Self> {
        ensure_dims(self.h(), data.ncols())?;
        Self::new(
            self.cell_id.clone(),
            self.architecture.clone(),
            self.layer,
            data,
        )
    }

    pub fn median_row_norm(&self) -> T {
        let mut norms: Vec<T> = self.data.axis_iter(Axis(0)).map(norm).collect();
        norms.sort_by(|a, b| a.partial_cmp(b).expect("finite rows"));
        let n = norms.len();
        if n % 2 == 1 {
            norms[n / 2]
        } else {
            (norms[n / 2 - 1] + norms[n / 2]) / T::lit(2.0)
        }
    }
}

/// Named axis families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AxisKind {
    #[serde(rename = "class")]
    Class,
    #[serde(rename = "typ_HC3")]
    TypHc3,
    #[serde(rename = "typ_A")]
    TypA,
    #[serde(rename = "typ_NYT")]
    TypNyt,
    #[serde(rename = "typ_FT")]
    TypFt,
    #[serde(rename = "form")]
    Form,
    #[serde(rename = "caps_PLS")]
    CapsPls,
    #[serde(rename = "probe")]
    Probe,
    #[serde(rename = "random")]
    Random,
}

impl AxisKind {
    pub const ALL: [AxisKind; 9] = [
        AxisKind::Class,
        AxisKind::TypHc3,
        AxisKind::TypA,
        AxisKind::TypNyt,
        AxisKind::TypFt,
        AxisKind::Form,
        AxisKind::CapsPls,
        AxisKind::Probe,
        AxisKind::Random,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AxisKind::Class => "class",
            AxisKind::TypHc3 => "typ_HC3",
            AxisKind::TypA => "typ_A",
            AxisKind::TypNyt => "typ_NYT",
            AxisKind::TypFt => "typ_FT",
            AxisKind::Form => "form",
            AxisKind::CapsPls => "caps_PLS",
            AxisKind::Probe => "probe",
            AxisKind::Random => "random",
        }
    }
}

/// Axis tag plus a free-form suffix (`typ_A/naive`, `random/7`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AxisId {
    pub kind: AxisKind,
    pub suffix: String,
}

impl AxisId {
    pub fn new(kind: AxisKind) -> Self {
        Self {
            kind,
            suffix: String::new(),
        }
    }

    pub fn with_suffix(kind: AxisKind, suffix: impl Into<String>) -> Self {
        Self {
            kind,
            suffix: suffix.into(),
        }
    }
}

impl fmt::Display for AxisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.suffix.is_empty() {
            f.write_str(self.kind.tag())
        } else {
            write!(f, "{}/{}", self.kind.tag(), self.suffix)
        }
    }
}

impl FromStr for AxisId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (tag, suffix) = match s.split_once('/') {
            Some((t, rest)) => (t, rest),
            None => (s, ""),
        };
        AxisKind::ALL
            .iter()
            .find(|k| k.tag() == tag)
            .map(|&kind| AxisId::with_suffix(kind, suffix))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown axis tag `{tag}`")))
    }
}

impl Serialize for AxisId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AxisId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A labeled unit axis that remembers the norm of the vector it was
/// normalized from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Direction<T: Scalar> {
    pub axis: AxisId,
    unit: Array1<T>,
    raw_norm: T,
    pub provenance: String,
}

impl<T: Scalar> Direction<T> {
    /// Normalizes `raw`; rejects vectors shorter than the degenerate threshold.
    pub fn from_raw(axis: AxisId, raw: Array1<T>, provenance: impl Into<String>) -> Result<Self> {
        let raw_norm = norm(raw.view());
        if !(raw_norm.as_f64() >= DEGENERATE_AXIS_NORM) {
            return Err(Error::DegenerateAxis {
                raw_norm: raw_norm.as_f64(),
            });
        }
        Ok(Self {
            axis,
            unit: raw / raw_norm,
            raw_norm,
            provenance: provenance.into(),
        })
    }

    /// A unit vector whose raw norm is 1 (random or externally supplied axes).
    pub fn from_unit(axis: AxisId, v: Array1<T>, provenance: impl Into<String>) -> Result<Self> {
        let mut d = Self::from_raw(axis, v, provenance)?;
        d.raw_norm = T::one();
        Ok(d)
    }

    pub fn unit(&self) -> ArrayView1<'_, T> {
        self.unit.view()
    }

    pub fn raw_norm(&self) -> T {
        self.raw_norm
    }

    pub fn h(&self) -> usize {
        self.unit.len()
    }

    pub fn negated(&self) -> Self {
        Self {
            axis: self.axis.clone(),
            unit: self.unit.mapv(|v| -v),
            raw_norm: self.raw_norm,
            provenance: format!("-({})", self.provenance),
        }
    }

    /// True when the raw norm falls under 1e-3 × the median row norm of `emb`.
    pub fn is_weak_for(&self, emb: &EmbeddingMatrix<T>) -> bool {
        self.raw_norm < T::lit(WEAK_AXIS_FRACTION) * emb.median_row_norm()
    }
}

/// Named per-text covariate columns, aligned with manifest order. Absent
/// values stay absent rather than defaulting to zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CovariateTable<T: Scalar> {
    pub text_ids: Vec<String>,
    pub columns: BTreeMap<String, Vec<Option<T>>>,
}

impl<T: Scalar> CovariateTable<T> {
    pub fn len(&self) -> usize {
        self.text_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text_ids.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<Option<T>>) -> Result<()> {
        if values.len() != self.text_ids.len() {
            return Err(Error::LengthMismatch {
                what: "covariate column".into(),
                expected: self.text_ids.len(),
                actual: values.len(),
            });
        }
        self.columns.insert(name.into(), values);
        Ok(())
    }

    /// Fully-present finite column, or an error listing the ids that lack it.
    pub fn column(&self, name: &str) -> Result<Vec<T>> {
        let Some(col) = self.columns.get(name) else {
            return Err(Error::MissingCovariate {
                name: name.into(),
                ids: self.text_ids.clone(),
            });
        };
        let missing: Vec<String> = col
            .iter()
            .zip(&self.text_ids)
            .filter(|(v, _)| !v.is_some_and(|x| x.is_finite()))
            .map(|(_, id)| id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingCovariate {
                name: name.into(),
                ids: missing,
            });
        }
        Ok(col.iter().map(|v| v.expect("checked")).collect())
    }

    /// n × k matrix of the named columns.
    pub fn matrix(&self, names: &[&str]) -> Result<Array2<T>> {
        let mut out = Array2::zeros((self.len(), names.len()));
        for (j, name) in names.iter().enumerate() {
            for (i, v) in self.column(name)?.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }
}

/// `normalize(mean(A) − mean(B))`, keeping the raw difference norm.
pub fn compute_direction<T: Scalar>(
    a: &EmbeddingMatrix<T>,
    b: &EmbeddingMatrix<T>,
    axis: AxisId,
) -> Result<Direction<T>> {
    ensure_dims(a.h(), b.h())?;
    let diff = a.centroid() - b.centroid();
    let provenance = format!(
        "centroid({}) - centroid({}) [n={} vs n={}]",
        label(a),
        label(b),
        a.n(),
        b.n()
    );
    let d = Direction::from_raw(axis, diff, provenance)?;
    let median = a.median_row_norm().max(b.median_row_norm());
    if d.raw_norm < T::lit(WEAK_AXIS_FRACTION) * median {
        log::warn!(
            "weak axis {}: raw norm {} below {} x median row norm {}",
            d.axis,
            d.raw_norm,
            WEAK_AXIS_FRACTION,
            median
        );
    }
    Ok(d)
}

fn label<T: Scalar>(e: &EmbeddingMatrix<T>) -> &str {
    if e.cell_id.is_empty() {
        "?"
    } else {
        &e.cell_id
    }
}

/// Per-text scores `⟨cls_t, unit⟩`.
pub fn project<T: Scalar>(emb: &EmbeddingMatrix<T>, d: &Direction<T>) -> Result<Array1<T>> {
    ensure_dims(emb.h(), d.h())?;
    Ok(emb.data().dot(&d.unit()))
}

pub fn cosine<T: Scalar>(d1: &Direction<T>, d2: &Direction<T>) -> Result<T> {
    ensure_dims(d1.h(), d2.h())?;
    let c = dot(d1.unit(), d2.unit());
    Ok(c.max(-T::one()).min(T::one()))
}

/// Pairwise cosine matrix over an axis set, row-major in input order.
pub fn alignment_matrix<T: Scalar>(axes: &[Direction<T>]) -> Result<Array2<T>> {
    let k = axes.len();
    let mut out = Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            out[[i, j]] = cosine(&axes[i], &axes[j])?;
        }
    }
    Ok(out)
}

/// Output of [`ols_residualize`].
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct Residualized<T: Scalar> {
    pub residuals: Array1<T>,
    pub intercept: T,
    /// One coefficient per covariate column, in input order.
    pub coefficients: Array1<T>,
}

fn design_with_intercept<T: Scalar>(
    columns: ArrayView2<T>,
    names: &[&str],
) -> (Array2<T>, Vec<String>) {
    let n = columns.nrows();
    let mut design = Array2::ones((n, columns.ncols() + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&columns);
    let mut all = vec!["intercept".to_string()];
    all.extend(names.iter().map(|s| s.to_string()));
    (design, all)
}

fn default_names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("x{j}")).collect()
}

/// Regresses `y` on the covariate columns (plus intercept) and returns the
/// residuals. `names` label columns in collinearity errors; pass `&[]` for
/// positional names.
pub fn ols_residualize<T: Scalar>(
    y: ArrayView1<T>,
    covariates: ArrayView2<T>,
    names: &[&str],
) -> Result<Residualized<T>> {
    if y.len() != covariates.nrows() {
        return Err(Error::LengthMismatch {
            what: "covariates".into(),
            expected: y.len(),
            actual: covariates.nrows(),
        });
    }
    let fallback = default_names(covariates.ncols());
    let names: Vec<&str> = if names.is_empty() {
        fallback.iter().map(String::as_str).collect()
    } else {
        ensure_dims(covariates.ncols(), names.len())?;
        names.to_vec()
    };
    let (design, all_names) = design_with_intercept(covariates, &names);
    let fit = linalg::least_squares(design.view(), &all_names, y)?;
    Ok(Residualized {
        residuals: fit.residuals,
        intercept: fit.coefficients[0],
        coefficients: fit.coefficients.slice(ndarray::s![1..]).to_owned(),
    })
}

pub fn pearson<T: Scalar>(x: ArrayView1<T>, y: ArrayView1<T>) -> Result<T> {
    ensure_dims(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::Empty("correlation needs at least two points".into()));
    }
    let n = T::from_usize_lossy(x.len());
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxy = compensated_sum(x.iter().zip(y.iter()).map(|(&a, &b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|&a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|&b| (b - my) * (b - my)));
    let tiny = T::epsilon() * T::epsilon();
    if sxx <= tiny * n {
        return Err(Error::ZeroVariance("x".into()));
    }
    if syy <= tiny * n {
        return Err(Error::ZeroVariance("y".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Pearson correlation of the residuals of `x` and `y` after regressing
/// both on the controls (with intercept).
pub fn partial_correlation<T: Scalar>(
    x: ArrayView1<T>,
    y: ArrayView1<T>,
    controls: ArrayView2<T>,
) -> Result<T> {
    ensure_dims(x.len(), y.len())?;
    if controls.ncols() == 0 {
        return pearson(x, y);
    }
    let rx = ols_residualize(x, controls, &[])?;
    let ry = ols_residualize(y, controls, &[])?;
    let scale_x = norm(x);
    let scale_y = norm(y);
    if norm(rx.residuals.view()) <= T::lit(1e-12) * scale_x {
        return Err(Error::ZeroVariance("x residual".into()));
    }
    if norm(ry.residuals.view()) <= T::lit(1e-12) * scale_y {
        return Err(Error::ZeroVariance("y residual".into()));
    }
    pearson(rx.residuals.view(), ry.residuals.view())
}

/// First PLS weight vector of centered embeddings against a centered
/// covariate: `normalize(Xcᵀ yc)`. The raw norm is that of the
/// cross-covariance `Xcᵀ yc / n`.
pub fn pls1_direction<T: Scalar>(
    emb: &EmbeddingMatrix<T>,
    covariate: ArrayView1<T>,
) -> Result<Direction<T>> {
    if covariate.len() != emb.n() {
        return Err(Error::LengthMismatch {
            what: "covariate".into(),
            expected: emb.n(),
            actual: covariate.len(),
        });
    }
    let n = T::from_usize_lossy(emb.n());
    let cmean = compensated_sum(covariate.iter().copied()) / n;
    let yc: Array1<T> = covariate.mapv(|v| v - cmean);
    if yc
        .iter()
        .all(|&v| v.abs() <= T::epsilon() * cmean.abs().max(T::one()))
    {
        return Err(Error::ZeroVariance("covariate".into()));
    }
    let centroid = emb.centroid();
    let xc = &emb.data() - &centroid;
    let cross = xc.t().dot(&yc) / n;
    let d = Direction::from_raw(
        AxisId::new(AxisKind::CapsPls),
        cross,
        format!("PLS1 cross-covariance on {} texts", emb.n()),
    )?;
    if d.is_weak_for(emb) {
        log::warn!(
            "weak PLS axis: raw norm {} below {} x median row norm",
            d.raw_norm,
            WEAK_AXIS_FRACTION
        );
    }
    Ok(d)
}

/// `exp` of the Shannon entropy of the normalized covariance spectrum.
pub fn effective_rank<T: Scalar>(emb: &EmbeddingMatrix<T>) -> Result<T> {
    if emb.n() < 2 {
        return Err(Error::Empty("effective rank needs n >= 2".into()));
    }
    let centroid = emb.centroid();
    let xc = &emb.data() - &centroid;
    // The smaller Gram matrix shares the nonzero spectrum of the covariance.
    let gram = if emb.h() <= emb.n() {
        xc.t().dot(&xc)
    } else {
        xc.dot(&xc.t())
    };
    let eig = linalg::symmetric_eigenvalues(gram.view())?;
    let clamped: Vec<T> = eig.into_iter().map(|l| l.max(T::zero())).collect();
    let total = compensated_sum(clamped.iter().copied());
    let scale = gram.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    if total <= T::zero() || scale == T::zero() {
        return Err(Error::ZeroVariance("embedding rows (all identical)".into()));
    }
    let entropy = compensated_sum(clamped.iter().filter(|&&l| l > T::zero()).map(|&l| {
        let p = l / total;
        -p * p.ln()
    }));
    Ok(entropy.exp())
}

/// Partial R² of `focal` given the controls: `1 − SSR_full / SSR_controls`.
/// A focal column inside the span of the controls contributes exactly 0.
pub fn joint_partial_r2<T: Scalar>(
    target: ArrayView1<T>,
    focal: ArrayView1<T>,
    controls: ArrayView2<T>,
) -> Result<T> {
    ensure_dims(target.len(), focal.len())?;
    let reduced = ols_residualize(target, controls, &[])?;
    let focal_resid = ols_residualize(focal, controls, &[])?;
    let ssr_reduced = compensated_sum(reduced.residuals.iter().map(|&r| r * r));
    if ssr_reduced <= T::epsilon() * compensated_sum(target.iter().map(|&v| v * v)) {
        return Err(Error::ZeroVariance("target residual".into()));
    }
    let focal_scale = norm(focal.mapv(|v| v - focal.mean().unwrap_or(T::zero())).view());
    if norm(focal_resid.residuals.view())
        <= T::lit(1e-10) * focal_scale.max(T::min_positive_value())
    {
        return Ok(T::zero());
    }
    // Frisch–Waugh: regress the target residual on the focal residual.
    let fr = &focal_resid.residuals;
    let beta = dot(reduced.residuals.view(), fr.view()) / dot(fr.view(), fr.view());
    let full = &reduced.residuals - &(fr * beta);
    let ssr_full = compensated_sum(full.iter().map(|&r| r * r));
    Ok((T::one() - ssr_full / ssr_reduced)
        .max(T::zero())
        .min(T::one()))
}
