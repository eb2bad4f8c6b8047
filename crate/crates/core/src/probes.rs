//! Few-shot logistic probes, iterative nullspace projection and
//! Baron–Kenny mediation.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{ensure_dims, Error, Result};
use crate::geometry::{AxisId, AxisKind, Direction, EmbeddingMatrix};
use crate::linalg::{cholesky_solve, dot, least_squares, norm, orthonormal_basis};
use crate::scalar::{compensated_sum, Scalar};

pub const DEFAULT_REG: f64 = 1e-2;
pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_NEWTON_ITERS: usize = 200;
/// Weight norms past this with `reg = 0` are treated as divergence.
const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProbeModel<T: Scalar> {
    pub weights: Array1<T>,
    pub bias: T,
    pub n_train: usize,
    pub regularization: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value before the first step and after every accepted step.
    pub objective_trace: Vec<T>,
}

impl<T: Scalar> ProbeModel<T> {
    pub fn direction(&self) -> Result<Direction<T>> {
        Direction::from_raw(
            AxisId::new(AxisKind::Probe),
            self.weights.clone(),
            format!(
                "logistic probe, n = {}, reg = {}",
                self.n_train, self.regularization
            ),
        )
    }

    pub fn logits(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        ensure_dims(self.weights.len(), x.ncols())?;
        Ok(x.dot(&self.weights) + self.bias)
    }

    /// Fraction of rows whose logit sign matches the label (logit > 0 ⇒ true).
    pub fn accuracy(&self, x: ArrayView2<T>, labels: &[bool]) -> Result<T> {
        let z = self.logits(x)?;
        ensure_dims(z.len(), labels.len())?;
        let hits = z
            .iter()
            .zip(labels)
            .filter(|(&v, &l)| (v > T::zero()) == l)
            .count();
        Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(labels.len()))
    }
}

fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Σ log-loss + (reg/2)‖w‖²; the intercept is not penalized.
fn objective<T: Scalar>(x: ArrayView2<T>, y: &[T], w: ArrayView1<T>, b: T, reg: T) -> T {
    let z = x.dot(&w) + b;
    let loss = compensated_sum(z.iter().zip(y).map(|(&zi, &yi)| softplus(zi) - yi * zi));
    loss + reg * dot(w, w) / T::lit(2.0)
}

/// Damped-Newton logistic regression with backtracking line search.
pub fn fit_logistic<T: Scalar>(x: ArrayView2<T>, labels: &[bool], reg: T) -> Result<ProbeModel<T>> {
    let (n, h) = x.dim();
    ensure_dims(n, labels.len())?;
    if n == 0 {
        return Err(Error::Empty("probe training set".into()));
    }
    if reg < T::zero() || !reg.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "reg must be ≥ 0, got {reg}"
        )));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::InvalidArgument(
            "probe labels need both classes".into(),
        ));
    }
    let y: Vec<T> = labels
        .iter()
        .map(|&l| if l { T::one() } else { T::zero() })
        .collect();
    let mut w = Array1::<T>::zeros(h);
    let mut b = T::zero();
    let mut f = objective(x, &y, w.view(), b, reg);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let diverging = || Error::DivergingWeights;

    for it in 0..MAX_NEWTON_ITERS {
        let z = x.dot(&w) + b;
        let p: Array1<T> = z.mapv(sigmoid);
        let r: Array1<T> = p.iter().zip(&y).map(|(&pi, &yi)| pi - yi).collect();
        let mut grad = Array1::<T>::zeros(h + 1);
        grad.slice_mut(s![..h]).assign(&(x.t().dot(&r) + &w * reg));
        grad[h] = compensated_sum(r.iter().copied());
        if norm(grad.view()) <= T::lit(GRADIENT_TOL) {
            converged = true;
            iterations = it;
            break;
        }
        let s_diag = p.mapv(|pi| pi * (T::one() - pi));
        let xs = &x * &s_diag.view().insert_axis(Axis(1));
        let mut hess = Array2::<T>::zeros((h + 1, h + 1));
        hess.slice_mut(s![..h, ..h]).assign(&x.t().dot(&xs));
        let xs_sum = xs.sum_axis(Axis(0));
        hess.slice_mut(s![..h, h]).assign(&xs_sum);
        hess.slice_mut(s![h, ..h]).assign(&xs_sum);
        hess[[h, h]] = s_diag.sum() + T::lit(1e-12);
        for j in 0..h {
            hess[[j, j]] += reg;
        }
        let step = match cholesky_solve(hess.view(), grad.view()) {
            Ok(s) => s,
            Err(_) if reg == T::zero() => return Err(diverging()),
            Err(e) => return Err(e),
        };
        let slope = -dot(grad.view(), step.view());
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let w_new = &w - &(&step.slice(s![..h]) * t);
            let b_new = b - step[h] * t;
            let f_new = objective(x, &y, w_new.view(), b_new, reg);
            if f_new.is_finite() && f_new <= f + T::lit(1e-4) * t * slope {
                w = w_new;
                b = b_new;
                f = f_new;
                accepted = true;
                break;
            }
            t /= T::lit(2.0);
        }
        iterations = it + 1;
        if !accepted {
            // no decrease available: at the optimum up to rounding
            converged = norm(grad.view()) <= T::lit(GRADIENT_TOL).sqrt();
            break;
        }
        trace.push(f);
        if reg == T::zero() && norm(w.view()) > T::lit(DIVERGENCE_NORM) {
            return Err(diverging());
        }
    }
    if reg == T::zero() && !converged {
        return Err(diverging());
    }
    // with no penalty a perfectly separating fit has no finite optimum
    if reg == T::zero() {
        let z = x.dot(&w) + b;
        if z.iter().zip(labels).all(|(&v, &l)| (v > T::zero()) == l) {
            return Err(diverging());
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Solver("non-finite probe weights".into()));
    }
    Ok(ProbeModel {
        weights: w,
        bias: b,
        n_train: n,
        regularization: reg,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Draws `n_shots` rows balanced across strata (per-text tags; the label
/// is the stratum when `strata` is `None`), then fits a probe.
pub fn fit_logistic_probe<T: Scalar>(
    emb: &EmbeddingMatrix<T>,
    labels: &[bool],
    strata: Option<&[String]>,
    n_shots: usize,
    reg: T,
    seed: u64,
) -> Result<ProbeModel<T>> {
    let rows = stratified_sample(emb.n(), labels, strata, n_shots, seed)?;
    let x = emb.data().select(Axis(0), &rows);
    let y: Vec<bool> = rows.iter().map(|&i| labels[i]).collect();
    fit_logistic(x.view(), &y, reg)
}

/// Row indices of a seeded, stratum-balanced sample, sorted by stratum tag
/// then draw order.
pub fn stratified_sample(
    n: usize,
    labels: &[bool],
    strata: Option<&[String]>,
    n_shots: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    ensure_dims(n, labels.len())?;
    let tags: Vec<String> = match strata {
        Some(s) => {
            ensure_dims(n, s.len())?;
            s.to_vec()
        }
        None => labels
            .iter()
            .map(|&l| if l { "pos" } else { "neg" }.to_string())
            .collect(),
    };
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in tags.iter().enumerate() {
        groups.entry(t.as_str()).or_default().push(i);
    }
    if groups.is_empty() || n_shots % groups.len() != 0 {
        return Err(Error::InvalidArgument(format!(
            "n_shots = {n_shots} is not divisible by {} strata",
            groups.len()
        )));
    }
    let per = n_shots / groups.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_shots);
    for (tag, idx) in &groups {
        if idx.len() < per {
            return Err(Error::InvalidArgument(format!(
                "stratum `{tag}` has {} texts, needs {per}",
                idx.len()
            )));
        }
        out.extend(sample(&mut rng, idx.len(), per).into_iter().map(|k| idx[k]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct InlpResult<T: Scalar> {
    /// `I − QQᵀ`, rank h − k.
    pub projector: Array2<T>,
    /// Unit weight directions removed, in iteration order.
    pub removed: Vec<Array1<T>>,
    /// Held-out accuracy of the probe fitted at each iteration (before its
    /// direction is removed).
    pub accuracy_trace: Vec<T>,
    /// Held-out accuracy of a fresh probe on the fully projected data.
    pub residual_accuracy: T,
}

/// Iterative nullspace projection. Each probe is fit on a seeded half of
/// the data and scored on the other half.
pub fn inlp<T: Scalar>(
    emb: &EmbeddingMatrix<T>,
    labels: &[bool],
    k: usize,
    reg: T,
    seed: u64,
) -> Result<InlpResult<T>> {
    let (n, h) = (emb.n(), emb.h());
    ensure_dims(n, labels.len())?;
    if k == 0 || k >= h {
        return Err(Error::InvalidArgument(format!(
            "INLP needs 1 ≤ k < h = {h}, got k = {k}"
        )));
    }
    let (train, test) = split_half(labels, seed)?;
    let x = emb.data();
    let y_train: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<bool> = test.iter().map(|&i| labels[i]).collect();

    let mut projector = Array2::<T>::eye(h);
    let mut removed: Vec<Array1<T>> = Vec::new();
    let mut trace = Vec::with_capacity(k);
    for _ in 0..k {
        let xp = x.dot(&projector);
        let probe = fit_logistic(xp.select(Axis(0), &train).view(), &y_train, reg)?;
        trace.push(probe.accuracy(xp.select(Axis(0), &test).view(), &y_test)?);
        let wn = norm(probe.weights.view());
        if wn <= T::lit(1e-12) {
            return Err(Error::Solver(
                "INLP probe returned zero weights; nothing left to remove".into(),
            ));
        }
        removed.push(&probe.weights / wn);
        let mut w = Array2::<T>::zeros((h, removed.len()));
        for (j, r) in removed.iter().enumerate() {
            w.column_mut(j).assign(r);
        }
        let q = orthonormal_basis(w.view());
        if q.ncols() != removed.len() {
            return Err(Error::Solver(
                "INLP direction fell inside the removed span".into(),
            ));
        }
        projector = Array2::<T>::eye(h) - q.dot(&q.t());
    }
    let xp = x.dot(&projector);
    let probe = fit_logistic(xp.select(Axis(0), &train).view(), &y_train, reg)?;
    let residual_accuracy = probe.accuracy(xp.select(Axis(0), &test).view(), &y_test)?;
    Ok(InlpResult {
        projector,
        removed,
        accuracy_trace: trace,
        residual_accuracy,
    })
}

/// Label-stratified half split. Both classes are shuffled by one shared
/// permutation of within-class rank, so the k-th text of each class lands
/// on the same side.
fn split_half(labels: &[bool], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<Vec<usize>> = [false, true]
        .iter()
        .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    if classes.iter().any(|idx| idx.len() < 2) {
        return Err(Error::InvalidArgument(
            "each class needs at least two texts".into(),
        ));
    }
    let m = classes.iter().map(Vec::len).max().unwrap_or(0);
    let shared = sample(&mut rng, m, m).into_vec();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in &classes {
        let perm: Vec<usize> = shared.iter().copied().filter(|&k| k < idx.len()).collect();
        let half = idx.len() / 2;
        train.extend(perm[..half].iter().map(|&k| idx[k]));
        test.extend(perm[half..].iter().map(|&k| idx[k]));
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PathEstimate<T: Scalar> {
    pub coef: T,
    pub p: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MediationOutcome {
    Mediation,
    NoMediation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MediationVerdict<T: Scalar> {
    /// Total effect c: y ~ x.
    pub path_xy: PathEstimate<T>,
    /// a: m ~ x.
    pub path_xm: PathEstimate<T>,
    /// b: the m coefficient in y ~ x + m.
    pub path_my_given_x: PathEstimate<T>,
    /// Direct effect c': the x coefficient in y ~ x + m.
    pub direct_x: PathEstimate<T>,
    /// `(c − c') / c`.
    pub x_attenuation: T,
    pub verdict: MediationOutcome,
}

/// OLS with an intercept; returns (coef, two-sided p) for each regressor.
fn ols_t<T: Scalar>(regressors: &[&[T]], y: &[T]) -> Result<Vec<PathEstimate<T>>> {
    let n = y.len();
    let p = regressors.len() + 1;
    let mut design = Array2::<T>::ones((n, p));
    let mut names = vec!["intercept".to_string()];
    for (j, r) in regressors.iter().enumerate() {
        ensure_dims(n, r.len())?;
        design.column_mut(j + 1).assign(&ArrayView1::from(*r));
        names.push(format!("x{j}"));
    }
    let fit = least_squares(design.view(), &names, ArrayView1::from(y))?;
    let df = n - p;
    let sigma2 = fit.residual_sum_of_squares() / T::from_usize_lossy(df);
    let diag = fit.inverse_gram_diagonal();
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::Solver(format!("t distribution: {e}")))?;
    Ok((1..p)
        .map(|j| {
            let coef = fit.coefficients[j];
            let se = (sigma2 * diag[j]).sqrt();
            let p = if se > T::zero() {
                let t = (coef / se).abs().as_f64();
                T::lit((2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0))
            } else {
                T::zero()
            };
            PathEstimate { coef, p }
        })
        .collect())
}

/// Three-stage Baron–Kenny test of whether `m` mediates `x → y`.
pub fn baron_kenny<T: Scalar>(x: &[T], m: &[T], y: &[T], alpha: T) -> Result<MediationVerdict<T>> {
    ensure_dims(x.len(), m.len())?;
    ensure_dims(x.len(), y.len())?;
    if x.len() < 10 {
        return Err(Error::InvalidArgument(
            "mediation needs at least 10 observations".into(),
        ));
    }
    for (name, v) in [("x", x), ("m", m), ("y", y)] {
        let first = v[0];
        if v.iter().all(|&e| e == first) {
            return Err(Error::ZeroVariance(name.into()));
        }
    }
    let total = ols_t(&[x], y).map_err(collinear_to_variance)?[0];
    let a = ols_t(&[x], m).map_err(collinear_to_variance)?[0];
    let stage3 = ols_t(&[x, m], y).map_err(collinear_to_variance)?;
    let (direct, b) = (stage3[0], stage3[1]);
    if total.coef == T::zero() {
        return Err(Error::ZeroDenominator(
            "attenuation (total effect is 0)".into(),
        ));
    }
    let attenuation = (total.coef - direct.coef) / total.coef;
    let significant = total.p < alpha && a.p < alpha && b.p < alpha;
    let verdict = if significant && direct.coef.abs() < total.coef.abs() {
        MediationOutcome::Mediation
    } else {
        MediationOutcome::NoMediation
    };
    Ok(MediationVerdict {
        path_xy: total,
        path_xm: a,
        path_my_given_x: b,
        direct_x: direct,
        x_attenuation: attenuation,
        verdict,
    })
}

fn collinear_to_variance(e: Error) -> Error {
    match e {
        Error::Collinear { columns } => {
            Error::ZeroVariance(format!("collinear regressors {columns:?}"))
        }
        other => other,
    }
}
