//! Score-level metrics: AUROC, threshold protocols, effect sizes, and the
//! derived calibration/fairness summaries.
//!
//! Decision rule everywhere: `score >= tau` is a positive call. Thresholds on
//! finite pools are conservative order statistics; no ROC interpolation.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, mean, population_std, sample_variance, Scalar};

/// Default matched-TPR target on the in-domain positive pool.
pub const DEFAULT_TARGET_TPR: f64 = 0.90;

fn check_pool<T: Scalar>(scores: &[T], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty(format!("{what} pool")));
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("{what} scores"),
            row,
        });
    }
    Ok(())
}

fn sorted<T: Scalar>(scores: &[T]) -> Vec<T> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Mann–Whitney AUROC: P(pos > neg) + ½ P(pos = neg).
///
/// Computed from mid-ranks of the pooled sample. Ranks are kept doubled in
/// integers so the result is the exact ratio `2U / 2nm`.
pub fn auroc<T: Scalar>(pos: &[T], neg: &[T]) -> Result<T> {
    check_pool(pos, "positive")?;
    check_pool(neg, "negative")?;
    let mut pooled: Vec<(T, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    // sum over positives of 2 × midrank (1-based)
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share midrank (i + 1 + j) / 2
        let doubled_mid = (i + 1 + j) as u128;
        let n_pos_in_tie = pooled[i..j].iter().filter(|p| p.1).count() as u128;
        doubled_rank_sum += doubled_mid * n_pos_in_tie;
        i = j;
    }
    let n = pos.len() as u128;
    let m = neg.len() as u128;
    let doubled_u = doubled_rank_sum - n * (n + 1);
    Ok(T::from_u128(doubled_u).expect("count") / T::from_u128(2 * n * m).expect("count"))
}

/// Smallest count `k` of the pool with `k / n >= target`.
fn min_count_at_least<T: Scalar>(n: usize, target: T) -> usize {
    let nf = T::from_usize_lossy(n);
    let mut k = (target * nf).ceil().to_usize().unwrap_or(n).min(n);
    while k > 0 && T::from_usize_lossy(k - 1) / nf >= target {
        k -= 1;
    }
    while k < n && T::from_usize_lossy(k) / nf < target {
        k += 1;
    }
    k
}

/// Largest count `k` with `k / n <= target`.
fn max_count_at_most<T: Scalar>(n: usize, target: T) -> usize {
    let nf = T::from_usize_lossy(n);
    let mut k = (target * nf).floor().to_usize().unwrap_or(0).min(n);
    while k < n && T::from_usize_lossy(k + 1) / nf <= target {
        k += 1;
    }
    while k > 0 && T::from_usize_lossy(k) / nf > target {
        k -= 1;
    }
    k
}

/// Largest τ whose TPR (`score >= τ`) on `pos` is at least `target_tpr`:
/// the k-th largest score with k = ⌈target · n⌉.
pub fn matched_tpr_threshold<T: Scalar>(pos: &[T], target_tpr: T) -> Result<T> {
    check_pool(pos, "positive")?;
    if !(target_tpr > T::zero() && target_tpr < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "target TPR {target_tpr} outside (0, 1)"
        )));
    }
    let desc: Vec<T> = sorted(pos).into_iter().rev().collect();
    let k = min_count_at_least(desc.len(), target_tpr).max(1);
    Ok(desc[k - 1])
}

/// Fraction of `scores` at or above `tau`.
pub fn rate_at<T: Scalar>(scores: &[T], tau: T) -> T {
    let hits = scores.iter().filter(|&&s| s >= tau).count();
    T::from_usize_lossy(hits) / T::from_usize_lossy(scores.len())
}

/// TPR at the operating point whose FPR on `neg` does not exceed
/// `target_fpr`. At most ⌊target · m⌋ negatives may score at or above the
/// threshold, so positives must strictly exceed the next negative.
pub fn tpr_at_fpr<T: Scalar>(pos: &[T], neg: &[T], target_fpr: T) -> Result<T> {
    check_pool(pos, "positive")?;
    check_pool(neg, "negative")?;
    if !(target_fpr >= T::zero() && target_fpr <= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "target FPR {target_fpr} outside [0, 1]"
        )));
    }
    let desc: Vec<T> = sorted(neg).into_iter().rev().collect();
    let allowed = max_count_at_most(desc.len(), target_fpr);
    if allowed >= desc.len() {
        return Ok(T::one());
    }
    let barrier = desc[allowed];
    let hits = pos.iter().filter(|&&s| s > barrier).count();
    Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(pos.len()))
}

/// FPR on `neg` at the matched-TPR threshold of `pos`.
pub fn fpr_at_tpr<T: Scalar>(pos: &[T], neg: &[T], target_tpr: T) -> Result<T> {
    check_pool(neg, "negative")?;
    let tau = matched_tpr_threshold(pos, target_tpr)?;
    Ok(rate_at(neg, tau))
}

/// Standardized mean difference with (n − 1)-weighted pooled variance.
pub fn cohens_d<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Empty(
            "Cohen's d needs at least two values per group".into(),
        ));
    }
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let pooled = ((na - T::one()) * sample_variance(a) + (nb - T::one()) * sample_variance(b))
        / (na + nb - T::lit(2.0));
    if pooled <= T::zero() {
        return Err(Error::ZeroVariance("pooled sample".into()));
    }
    Ok((mean(a) - mean(b)) / pooled.sqrt())
}

/// Average (1-based) ranks, ties sharing their mean rank.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let mid = T::from_usize_lossy(i + 1 + j) / T::lit(2.0);
        for &k in &idx[i..j] {
            ranks[k] = mid;
        }
        i = j;
    }
    ranks
}

pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let rx = ndarray::Array1::from(average_ranks(x));
    let ry = ndarray::Array1::from(average_ranks(y));
    crate::geometry::pearson(rx.view(), ry.view())
}

/// Effect-size panel for a pair of groups, or for paired per-text values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EffectSummary<T: Scalar> {
    pub cohens_d: T,
    pub pearson_r: T,
    pub spearman_rho: T,
    pub n_pairs: usize,
}

/// `cohens_d(a, b)` alongside Pearson/Spearman correlations of the paired
/// values `(x, y)`.
pub fn effect_summary<T: Scalar>(a: &[T], b: &[T], x: &[T], y: &[T]) -> Result<EffectSummary<T>> {
    let xa = ndarray::ArrayView1::from(x);
    let ya = ndarray::ArrayView1::from(y);
    Ok(EffectSummary {
        cohens_d: cohens_d(a, b)?,
        pearson_r: crate::geometry::pearson(xa, ya)?,
        spearman_rho: spearman(x, y)?,
        n_pairs: x.len(),
    })
}

/// Standardized-effect amplification `(Δlogit_FT/σ_FT) / (Δproj_raw/σ_raw)`.
pub fn k_std<T: Scalar>(
    delta_logit_ft: T,
    sigma_ft: T,
    delta_proj_raw: T,
    sigma_proj_raw: T,
) -> Result<T> {
    if sigma_ft <= T::zero() || sigma_proj_raw <= T::zero() {
        return Err(Error::ZeroDenominator("K_std (non-positive sigma)".into()));
    }
    if delta_proj_raw == T::zero() {
        return Err(Error::ZeroDenominator("K_std (zero raw effect)".into()));
    }
    Ok((delta_logit_ft / sigma_ft) / (delta_proj_raw / sigma_proj_raw))
}

/// Rates for one pool at a block's threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PoolRates<T: Scalar> {
    pub tpr: Option<T>,
    pub fpr: Option<T>,
}

/// Headline metrics of one detector configuration on one pool set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MetricBlock<T: Scalar> {
    /// Headline AUROC: bias-pool negatives against in-domain positives.
    pub auroc: T,
    pub fpr_at_tau: T,
    pub tpr_at_tau: T,
    pub tau: T,
    pub pools: BTreeMap<String, PoolRates<T>>,
    /// Pool id of the first held-out positive pool (Cp₁).
    pub recall_guard: Option<String>,
}

impl<T: Scalar> MetricBlock<T> {
    /// Block for a single positive/negative pair at threshold `tau`.
    pub fn from_scores(pos: &[T], neg: &[T], tau: T) -> Result<Self> {
        let tpr = rate_at(pos, tau);
        let fpr = rate_at(neg, tau);
        let mut pools = BTreeMap::new();
        pools.insert(
            "pos".into(),
            PoolRates {
                tpr: Some(tpr),
                fpr: None,
            },
        );
        pools.insert(
            "neg".into(),
            PoolRates {
                tpr: None,
                fpr: Some(fpr),
            },
        );
        Ok(Self {
            auroc: auroc(pos, neg)?,
            fpr_at_tau: fpr,
            tpr_at_tau: tpr,
            tau,
            pools,
            recall_guard: None,
        })
    }

    /// Same, with `tau` chosen by the matched-TPR protocol on `pos`.
    pub fn matched(pos: &[T], neg: &[T], target_tpr: T) -> Result<Self> {
        let tau = matched_tpr_threshold(pos, target_tpr)?;
        Self::from_scores(pos, neg, tau)
    }

    pub fn recall_guard_tpr(&self) -> Result<T> {
        let id = self
            .recall_guard
            .as_ref()
            .ok_or(Error::MissingRecallGuard)?;
        self.pools
            .get(id)
            .and_then(|p| p.tpr)
            .ok_or(Error::MissingRecallGuard)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        let rates_ok = self
            .pools
            .values()
            .flat_map(|p| p.tpr.into_iter().chain(p.fpr))
            .all(unit);
        if !(unit(self.auroc) && unit(self.fpr_at_tau) && unit(self.tpr_at_tau) && rates_ok) {
            return Err(Error::InvalidArgument("rate outside [0, 1]".into()));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidArgument("non-finite tau".into()));
        }
        Ok(())
    }
}

/// Share of a default-threshold FPR gap between two detector variants that
/// vanishes once both are evaluated at matched TPR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CalibrationShare<T: Scalar> {
    /// `1 − |ΔFPR_matched| / |ΔFPR_default|`, clamped to [0, 1].
    pub share: T,
    pub delta_fpr_default: T,
    pub delta_fpr_matched: T,
    pub delta_auroc: T,
    pub formula: String,
}

pub const CALIBRATION_SHARE_FORMULA: &str = "share = 1 - |dFPR(matched TPR)| / |dFPR(default tau)|, clamped to [0,1]; d = variant_b - variant_a";

/// `base` holds (variant a, variant b) at their default thresholds,
/// `matched` the same pair at matched TPR, all on identical pools.
pub fn calibration_share<T: Scalar>(
    base: (&MetricBlock<T>, &MetricBlock<T>),
    matched: (&MetricBlock<T>, &MetricBlock<T>),
) -> Result<CalibrationShare<T>> {
    let delta_default = base.1.fpr_at_tau - base.0.fpr_at_tau;
    let delta_matched = matched.1.fpr_at_tau - matched.0.fpr_at_tau;
    if delta_default == T::zero() {
        return Err(Error::ZeroDenominator(
            "calibration share (no default-threshold gap)".into(),
        ));
    }
    let share = T::one() - delta_matched.abs() / delta_default.abs();
    Ok(CalibrationShare {
        share: share.max(T::zero()).min(T::one()),
        delta_fpr_default: delta_default,
        delta_fpr_matched: delta_matched,
        delta_auroc: matched.1.auroc - matched.0.auroc,
        formula: CALIBRATION_SHARE_FORMULA.into(),
    })
}

/// Scores of one detector variant on a positive and a negative pool, plus
/// its deployed default threshold.
#[derive(Debug, Clone)]
pub struct DetectorScores<'a, T: Scalar> {
    pub pos: &'a [T],
    pub neg: &'a [T],
    pub default_tau: T,
}

/// Builds both block pairs from raw scores and evaluates the share.
pub fn calibration_share_from_scores<T: Scalar>(
    a: &DetectorScores<'_, T>,
    b: &DetectorScores<'_, T>,
    target_tpr: T,
) -> Result<CalibrationShare<T>> {
    let base_a = MetricBlock::from_scores(a.pos, a.neg, a.default_tau)?;
    let base_b = MetricBlock::from_scores(b.pos, b.neg, b.default_tau)?;
    let matched_a = MetricBlock::matched(a.pos, a.neg, target_tpr)?;
    let matched_b = MetricBlock::matched(b.pos, b.neg, target_tpr)?;
    calibration_share((&base_a, &base_b), (&matched_a, &matched_b))
}

/// max − min of per-population FPR at a shared threshold.
pub fn fairness_spread<T: Scalar>(fprs: &BTreeMap<String, T>) -> Result<T> {
    if fprs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fairness spread needs at least 2 populations, got {}",
            fprs.len()
        )));
    }
    let lo = fprs.values().fold(T::infinity(), |m, &v| m.min(v));
    let hi = fprs.values().fold(T::neg_infinity(), |m, &v| m.max(v));
    Ok(hi - lo)
}

/// `delta_combined / (delta_a + delta_b)` for spread reductions.
pub fn super_additivity<T: Scalar>(delta_a: T, delta_b: T, delta_combined: T) -> Result<T> {
    let denom = delta_a + delta_b;
    if denom == T::zero() {
        return Err(Error::ZeroDenominator("super-additivity".into()));
    }
    Ok(delta_combined / denom)
}

/// Mean ± population std over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SeedAggregate<T: Scalar> {
    pub mean: T,
    pub std: T,
    pub values: Vec<T>,
}

pub fn aggregate_seeds<T: Scalar>(values: &[T]) -> Result<SeedAggregate<T>> {
    if values.is_empty() {
        return Err(Error::Empty("seed values".into()));
    }
    Ok(SeedAggregate {
        mean: mean(values),
        std: population_std(values),
        values: values.to_vec(),
    })
}

/// ROC curve points `(fpr, tpr)` at every distinct threshold, from
/// `(0, 0)` to `(1, 1)`.
pub fn roc_curve<T: Scalar>(pos: &[T], neg: &[T]) -> Result<Vec<(T, T)>> {
    check_pool(pos, "positive")?;
    check_pool(neg, "negative")?;
    let mut thresholds: Vec<T> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    thresholds.dedup();
    let mut pts = vec![(T::zero(), T::zero())];
    pts.extend(
        thresholds
            .iter()
            .map(|&t| (rate_at(neg, t), rate_at(pos, t))),
    );
    Ok(pts)
}

/// Sum helper for small reporting code.
pub fn total<T: Scalar>(v: &[T]) -> T {
    compensated_sum(v.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn brute_auroc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut twice = 0u64;
        for &p in pos {
            for &q in neg {
                twice += if p > q {
                    2
                } else if p == q {
                    1
                } else {
                    0
                };
            }
        }
        twice as f64 / (2 * pos.len() * neg.len()) as f64
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[1.0, 2.0], &[0.0, 1.0]).unwrap(), 0.875);
        assert!(auroc::<f64>(&[], &[1.0]).is_err());
        assert!(auroc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn auroc_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let m = rng.random_range(1..40);
            let pos: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            let neg: Vec<f64> = (0..m).map(|_| rng.random_range(0..6) as f64).collect();
            assert_eq!(auroc(&pos, &neg).unwrap(), brute_auroc(&pos, &neg));
        }
    }

    #[test]
    fn matched_threshold_examples() {
        let pos: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(matched_tpr_threshold(&pos, 0.9).unwrap(), 2.0);
        let flat = vec![0.3; 7];
        let tau = matched_tpr_threshold(&flat, 0.9).unwrap();
        assert_eq!(tau, 0.3);
        assert_eq!(rate_at(&flat, tau), 1.0);
        assert!(matched_tpr_threshold::<f64>(&[], 0.9).is_err());
        assert!(matched_tpr_threshold(&pos, 1.0).is_err());
    }

    #[test]
    fn matched_threshold_gaussian_quantile() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pos: Vec<f64> = (0..20_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let tau = matched_tpr_threshold(&pos, 0.9).unwrap();
        // Φ⁻¹(0.1)
        assert!((tau + 1.281_551_565_5).abs() < 0.05, "{tau}");
    }

    #[test]
    fn rate_at_target_conversions() {
        let pos = [3.0, 4.0, 5.0];
        let neg = [0.0, 1.0, 2.0];
        assert_eq!(tpr_at_fpr(&pos, &neg, 0.01).unwrap(), 1.0);
        assert_eq!(fpr_at_tpr(&pos, &neg, 0.9).unwrap(), 0.0);
        let same: Vec<f64> = (0..1000).map(f64::from).collect();
        let t = tpr_at_fpr(&same, &same, 0.01).unwrap();
        assert!((t - 0.01).abs() <= 1.0 / 1000.0);
    }

    /// Closed-form oracle: 1 − Φ(z₀.₉₅ − 1) = 0.2595 for N(1,1) vs N(0,1).
    #[test]
    fn tpr_at_fpr_gaussian_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let pos: Vec<f64> = (0..n)
            .map(|_| 1.0 + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let neg: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = tpr_at_fpr(&pos, &neg, 0.05).unwrap();
        assert!((t - 0.2595).abs() < 0.02, "{t}");
        assert!((0.26f64 - 0.2595).abs() < 0.02);
    }

    #[test]
    fn cohens_d_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(cohens_d(&a, &a).unwrap(), 0.0);
        let b = [2.0, 5.0, 3.0];
        assert_eq!(cohens_d(&a, &b).unwrap(), -cohens_d(&b, &a).unwrap());
        assert!(cohens_d(&[1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(cohens_d(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cohens_d_construction_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let b: Vec<f64> = (0..10_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let sd = sample_variance(&b).sqrt();
        let a: Vec<f64> = b.iter().map(|v| v + sd).collect();
        assert!((cohens_d(&a, &b).unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn k_std_values() {
        assert_eq!(k_std(2.0, 1.0, 1.0, 0.5).unwrap(), 1.0);
        assert!((k_std(1.72f64 * 3.0, 2.0, 3.0, 2.0).unwrap() - 1.72).abs() < 1e-12);
        assert!((k_std(0.86f64 * 0.4, 0.1, 0.4, 0.1).unwrap() - 0.86).abs() < 1e-12);
        assert!(k_std(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(k_std(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn fairness_spread_cases() {
        let mut m = BTreeMap::new();
        m.insert("HC3".to_string(), 0.10f64);
        m.insert("NYT".to_string(), 0.03);
        m.insert("FCE".to_string(), 0.05);
        assert!((fairness_spread(&m).unwrap() - 0.07).abs() < 1e-15);
        let mut eq = BTreeMap::new();
        eq.insert("a".to_string(), 0.2);
        eq.insert("b".to_string(), 0.2);
        assert_eq!(fairness_spread(&eq).unwrap(), 0.0);
        eq.remove("a");
        assert!(fairness_spread(&eq).is_err());
    }

    #[test]
    fn super_additivity_cases() {
        assert_eq!(super_additivity(0.3, 0.2, 0.5).unwrap(), 1.0);
        assert!((super_additivity(0.01f64, 0.02, 2.10 * 0.03).unwrap() - 2.10).abs() < 1e-12);
        assert_eq!(super_additivity(0.01, 0.02, 0.0).unwrap(), 0.0);
        assert!(super_additivity(0.1, -0.1, 0.3).is_err());
        let per_seed = [2.20f64, 2.11, 1.99];
        assert!((aggregate_seeds(&per_seed).unwrap().mean - 2.10).abs() < 1e-12);
    }

    #[test]
    fn calibration_share_pure_recalibration() {
        let pos = [0.6, 0.7, 0.8, 0.9, 0.95];
        let neg = [0.1, 0.4, 0.55, 0.65, 0.2];
        let shifted_pos: Vec<f64> = pos.iter().map(|v| v - 0.2).collect();
        let shifted_neg: Vec<f64> = neg.iter().map(|v| v - 0.2).collect();
        let a = DetectorScores {
            pos: &pos,
            neg: &neg,
            default_tau: 0.5,
        };
        let b = DetectorScores {
            pos: &shifted_pos,
            neg: &shifted_neg,
            default_tau: 0.5,
        };
        let share = calibration_share_from_scores(&a, &b, 0.9).unwrap();
        assert_eq!(share.share, 1.0);
        assert_eq!(share.delta_auroc, 0.0);
    }

    #[test]
    fn calibration_share_pure_ranking_gap() {
        let pos = [1.0, 1.0, 1.0, 1.0];
        let neg_a = [0.0, 0.0, 0.0, 0.0];
        let neg_b = [1.0, 1.0, 0.0, 0.0];
        let base = (
            MetricBlock::from_scores(&pos, &neg_a, 0.5).unwrap(),
            MetricBlock::from_scores(&pos, &neg_b, 0.5).unwrap(),
        );
        let matched = (
            MetricBlock::matched(&pos, &neg_a, 0.9).unwrap(),
            MetricBlock::matched(&pos, &neg_b, 0.9).unwrap(),
        );
        let s = calibration_share((&base.0, &base.1), (&matched.0, &matched.1)).unwrap();
        assert_eq!(s.share, 0.0);
        let no_gap = calibration_share((&base.0, &base.0), (&matched.0, &matched.1));
        assert!(no_gap.is_err());
    }

    #[test]
    fn spearman_average_ranks() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let y = [1.0f64, 4.0, 9.0, 16.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_block_validation() {
        let b = MetricBlock::from_scores(&[1.0, 2.0], &[0.0, 1.5], 1.0).unwrap();
        b.validate().unwrap();
        assert!(b.recall_guard_tpr().is_err());
        let roc = roc_curve(&[1.0, 2.0], &[0.0, 1.5]).unwrap();
        assert_eq!(roc.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.last(), Some(&(1.0, 1.0)));
    }
}
