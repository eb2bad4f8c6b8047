//! Cell-level orchestration: ε-grid sweeps over an axis bank, strict-Pareto
//! verdicts, predictor-vs-oracle selection and the deployment scalar rule.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::error::{ensure_dims, Error, Result};
use crate::geometry::{Direction, EmbeddingMatrix};
use crate::metrics::{auroc, rate_at, MetricBlock, PoolRates};
use crate::predictor::{ablate_matrix, HeadModel};
use crate::scalar::Scalar;

/// Held-out recall may drop by at most this much under a PASS.
pub const RECALL_TOLERANCE: f64 = 0.02;
/// Mean absolute error of the predictor; selector disagreements inside
/// this band count as near-ties.
pub const PREDICTOR_MAE: f64 = 0.002;
/// Default threshold of the deployment scalar rule on ‖d_typ_NYT‖.
pub const DEPLOYMENT_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRole {
    /// In-domain AI texts (the matched-TPR pool).
    InDomainPositive,
    /// Human population the bias is measured on.
    BiasNegative,
    /// Cross-LM held-out AI pools; the first one is the recall guard.
    HeldOutPositive,
    /// Any other human pool.
    Negative,
}

impl PoolRole {
    pub fn is_positive(self) -> bool {
        matches!(self, PoolRole::InDomainPositive | PoolRole::HeldOutPositive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Pool<T: Scalar> {
    pub id: String,
    pub role: PoolRole,
    pub emb: EmbeddingMatrix<T>,
}

/// Whether detector scores are raw logits or sigmoid probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    #[default]
    Logit,
    Probability,
}

/// One (architecture, seed, recipe) detector with all of its pools.
#[derive(Debug, Clone)]
pub struct Cell<T: Scalar> {
    pub cell_id: String,
    pub tau: T,
    pub score_kind: ScoreKind,
    pools: Vec<Pool<T>>,
    head: HeadModel<T>,
    in_domain: usize,
    bias: usize,
    guard: usize,
}

impl<T: Scalar> Cell<T> {
    pub fn new(
        cell_id: impl Into<String>,
        tau: T,
        score_kind: ScoreKind,
        pools: Vec<Pool<T>>,
        head: HeadModel<T>,
    ) -> Result<Self> {
        if !head.is_evaluable() {
            return Err(Error::UnsupportedHead(head.kind()));
        }
        head.validate()?;
        for p in &pools {
            ensure_dims(head.h(), p.emb.h())?;
        }
        let only = |role: PoolRole| -> Result<usize> {
            let idx: Vec<usize> = (0..pools.len())
                .filter(|&i| pools[i].role == role)
                .collect();
            if idx.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "cell needs exactly one {role:?} pool, found {}",
                    idx.len()
                )));
            }
            Ok(idx[0])
        };
        let in_domain = only(PoolRole::InDomainPositive)?;
        let bias = only(PoolRole::BiasNegative)?;
        let guard = pools
            .iter()
            .position(|p| p.role == PoolRole::HeldOutPositive)
            .ok_or(Error::MissingRecallGuard)?;
        if !tau.is_finite() {
            return Err(Error::InvalidArgument("non-finite tau".into()));
        }
        Ok(Self {
            cell_id: cell_id.into(),
            tau,
            score_kind,
            pools,
            head,
            in_domain,
            bias,
            guard,
        })
    }

    pub fn pools(&self) -> &[Pool<T>] {
        &self.pools
    }

    pub fn head(&self) -> &HeadModel<T> {
        &self.head
    }

    pub fn h(&self) -> usize {
        self.head.h()
    }

    fn to_score(&self, logit: T) -> T {
        match self.score_kind {
            ScoreKind::Logit => logit,
            ScoreKind::Probability => T::one() / (T::one() + (-logit).exp()),
        }
    }

    /// Logits of every pool, optionally after ablating `(d, ε)`.
    pub fn logits(&self, ablation: Option<(&Direction<T>, T)>) -> Result<Vec<Vec<T>>> {
        self.pools
            .iter()
            .map(|p| {
                let emb = match ablation {
                    Some((d, eps)) => ablate_matrix(&p.emb, d, eps)?,
                    None => p.emb.clone(),
                };
                (0..emb.n()).map(|i| self.head.logit(emb.row(i))).collect()
            })
            .collect()
    }

    /// First-order logits: baseline plus the closed-form Δlogit per text.
    pub fn predicted_logits(&self, d: &Direction<T>, epsilon: T) -> Result<Vec<Vec<T>>> {
        self.pools
            .iter()
            .map(|p| {
                (0..p.emb.n())
                    .map(|i| {
                        let cls = p.emb.row(i);
                        let base = self.head.logit(cls)?;
                        let delta =
                            crate::predictor::predict_delta_logit(cls, i, d, &self.head, epsilon)?;
                        Ok(base + delta)
                    })
                    .collect()
            })
            .collect()
    }

    /// Metric block from per-pool logits at the cell threshold.
    pub fn block_from_logits(&self, logits: &[Vec<T>]) -> Result<MetricBlock<T>> {
        ensure_dims(self.pools.len(), logits.len())?;
        let scores: Vec<Vec<T>> = logits
            .iter()
            .map(|l| l.iter().map(|&v| self.to_score(v)).collect())
            .collect();
        let mut pools = std::collections::BTreeMap::new();
        for (p, s) in self.pools.iter().zip(&scores) {
            let r = rate_at(s, self.tau);
            let rates = if p.role.is_positive() {
                PoolRates {
                    tpr: Some(r),
                    fpr: None,
                }
            } else {
                PoolRates {
                    tpr: None,
                    fpr: Some(r),
                }
            };
            pools.insert(p.id.clone(), rates);
        }
        Ok(MetricBlock {
            auroc: auroc(&scores[self.in_domain], &scores[self.bias])?,
            fpr_at_tau: rate_at(&scores[self.bias], self.tau),
            tpr_at_tau: rate_at(&scores[self.in_domain], self.tau),
            tau: self.tau,
            pools,
            recall_guard: Some(self.pools[self.guard].id.clone()),
        })
    }

    pub fn evaluate(&self, ablation: Option<(&Direction<T>, T)>) -> Result<MetricBlock<T>> {
        self.block_from_logits(&self.logits(ablation)?)
    }

    pub fn evaluate_predicted(&self, d: &Direction<T>, epsilon: T) -> Result<MetricBlock<T>> {
        self.block_from_logits(&self.predicted_logits(d, epsilon)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Pass,
    Decline,
}

/// A violated strict-Pareto clause, with the values that violated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "clause", rename_all = "snake_case")]
pub enum Reason<T: Scalar> {
    /// Bias-pool FPR did not strictly decrease.
    FprNotStrictlyDown { baseline: T, candidate: T },
    /// Cp₁ TPR fell more than the tolerance below baseline.
    RecallDropped {
        baseline: T,
        candidate: T,
        tolerance: T,
    },
    /// Headline AUROC decreased.
    AurocDecreased { baseline: T, candidate: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Verdict<T: Scalar> {
    pub outcome: Outcome,
    pub reasons: Vec<Reason<T>>,
}

impl<T: Scalar> Verdict<T> {
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

/// PASS iff bias FPR strictly down, Cp₁ TPR ≥ baseline − 0.02, and AUROC
/// non-decreasing. Every failed clause is listed.
pub fn strict_pareto_verdict<T: Scalar>(
    baseline: &MetricBlock<T>,
    candidate: &MetricBlock<T>,
) -> Result<Verdict<T>> {
    let base_guard = baseline.recall_guard_tpr()?;
    let cand_guard = candidate.recall_guard_tpr()?;
    let tol = T::lit(RECALL_TOLERANCE);
    let mut reasons = Vec::new();
    if !(candidate.fpr_at_tau < baseline.fpr_at_tau) {
        reasons.push(Reason::FprNotStrictlyDown {
            baseline: baseline.fpr_at_tau,
            candidate: candidate.fpr_at_tau,
        });
    }
    if !(cand_guard >= base_guard - tol) {
        reasons.push(Reason::RecallDropped {
            baseline: base_guard,
            candidate: cand_guard,
            tolerance: tol,
        });
    }
    if !(candidate.auroc >= baseline.auroc) {
        reasons.push(Reason::AurocDecreased {
            baseline: baseline.auroc,
            candidate: candidate.auroc,
        });
    }
    Ok(Verdict {
        outcome: if reasons.is_empty() {
            Outcome::Pass
        } else {
            Outcome::Decline
        },
        reasons,
    })
}

/// How far a candidate is from passing: the largest clause violation,
/// zero or negative when it passes.
pub fn pareto_shortfall<T: Scalar>(
    baseline: &MetricBlock<T>,
    candidate: &MetricBlock<T>,
) -> Result<T> {
    let fpr = candidate.fpr_at_tau - baseline.fpr_at_tau;
    let recall =
        (baseline.recall_guard_tpr()? - T::lit(RECALL_TOLERANCE)) - candidate.recall_guard_tpr()?;
    let auc = baseline.auroc - candidate.auroc;
    Ok(fpr.max(recall).max(auc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Candidate<T: Scalar> {
    pub axis: String,
    /// Position of the axis in the sweep's bank.
    pub axis_index: usize,
    pub epsilon: T,
    pub metrics: MetricBlock<T>,
    pub predicted: MetricBlock<T>,
    pub predicted_delta_fpr: T,
    pub verdict: Verdict<T>,
    pub predicted_verdict: Verdict<T>,
}

impl<T: Scalar> Candidate<T> {
    pub fn fpr_reduction(&self, baseline: &MetricBlock<T>) -> T {
        baseline.fpr_at_tau - self.metrics.fpr_at_tau
    }

    pub fn predicted_fpr_reduction(&self, baseline: &MetricBlock<T>) -> T {
        baseline.fpr_at_tau - self.predicted.fpr_at_tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ParetoCell<T: Scalar> {
    pub cell_id: String,
    pub baseline: MetricBlock<T>,
    pub candidates: Vec<Candidate<T>>,
    pub verdict: Verdict<T>,
}

/// Evaluates every (axis, ε) pair, axis-major then ε ascending.
pub fn sweep<T: Scalar>(
    cell: &Cell<T>,
    axis_bank: &[Direction<T>],
    eps_grid: &[T],
) -> Result<ParetoCell<T>> {
    let baseline = cell.evaluate(None)?;
    let mut grid: Vec<T> = eps_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let jobs: Vec<(usize, T)> = (0..axis_bank.len())
        .flat_map(|a| grid.iter().map(move |&e| (a, e)))
        .collect();
    let candidates: Vec<Candidate<T>> = jobs
        .par_iter()
        .map(|&(a, eps)| {
            let d = &axis_bank[a];
            let annotate = |e: Error| Error::Candidate {
                axis: d.axis.to_string(),
                epsilon: eps.as_f64(),
                source: Box::new(e),
            };
            let metrics = cell.evaluate(Some((d, eps))).map_err(annotate)?;
            let predicted = cell.evaluate_predicted(d, eps).map_err(annotate)?;
            let verdict = strict_pareto_verdict(&baseline, &metrics).map_err(annotate)?;
            let predicted_verdict =
                strict_pareto_verdict(&baseline, &predicted).map_err(annotate)?;
            Ok(Candidate {
                axis: d.axis.to_string(),
                axis_index: a,
                epsilon: eps,
                predicted_delta_fpr: predicted.fpr_at_tau - baseline.fpr_at_tau,
                metrics,
                predicted,
                verdict,
                predicted_verdict,
            })
        })
        .collect::<Result<_>>()?;

    let verdict = if candidates.iter().any(|c| c.verdict.passed()) {
        Verdict {
            outcome: Outcome::Pass,
            reasons: Vec::new(),
        }
    } else {
        // the cell declines for whatever its closest candidate failed on
        let mut closest: Option<(&Candidate<T>, T)> = None;
        for c in &candidates {
            let s = pareto_shortfall(&baseline, &c.metrics)?;
            if closest.is_none_or(|(_, best)| s < best) {
                closest = Some((c, s));
            }
        }
        Verdict {
            outcome: Outcome::Decline,
            reasons: closest
                .map(|(c, _)| c.verdict.reasons.clone())
                .unwrap_or_default(),
        }
    };
    Ok(ParetoCell {
        cell_id: cell.cell_id.clone(),
        baseline,
        candidates,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    Predictor,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Agreement {
    ByteExact,
    MutualDecline,
    NearTie,
    Disagree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Choice<T: Scalar> {
    pub axis: String,
    pub epsilon: T,
    pub candidate_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SelectorDecision<T: Scalar> {
    pub mode: SelectorMode,
    pub chosen: Option<Choice<T>>,
    /// Comparison against the other mode's choice on the same cell.
    pub agreement: Agreement,
    /// Predicted-metric gap that classified a disagreement (0 when they agree).
    pub gap: T,
}

fn pick<T: Scalar>(cell: &ParetoCell<T>, mode: SelectorMode) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cell.candidates.iter().enumerate() {
        let (passed, reduction) = match mode {
            SelectorMode::Oracle => (c.verdict.passed(), c.fpr_reduction(&cell.baseline)),
            SelectorMode::Predictor => (
                c.predicted_verdict.passed(),
                c.predicted_fpr_reduction(&cell.baseline),
            ),
        };
        if !passed {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cb = &cell.candidates[b];
                let rb = match mode {
                    SelectorMode::Oracle => cb.fpr_reduction(&cell.baseline),
                    SelectorMode::Predictor => cb.predicted_fpr_reduction(&cell.baseline),
                };
                // max reduction, then smaller |ε|, then bank order
                reduction > rb
                    || (reduction == rb && c.epsilon.abs() < cb.epsilon.abs())
                    || (reduction == rb
                        && c.epsilon.abs() == cb.epsilon.abs()
                        && c.axis_index < cb.axis_index)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Chooses a PASS candidate with maximal bias-FPR reduction (measured for
/// the oracle, predicted for the predictor), then classifies agreement with
/// the other mode.
pub fn select<T: Scalar>(cell: &ParetoCell<T>, mode: SelectorMode) -> Result<SelectorDecision<T>> {
    let oracle = pick(cell, SelectorMode::Oracle);
    let predictor = pick(cell, SelectorMode::Predictor);
    let mine = match mode {
        SelectorMode::Oracle => oracle,
        SelectorMode::Predictor => predictor,
    };
    let (agreement, gap) = match (oracle, predictor) {
        (None, None) => (Agreement::MutualDecline, T::zero()),
        (Some(o), Some(p)) if o == p => (Agreement::ByteExact, T::zero()),
        (Some(o), Some(p)) => {
            let po = &cell.candidates[o].predicted;
            let pp = &cell.candidates[p].predicted;
            let gap = (po.fpr_at_tau - pp.fpr_at_tau).abs();
            (classify(gap), gap)
        }
        // oracle passed a candidate the predictor's metrics reject
        (Some(o), None) => {
            let gap =
                pareto_shortfall(&cell.baseline, &cell.candidates[o].predicted)?.max(T::zero());
            (classify(gap), gap)
        }
        (None, Some(p)) => {
            let gap = pareto_shortfall(&cell.baseline, &cell.candidates[p].metrics)?.max(T::zero());
            (classify(gap), gap)
        }
    };
    Ok(SelectorDecision {
        mode,
        chosen: mine.map(|i| Choice {
            axis: cell.candidates[i].axis.clone(),
            epsilon: cell.candidates[i].epsilon,
            candidate_index: i,
        }),
        agreement,
        gap,
    })
}

fn classify<T: Scalar>(gap: T) -> Agreement {
    // a gap equal to the MAE still counts, up to rounding in the subtraction
    if gap <= T::lit(PREDICTOR_MAE) + T::epsilon().sqrt() * T::lit(1e-4) {
        Agreement::NearTie
    } else {
        Agreement::Disagree
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeploymentOutcome {
    SuccessPredicted,
    FailurePredicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DeploymentVerdict<T: Scalar> {
    pub outcome: DeploymentOutcome,
    pub raw_norm: T,
    pub threshold: T,
    /// `raw_norm − threshold`.
    pub margin: T,
}

pub fn deployment_rule_from_norm<T: Scalar>(raw_norm: T, threshold: T) -> DeploymentVerdict<T> {
    DeploymentVerdict {
        outcome: if raw_norm >= threshold {
            DeploymentOutcome::SuccessPredicted
        } else {
            DeploymentOutcome::FailurePredicted
        },
        raw_norm,
        threshold,
        margin: raw_norm - threshold,
    }
}

/// SUCCESS iff ‖d_typ_NYT‖ ≥ threshold.
pub fn deployment_scalar_rule<T: Scalar>(
    d_typ_nyt: &Direction<T>,
    threshold: T,
) -> DeploymentVerdict<T> {
    deployment_rule_from_norm(d_typ_nyt.raw_norm(), threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DeploymentPanel<T: Scalar> {
    pub rows: Vec<(String, DeploymentVerdict<T>)>,
    pub n_success: usize,
    pub n_failure: usize,
    /// Smallest SUCCESS norm minus largest FAILURE norm, when both exist.
    pub separation_gap: Option<T>,
}

pub fn deployment_panel<T: Scalar>(norms: &[(String, T)], threshold: T) -> DeploymentPanel<T> {
    let rows: Vec<(String, DeploymentVerdict<T>)> = norms
        .iter()
        .map(|(name, n)| (name.clone(), deployment_rule_from_norm(*n, threshold)))
        .collect();
    let success: Vec<T> = rows
        .iter()
        .filter(|(_, v)| v.outcome == DeploymentOutcome::SuccessPredicted)
        .map(|(_, v)| v.raw_norm)
        .collect();
    let failure: Vec<T> = rows
        .iter()
        .filter(|(_, v)| v.outcome == DeploymentOutcome::FailurePredicted)
        .map(|(_, v)| v.raw_norm)
        .collect();
    let separation_gap = if success.is_empty() || failure.is_empty() {
        None
    } else {
        let lo = success.iter().fold(T::infinity(), |m, &v| m.min(v));
        let hi = failure.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        Some(lo - hi)
    };
    DeploymentPanel {
        n_success: success.len(),
        n_failure: failure.len(),
        rows,
        separation_gap,
    }
}
