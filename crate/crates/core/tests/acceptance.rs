//! Acceptance gate. Runs every headline criterion at its stated tolerance,
//! prints one PASS/FAIL line each, and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::Instant;

use axislab_core::geometry::{compute_direction, AxisId, AxisKind, Direction, EmbeddingMatrix};
use axislab_core::intervention::{
    deployment_panel, select, sweep, Agreement, DeploymentOutcome, SelectorMode,
    DEPLOYMENT_THRESHOLD,
};
use axislab_core::metrics::{
    auroc, calibration_share_from_scores, matched_tpr_threshold, rate_at, DetectorScores,
};
use axislab_core::predictor::{
    evaluate_delta_logit, fit_r2, loglog_slope, predict_delta_logit, random_axis_null,
    taylor_table, HeadModel, DEFAULT_EPS_GRID,
};
use axislab_core::probes::{fit_logistic, inlp};
use axislab_core::synth::{
    generate, mlp_head, planted_bias_spec, probe_rotation_data, two_cloud_spec,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn predictor_exactness() -> Outcome {
    let start = Instant::now();
    let mut predicted = Vec::new();
    let mut measured = Vec::new();
    for scale in [0.1, 1.0, 10.0] {
        for seed in 0..3u64 {
            let s = generate::<f64>(&two_cloud_spec(32, 50, 2.0, seed)).unwrap();
            let (a, b) = (&s.pools[0].emb, &s.pools[1].emb);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let w = Array1::from_shape_fn(32, |_| scale * normal(&mut rng));
            let head = HeadModel::linear(w, scale * 0.3);
            let class = compute_direction(a, b, AxisId::new(AxisKind::Class)).unwrap();
            let other = Direction::from_raw(
                AxisId::new(AxisKind::Random),
                Array1::from_shape_fn(32, |_| normal(&mut rng)),
                "random",
            )
            .unwrap();
            for d in [&class, &other] {
                for eps in [-0.7, -0.3, 0.3, 0.7] {
                    // one measurement = mean Δlogit over the pool
                    let (mut p, mut m) = (0.0, 0.0);
                    for i in 0..a.n() {
                        p += predict_delta_logit(a.row(i), i, d, &head, eps).unwrap();
                        m += evaluate_delta_logit(a.row(i), d, &head, eps).unwrap();
                    }
                    predicted.push(p / a.n() as f64);
                    measured.push(m / a.n() as f64);
                }
            }
        }
    }
    let r2 = fit_r2(&predicted, &measured).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        name: "predictor exactness",
        pass: measured.len() == 72 && r2 >= 1.0 - 1e-12 && secs < 1.0,
        detail: format!(
            "n = {}, R² = 1 - {:.2e}, {:.3} s",
            measured.len(),
            1.0 - r2,
            secs
        ),
    }
}

const TOY_MLP_SCALE: f64 = 0.5;

fn taylor_band() -> Outcome {
    let s = generate::<f64>(&two_cloud_spec(32, 200, 2.0, 11)).unwrap();
    let emb = s.stacked().unwrap();
    let d = compute_direction(
        &s.pools[0].emb,
        &s.pools[1].emb,
        AxisId::new(AxisKind::Class),
    )
    .unwrap();
    let small = [0.025, 0.05, 0.1, 0.2];
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in [12u64, 13, 14] {
        let head = HeadModel::Mlp(mlp_head(32, 16, TOY_MLP_SCALE, seed).unwrap());
        let rows = taylor_table(&emb, &d, &head, &DEFAULT_EPS_GRID).unwrap();
        let worst_band = rows
            .iter()
            .filter(|r| r.in_band)
            .map(|r| r.median_relative_error)
            .fold(0.0f64, f64::max);
        let at_one = rows
            .iter()
            .filter(|r| !r.in_band)
            .map(|r| r.median_relative_error)
            .fold(0.0f64, f64::max);
        let errs: Vec<f64> = taylor_table(&emb, &d, &head, &small)
            .unwrap()
            .iter()
            .map(|r| r.median_absolute_error)
            .collect();
        let slope = loglog_slope(&small, &errs).unwrap();
        ok &= worst_band <= 0.05 && slope >= 1.8;
        parts.push(format!(
            "head {seed}: band max {worst_band:.4}, |eps| = 1 {at_one:.4}, slope {slope:.3}"
        ));
    }
    Outcome {
        name: "Taylor band",
        pass: ok,
        detail: format!(
            "median rel. err, MLP (32, 16, 1) scale {TOY_MLP_SCALE}: {}",
            parts.join("; ")
        ),
    }
}

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

fn auroc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    let mut tied_pools = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=200);
        let m = rng.random_range(1..=200);
        let levels = rng.random_range(2..=20) as f64;
        let mut draw = |k: usize| -> Vec<f64> {
            (0..k)
                .map(|_| (normal(&mut rng) * levels / 3.0).round() + rng.random_range(0..2) as f64)
                .collect()
        };
        let pos = draw(n);
        let neg = draw(m);
        if pos.iter().any(|p| neg.contains(p)) {
            tied_pools += 1;
        }
        if auroc(&pos, &neg).unwrap() != brute_auroc(&pos, &neg) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        name: "AUROC oracle equivalence",
        pass: mismatches == 0 && secs < 5.0,
        detail: format!(
            "200 pools, {tied_pools} with cross-pool ties, {mismatches} mismatches, {secs:.3} s"
        ),
    }
}

fn matched_tpr_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut bad = 0;
    for _ in 0..100 {
        let n = rng.random_range(10..=500);
        let pos: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let tau = matched_tpr_threshold(&pos, 0.9).unwrap();
        let tpr = rate_at(&pos, tau);
        if !(tpr >= 0.9 && tpr < 0.9 + 1.0 / n as f64) {
            bad += 1;
        }
    }
    // detector b = exp(a + 1): same ranking, different default-threshold FPR
    let pos_a: Vec<f64> = (0..2000).map(|_| 1.0 + normal(&mut rng)).collect();
    let neg_a: Vec<f64> = (0..2000).map(|_| -1.0 + normal(&mut rng)).collect();
    let pos_b: Vec<f64> = pos_a.iter().map(|v| (v + 1.0).exp()).collect();
    let neg_b: Vec<f64> = neg_a.iter().map(|v| (v + 1.0).exp()).collect();
    let share = calibration_share_from_scores(
        &DetectorScores {
            pos: &pos_a,
            neg: &neg_a,
            default_tau: 0.0,
        },
        &DetectorScores {
            pos: &pos_b,
            neg: &neg_b,
            default_tau: 0.5f64.exp(),
        },
        0.9,
    )
    .unwrap();
    Outcome {
        name: "matched-TPR protocol",
        pass: bad == 0 && (share.share - 1.0).abs() <= 1e-9,
        detail: format!(
            "{bad}/100 pools outside [0.90, 0.90 + 1/n); calibration share {:.12} (dFPR default {:.4})",
            share.share, share.delta_fpr_default
        ),
    }
}

fn strict_pareto_engine() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut exact = 0;
    let mut near = 0;
    for seed in 0..10u64 {
        let s = generate::<f64>(&planted_bias_spec(seed)).unwrap();
        let cell = s.cell().unwrap();
        let bank = s.axis_bank().unwrap();
        let pareto = sweep(&cell, &bank, &DEFAULT_EPS_GRID).unwrap();
        let oracle = select(&pareto, SelectorMode::Oracle).unwrap();
        let pred = select(&pareto, SelectorMode::Predictor).unwrap();
        match pred.agreement {
            Agreement::ByteExact => exact += 1,
            Agreement::NearTie => near += 1,
            _ => ok = false,
        }
        let Some(choice) = oracle.chosen else {
            ok = false;
            lines.push(format!("seed {seed}: oracle declined"));
            continue;
        };
        let c = &pareto.candidates[choice.candidate_index];
        let base = &pareto.baseline;
        let reduction = (base.fpr_at_tau - c.metrics.fpr_at_tau) / base.fpr_at_tau;
        let (cp_base, cp_after) = (
            base.recall_guard_tpr().unwrap(),
            c.metrics.recall_guard_tpr().unwrap(),
        );
        let cp_drop = cp_base - cp_after;
        if seed == 0 {
            lines.push(format!(
                "seed 0: {} eps {:+.1}, FPR {:.3} -> {:.3} ({:.0}% down), Cp1 drop {:.4}",
                c.axis,
                c.epsilon,
                base.fpr_at_tau,
                c.metrics.fpr_at_tau,
                100.0 * reduction,
                cp_drop
            ));
        }
        let good = c.verdict.passed() && reduction >= 0.5 && cp_after >= cp_base - 0.02;
        if !good {
            lines.push(format!(
                "seed {seed}: {} eps {:+.1}, reduction {reduction:.3}, Cp1 drop {cp_drop:.4}",
                c.axis, c.epsilon
            ));
        }
        ok &= good;
    }
    ok &= exact >= 9;
    lines.push(format!(
        "predictor agreement: {exact}/10 byte-exact, {near} near-tie"
    ));
    Outcome {
        name: "strict-Pareto engine",
        pass: ok,
        detail: lines.join("; "),
    }
}

fn random_axis_specificity() -> Outcome {
    let s = generate::<f64>(&planted_bias_spec(0)).unwrap();
    let cell = s.cell().unwrap();
    let planted = s.axis_bank().unwrap().remove(1);
    let base = cell.evaluate(None).unwrap();
    let after = cell.evaluate(Some((&planted, 0.7))).unwrap();
    let planted_delta = (after.fpr_at_tau - base.fpr_at_tau).abs();
    let null = random_axis_null(&cell, 0.7, 20, 99, None).unwrap();
    Outcome {
        name: "random-axis specificity",
        pass: null.max_abs_delta_fpr < planted_delta / 5.0,
        detail: format!(
            "K = 20 null max |dFPR| {:.4} vs planted |dFPR| {:.4} (bound {:.4})",
            null.max_abs_delta_fpr,
            planted_delta,
            planted_delta / 5.0
        ),
    }
}

fn inlp_baseline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (n, h) = (2000, 16);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let x = Array2::from_shape_fn((n, h), |(i, j)| {
        let z = normal(&mut rng);
        if j == 0 {
            z * 0.5 + if labels[i] { 1.5 } else { -1.5 }
        } else {
            z
        }
    });
    let emb = EmbeddingMatrix::from_rows(x).unwrap();
    let r = inlp(&emb, &labels, 1, 1e-2, 5).unwrap();
    let p = &r.projector;
    let idem = (&p.dot(p) - p).iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Outcome {
        name: "INLP baseline",
        pass: r.residual_accuracy <= 0.55 && idem <= 1e-10,
        detail: format!(
            "accuracy before {:.3}, after k = 1: {:.3}; max |PP - P| {idem:.1e}",
            r.accuracy_trace[0], r.residual_accuracy
        ),
    }
}

fn probe_rotation() -> Outcome {
    let h = 16;
    let cos_typ = |n: usize, seed: u64| {
        let (x, y) = probe_rotation_data(n, h, seed);
        let w = fit_logistic(x.view(), &y, 1e-2).unwrap().weights;
        w[0].abs() / w.dot(&w).sqrt()
    };
    let small: Vec<f64> = (0..10).map(|s| cos_typ(24, s)).collect();
    let large: Vec<f64> = (0..10).map(|s| cos_typ(1000, 100 + s)).collect();
    let ms = small.iter().sum::<f64>() / 10.0;
    let ml = large.iter().sum::<f64>() / 10.0;
    Outcome {
        name: "probe rotation",
        pass: ms - ml >= 0.2,
        detail: format!(
            "mean |cos| to typicality axis: n = 24 {ms:.3}, n = 1000 {ml:.3}, difference {:.3}",
            ms - ml
        ),
    }
}

fn deployment_rule() -> Outcome {
    let norms: Vec<(String, f64)> = [17.47, 7.74, 6.41, 5.11, 4.77, 3.00]
        .iter()
        .enumerate()
        .map(|(i, &v)| (format!("arch{i}"), v))
        .collect();
    let panel = deployment_panel(&norms, DEPLOYMENT_THRESHOLD);
    let gap = panel.separation_gap.unwrap_or(f64::NAN);
    let outcomes: Vec<bool> = panel
        .rows
        .iter()
        .map(|(_, v)| v.outcome == DeploymentOutcome::SuccessPredicted)
        .collect();
    // inputs are rounded to 0.01, so the reported 0.337 margin can only be
    // matched to that precision
    Outcome {
        name: "deployment scalar rule",
        pass: panel.n_success == 4
            && panel.n_failure == 2
            && outcomes == [true, true, true, true, false, false]
            && (gap - 0.337).abs() <= 0.01,
        detail: format!(
            "{}/6 SUCCESS, {}/6 FAILURE at {DEPLOYMENT_THRESHOLD}; separation margin {gap:.3} (reported 0.337)",
            panel.n_success, panel.n_failure
        ),
    }
}

fn non_reproducibility_note() -> Outcome {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md"))
        .unwrap_or_default();
    let documented = readme.contains("## What is not reproduced here");
    Outcome {
        name: "explicit non-reproducibility",
        pass: documented,
        detail: "absolute AUROC/FPR values of the original detectors need the original models and corpora; \
                 this suite checks formulas and protocols only (README section present)"
            .into(),
    }
}

fn main() {
    let checks: Vec<fn() -> Outcome> = vec![
        predictor_exactness,
        taylor_band,
        auroc_oracle,
        matched_tpr_protocol,
        strict_pareto_engine,
        random_axis_specificity,
        inlp_baseline,
        probe_rotation,
        deployment_rule,
        non_reproducibility_note,
    ];
    let mut failed = BTreeMap::new();
    for check in checks {
        let o = check();
        println!(
            "{} {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        if !o.pass {
            failed.insert(o.name, o.detail);
        }
    }
    if !failed.is_empty() {
        println!("{} acceptance criteria failed", failed.len());
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
