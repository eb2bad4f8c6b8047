use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use axislab_core::geometry::{
    alignment_matrix, cosine, ols_residualize, partial_correlation, pls1_direction, project,
    AxisId, AxisKind, Direction, EmbeddingMatrix,
};
use axislab_core::intervention::{
    deployment_panel, select, sweep, Cell, ParetoCell, Pool, PoolRole, ScoreKind, SelectorMode,
};
use axislab_core::io::report::{AlignmentTable, RocSeries, ScatterSeries, OPERATING_FPRS};
use axislab_core::io::{emit_report, save_embeddings, save_head, save_manifest, Report};
use axislab_core::metrics::{aggregate_seeds, auroc, cohens_d, tpr_at_fpr, MetricBlock};
use axislab_core::predictor::{
    prediction_record, random_axis_null, taylor_table, DEFAULT_EPS_GRID,
};
use axislab_core::probes::{baron_kenny, fit_logistic_probe, inlp};
use axislab_core::synth::{generate, planted_bias_spec, SyntheticCell, SyntheticCellSpec};
use ndarray::{Array1, Axis};
use serde_json::{json, Value};

use crate::inputs::{corpus, head, invalid, require, CliResult, Corpus};
use crate::{
    AlignArgs, AxisArgs, Command, Common, DeployArgs, InlpArgs, MediateArgs, MetricsArgs,
    PredictArgs, ProbeArgs, ProjectArgs, ReportArgs, ResidualizeArgs, SelectArgs, SweepArgs,
    SynthArgs,
};

pub fn run(cmd: Command) -> CliResult<()> {
    let config = serde_json::to_value(&cmd).map_err(|e| invalid(e.to_string()))?;
    let report = Report::new(config)?;
    match cmd {
        Command::Axis(a) => axis(a, report),
        Command::Project(a) => project_cmd(a, report),
        Command::Metrics(a) => metrics(a, report),
        Command::Residualize(a) => residualize(a, report),
        Command::Probe(a) => probe(a, report),
        Command::Inlp(a) => inlp_cmd(a, report),
        Command::Predict(a) => predict(a, report),
        Command::Sweep(a) => sweep_cmd(a, report),
        Command::Select(a) => select_cmd(a, report),
        Command::Align(a) => align(a, report),
        Command::Mediate(a) => mediate(a, report),
        Command::DeployRule(a) => deploy(a, report),
        Command::Report(a) => merge_reports(a, report),
        Command::Synth(a) => synth(a),
    }
}

fn finish(report: Report, common: &Common) -> CliResult<()> {
    match &common.out {
        Some(dir) => {
            for p in emit_report(&report, dir)? {
                log::info!("wrote {}", p.display());
            }
        }
        None => print!("{}", report.to_json()?),
    }
    Ok(())
}

fn to_value<S: serde::Serialize>(v: &S) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| invalid(e.to_string()))
}

fn axis_summary(d: &Direction<f64>, emb: &EmbeddingMatrix<f64>) -> Value {
    json!({
        "axis": d.axis.to_string(),
        "raw_norm": d.raw_norm(),
        "weak": d.is_weak_for(emb),
        "provenance": d.provenance,
        "unit": d.unit().to_vec(),
    })
}

fn axis(a: AxisArgs, mut report: Report) -> CliResult<()> {
    let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
    let mut dirs = c.axes(&a.axes)?;
    if let Some(col) = &a.pls {
        let y = Array1::from(c.covariates.column(col)?);
        let d = pls1_direction(&c.emb, y.view())?;
        dirs.push(d);
    }
    if dirs.is_empty() {
        return Err(invalid("no axes requested (use --axis or --pls)"));
    }
    let summaries: Vec<Value> = dirs.iter().map(|d| axis_summary(d, &c.emb)).collect();
    report
        .results
        .insert("axes".into(), Value::Array(summaries));
    finish(report, &a.common)
}

/// Rows and labels of the named positive and negative populations.
fn labelled(
    c: &Corpus,
    pos: &[String],
    neg: &[String],
) -> CliResult<(EmbeddingMatrix<f64>, Vec<bool>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut strata = Vec::new();
    for (names, label) in [(pos, true), (neg, false)] {
        for name in names {
            let r = c.manifest.rows_of(name);
            if r.is_empty() {
                return Err(invalid(format!("population `{name}` not in manifest")));
            }
            labels.extend(std::iter::repeat_n(label, r.len()));
            strata.extend(std::iter::repeat_n(name.clone(), r.len()));
            rows.extend(r);
        }
    }
    let data = c.emb.data().select(Axis(0), &rows);
    Ok((c.emb.with_data(data)?, labels, strata))
}

fn pool_scores(c: &Corpus, d: &Direction<f64>, names: &[String]) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for n in names {
        out.extend(project(&c.population(n)?, d)?);
    }
    Ok(out)
}

fn project_cmd(a: ProjectArgs, mut report: Report) -> CliResult<()> {
    let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
    if a.pos.is_empty() != a.neg.is_empty() {
        return Err(invalid("--pos and --neg go together"));
    }
    let mut per_axis = BTreeMap::new();
    for spec in &a.axes {
        let d = c.axis(spec)?;
        let mut pops = BTreeMap::new();
        for p in c.manifest.populations() {
            let s = project(&c.population(&p)?, &d)?.to_vec();
            let agg = aggregate_seeds(&s)?;
            pops.insert(p, json!({"n": s.len(), "mean": agg.mean, "std": agg.std}));
        }
        let mut entry = json!({"raw_norm": d.raw_norm(), "populations": pops});
        if !a.pos.is_empty() {
            let pos = pool_scores(&c, &d, &a.pos)?;
            let neg = pool_scores(&c, &d, &a.neg)?;
            entry["auroc"] = json!(auroc(&pos, &neg)?);
            entry["cohens_d"] = json!(cohens_d(&pos, &neg)?);
            let name = d.axis.to_string();
            report.metric_blocks.insert(
                name.clone(),
                MetricBlock::matched(&pos, &neg, a.target_tpr)?,
            );
            report.roc.push(RocSeries { name, pos, neg });
        }
        per_axis.insert(d.axis.to_string(), entry);
    }
    report
        .results
        .insert("projections".into(), to_value(&per_axis)?);
    finish(report, &a.common)
}

fn metrics(a: MetricsArgs, mut report: Report) -> CliResult<()> {
    let pos: EmbeddingMatrix<f64> = axislab_core::io::load_embeddings(&a.pos)?;
    let neg: EmbeddingMatrix<f64> = axislab_core::io::load_embeddings(&a.neg)?;
    let (ps, ns) = match &a.head {
        Some(_) => {
            let h = head(&a.head)?;
            let score = |e: &EmbeddingMatrix<f64>| -> CliResult<Vec<f64>> {
                (0..e.n()).map(|i| Ok(h.logit(e.row(i))?)).collect()
            };
            (score(&pos)?, score(&neg)?)
        }
        None => {
            let d = axislab_core::geometry::compute_direction(
                &pos,
                &neg,
                AxisId::new(AxisKind::Class),
            )?;
            (project(&pos, &d)?.to_vec(), project(&neg, &d)?.to_vec())
        }
    };
    let block = match a.tau {
        Some(t) => MetricBlock::from_scores(&ps, &ns, t)?,
        None => MetricBlock::matched(&ps, &ns, a.target_tpr)?,
    };
    let mut ops = BTreeMap::new();
    for f in OPERATING_FPRS {
        ops.insert(format!("tpr_at_fpr_{f}"), tpr_at_fpr(&ps, &ns, f)?);
    }
    report.results.insert("auroc".into(), json!(block.auroc));
    report
        .results
        .insert("operating_points".into(), to_value(&ops)?);
    report.metric_blocks.insert("scores".into(), block);
    report.roc.push(RocSeries {
        name: "scores".into(),
        pos: ps,
        neg: ns,
    });
    finish(report, &a.common)
}

fn residualize(a: ResidualizeArgs, mut report: Report) -> CliResult<()> {
    let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
    let d = c.axis(&a.axis)?;
    let y = project(&c.emb, &d)?;
    let names: Vec<&str> = a.covariates.iter().map(String::as_str).collect();
    let x = c.covariates.matrix(&names)?;
    let fit = ols_residualize(y.view(), x.view(), &names)?;
    let mut partial = BTreeMap::new();
    for (j, name) in names.iter().enumerate() {
        let others: Vec<usize> = (0..names.len()).filter(|&k| k != j).collect();
        let controls = x.select(Axis(1), &others);
        partial.insert(
            name.to_string(),
            partial_correlation(y.view(), x.column(j), controls.view())?,
        );
    }
    report
        .results
        .insert("intercept".into(), json!(fit.intercept));
    report.results.insert(
        "coefficients".into(),
        to_value(
            &names
                .iter()
                .map(|s| s.to_string())
                .zip(fit.coefficients.iter().copied())
                .collect::<BTreeMap<_, _>>(),
        )?,
    );
    report
        .results
        .insert("partial_r".into(), to_value(&partial)?);
    if !a.pos.is_empty() || !a.neg.is_empty() {
        let pick = |names: &[String], v: &Array1<f64>| -> CliResult<Vec<f64>> {
            let mut out = Vec::new();
            for n in names {
                let rows = c.manifest.rows_of(n);
                if rows.is_empty() {
                    return Err(invalid(format!("population `{n}` not in manifest")));
                }
                out.extend(rows.iter().map(|&r| v[r]));
            }
            Ok(out)
        };
        let raw = auroc(&pick(&a.pos, &y)?, &pick(&a.neg, &y)?)?;
        let res = auroc(
            &pick(&a.pos, &fit.residuals)?,
            &pick(&a.neg, &fit.residuals)?,
        )?;
        report.results.insert(
            "auroc".into(),
            json!({"raw": raw, "residualized": res, "drop": raw - res}),
        );
    }
    finish(report, &a.common)
}

fn probe(a: ProbeArgs, mut report: Report) -> CliResult<()> {
    let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
    let (emb, labels, strata) = labelled(&c, &a.pos, &a.neg)?;
    let axes = c.axes(&a.axes)?;
    let mut runs = Vec::new();
    let mut cosines: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut accuracies = Vec::new();
    for &seed in &a.seeds {
        let model = fit_logistic_probe(&emb, &labels, Some(&strata), a.shots, a.reg, seed)?;
        let d = model.direction()?;
        let acc = model.accuracy(emb.data(), &labels)?;
        accuracies.push(acc);
        let mut cos = BTreeMap::new();
        for ax in &axes {
            let v = cosine(&d, ax)?;
            cosines.entry(ax.axis.to_string()).or_default().push(v);
            cos.insert(ax.axis.to_string(), v);
        }
        runs.push(json!({
            "seed": seed,
            "accuracy": acc,
            "converged": model.converged,
            "iterations": model.iterations,
            "cosines": cos,
            "weights": model.weights.to_vec(),
            "bias": model.bias,
        }));
    }
    let agg: BTreeMap<String, Value> = cosines
        .iter()
        .map(|(k, v)| Ok((k.clone(), to_value(&aggregate_seeds(v)?)?)))
        .collect::<CliResult<_>>()?;
    report.results.insert("runs".into(), Value::Array(runs));
    report
        .results
        .insert("accuracy".into(), to_value(&aggregate_seeds(&accuracies)?)?);
    report.results.insert("cosines".into(), to_value(&agg)?);
    finish(report, &a.common)
}

fn inlp_cmd(a: InlpArgs, mut report: Report) -> CliResult<()> {
    let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
    let (emb, labels, _) = labelled(&c, &a.pos, &a.neg)?;
    let r = inlp(&emb, &labels, a.k, a.reg, a.seed)?;
    if let Some(path) = &a.save_emb {
        let projected = c.emb.data().dot(&r.projector);
        save_embeddings(&c.emb.with_data(projected)?, path)?;
    }
    report
        .results
        .insert("accuracy_trace".into(), to_value(&r.accuracy_trace)?);
    report
        .results
        .insert("residual_accuracy".into(), json!(r.residual_accuracy));
    report
        .results
        .insert("removed".into(), json!(r.removed.len()));
    finish(report, &a.common)
}

fn predict(a: PredictArgs, mut report: Report) -> CliResult<()> {
    let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
    let h = head(&a.head)?;
    let d = c.axis(&a.axis)?;
    let grid: Vec<f64> = match (a.eps, &a.eps_grid) {
        (Some(e), _) => vec![e],
        (None, Some(g)) => g.clone(),
        (None, None) => DEFAULT_EPS_GRID.to_vec(),
    };
    let mut records = Vec::new();
    for &eps in &grid {
        let rec = prediction_record(&c.emb, &d, &h, eps, None)?;
        let mut v = to_value(&rec)?;
        if let Some(m) = &rec.measured {
            if eps != 0.0 {
                v["r2"] = json!(axislab_core::predictor::fit_r2(&rec.predicted, m)?);
            }
            report.scatter.push(ScatterSeries {
                name: format!("{}_eps_{eps}", d.axis),
                predicted: rec.predicted.clone(),
                measured: m.clone(),
            });
        }
        records.push(v);
    }
    report
        .results
        .insert("records".into(), Value::Array(records));
    if h.is_evaluable() && grid.iter().any(|&e| e != 0.0) {
        let nonzero: Vec<f64> = grid.iter().copied().filter(|&e| e != 0.0).collect();
        report.results.insert(
            "taylor".into(),
            to_value(&taylor_table(&c.emb, &d, &h, &nonzero)?)?,
        );
    }
    finish(report, &a.common)
}

fn cell_from_corpus(a: &SweepArgs, c: &Corpus) -> CliResult<Cell<f64>> {
    let in_domain = require(&a.in_domain, "in-domain")?;
    let bias = require(&a.bias, "bias")?;
    if a.guard.is_empty() {
        return Err(invalid(
            "missing required flag --guard (held-out recall pool)",
        ));
    }
    let mut pools = vec![
        Pool {
            id: in_domain.clone(),
            role: PoolRole::InDomainPositive,
            emb: c.population(in_domain)?,
        },
        Pool {
            id: bias.clone(),
            role: PoolRole::BiasNegative,
            emb: c.population(bias)?,
        },
    ];
    for g in &a.guard {
        pools.push(Pool {
            id: g.clone(),
            role: PoolRole::HeldOutPositive,
            emb: c.population(g)?,
        });
    }
    for n in &a.negative {
        pools.push(Pool {
            id: n.clone(),
            role: PoolRole::Negative,
            emb: c.population(n)?,
        });
    }
    let kind = if a.probability {
        ScoreKind::Probability
    } else {
        ScoreKind::Logit
    };
    let cell_id = format!("{}/L{}", c.emb.architecture, c.emb.layer);
    Ok(Cell::new(cell_id, a.tau, kind, pools, head(&a.head)?)?)
}

fn sweep_cmd(a: SweepArgs, mut report: Report) -> CliResult<()> {
    let grid = a
        .eps_grid
        .clone()
        .unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec());
    let mut cells: Vec<(Cell<f64>, Vec<Direction<f64>>)> = Vec::new();
    if a.corpus.emb.is_some() {
        let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
        if a.axes.is_empty() {
            return Err(invalid("missing required flag --axis"));
        }
        cells.push((cell_from_corpus(&a, &c)?, c.axes(&a.axes)?));
    } else {
        for &seed in &a.seeds {
            let s: SyntheticCell<f64> = generate(&planted_bias_spec(seed))?;
            cells.push((s.cell()?, s.axis_bank()?));
        }
    }
    let mut selections = Vec::new();
    let mut nulls = Vec::new();
    let mut reductions = Vec::new();
    for (cell, bank) in &cells {
        let pc = sweep(cell, bank, &grid)?;
        let oracle = select(&pc, SelectorMode::Oracle)?;
        let predictor = select(&pc, SelectorMode::Predictor)?;
        let best = oracle.chosen.as_ref().map(|ch| {
            let cand = &pc.candidates[ch.candidate_index];
            let r = cand.fpr_reduction(&pc.baseline);
            let rel = if pc.baseline.fpr_at_tau > 0.0 {
                r / pc.baseline.fpr_at_tau
            } else {
                0.0
            };
            reductions.push(rel);
            json!({
                "axis": cand.axis,
                "epsilon": cand.epsilon,
                "verdict": cand.verdict.outcome,
                "fpr_before": pc.baseline.fpr_at_tau,
                "fpr_after": cand.metrics.fpr_at_tau,
                "fpr_reduction": r,
                "fpr_reduction_relative": rel,
            })
        });
        selections.push(json!({
            "cell_id": pc.cell_id,
            "oracle": oracle,
            "predictor": predictor,
            "best": best,
        }));
        if a.k > 0 {
            let orth = match &a.orthogonal_to {
                Some(name) => Some(
                    bank.iter()
                        .find(|d| &d.axis.to_string() == name)
                        .ok_or_else(|| {
                            invalid(format!("--orthogonal-to `{name}` is not in the axis bank"))
                        })?,
                ),
                None => None,
            };
            let seed = a.seeds.first().copied().unwrap_or(0);
            let summary = random_axis_null(cell, a.null_eps, a.k, seed, orth)?;
            nulls.push(json!({"cell_id": pc.cell_id, "null": summary}));
        }
        report
            .metric_blocks
            .insert(format!("{}/baseline", pc.cell_id), pc.baseline.clone());
        report.pareto_cells.push(pc);
    }
    report
        .results
        .insert("selection".into(), Value::Array(selections));
    if !reductions.is_empty() {
        report.results.insert(
            "oracle_fpr_reduction_relative".into(),
            to_value(&aggregate_seeds(&reductions)?)?,
        );
    }
    if !nulls.is_empty() {
        report
            .results
            .insert("random_axis_null".into(), Value::Array(nulls));
    }
    finish(report, &a.common)
}

fn select_cmd(a: SelectArgs, mut report: Report) -> CliResult<()> {
    let text = fs::read_to_string(&a.report)
        .map_err(|e| invalid(format!("{}: {e}", a.report.display())))?;
    let saved: Value =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", a.report.display())))?;
    let cells: Vec<ParetoCell<f64>> = serde_json::from_value(
        saved.get("pareto_cells").cloned().unwrap_or(Value::Null),
    )
    .map_err(|e| {
        invalid(format!(
            "{}: no readable pareto_cells ({e})",
            a.report.display()
        ))
    })?;
    if cells.is_empty() {
        return Err(invalid(format!(
            "{} holds no sweep results",
            a.report.display()
        )));
    }
    let mut out = Vec::new();
    for pc in &cells {
        out.push(json!({
            "cell_id": pc.cell_id,
            "oracle": select(pc, SelectorMode::Oracle)?,
            "predictor": select(pc, SelectorMode::Predictor)?,
        }));
    }
    report.results.insert("selection".into(), Value::Array(out));
    finish(report, &a.common)
}

fn align(a: AlignArgs, mut report: Report) -> CliResult<()> {
    let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
    let dirs = c.axes(&a.axes)?;
    let m = alignment_matrix(&dirs)?;
    let table = AlignmentTable {
        axes: dirs.iter().map(|d| d.axis.to_string()).collect(),
        cosines: m.outer_iter().map(|r| r.to_vec()).collect(),
    };
    report.alignment.insert("axes".into(), table);
    finish(report, &a.common)
}

fn mediate(a: MediateArgs, mut report: Report) -> CliResult<()> {
    let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
    let projection = match &a.axis {
        Some(spec) => Some(project(&c.emb, &c.axis(spec)?)?.to_vec()),
        None => None,
    };
    let column = |name: &str| -> CliResult<Vec<f64>> {
        if name == "projection" {
            return projection
                .clone()
                .ok_or_else(|| invalid("column `projection` needs --axis"));
        }
        Ok(c.covariates.column(name)?)
    };
    let v = baron_kenny(&column(&a.x)?, &column(&a.m)?, &column(&a.y)?, a.alpha)?;
    report.results.insert("mediation".into(), to_value(&v)?);
    finish(report, &a.common)
}

fn deploy(a: DeployArgs, mut report: Report) -> CliResult<()> {
    let mut norms = a.norms.clone();
    if let Some(spec) = &a.axis {
        let c = corpus(&a.corpus.emb, &a.corpus.manifest)?;
        let d = c.axis(spec)?;
        norms.push((c.emb.architecture.clone(), d.raw_norm()));
    }
    if norms.is_empty() {
        return Err(invalid(
            "nothing to classify (use --norm name=value or --emb/--manifest/--axis)",
        ));
    }
    let panel = deployment_panel(&norms, a.threshold);
    report
        .results
        .insert("deployment".into(), to_value(&panel)?);
    finish(report, &a.common)
}

fn merge_reports(a: ReportArgs, mut report: Report) -> CliResult<()> {
    for path in &a.from {
        let text =
            fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let r: Report =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let tag = path
            .parent()
            .and_then(Path::file_name)
            .or_else(|| path.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for (k, v) in r.metric_blocks {
            report.metric_blocks.insert(format!("{tag}/{k}"), v);
        }
        for (k, v) in r.alignment {
            report.alignment.insert(format!("{tag}/{k}"), v);
        }
        for (k, v) in r.results {
            report.results.insert(format!("{tag}/{k}"), v);
        }
        report.pareto_cells.extend(r.pareto_cells);
    }
    finish(report, &a.common)
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let spec: SyntheticCellSpec = match &a.spec {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
        }
        None => planted_bias_spec(a.seed),
    };
    let s: SyntheticCell<f64> = generate(&spec)?;
    fs::create_dir_all(&a.out).map_err(|e| invalid(format!("{}: {e}", a.out.display())))?;
    save_embeddings(&s.stacked()?, a.out.join("cell.emb"))?;
    save_manifest(&s.manifest, a.out.join("manifest.jsonl"))?;
    save_head(&s.head, a.out.join("head.json"))?;
    let spec_json = axislab_core::io::to_canonical_string(&spec)?;
    fs::write(a.out.join("spec.json"), spec_json + "\n").map_err(|e| invalid(e.to_string()))?;
    Ok(())
}
