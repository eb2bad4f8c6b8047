//! Report document and its file set: canonical JSON, CSV tables and SVG
//! plots (ROC with two operating points, predicted-vs-measured scatter).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{DEGENERATE_AXIS_NORM, WEAK_AXIS_FRACTION};
use crate::intervention::{ParetoCell, DEPLOYMENT_THRESHOLD, PREDICTOR_MAE, RECALL_TOLERANCE};
use crate::io::canonical::{config_hash, to_canonical_string};
use crate::metrics::{
    roc_curve, tpr_at_fpr, MetricBlock, CALIBRATION_SHARE_FORMULA, DEFAULT_TARGET_TPR,
};
use crate::predictor::{TAYLOR_BAND, UPDATE_RULE};

/// FPRs at which ROC plots mark operating points.
pub const OPERATING_FPRS: [f64; 2] = [0.01, 0.05];

/// Conventions every number in a report depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub update_rule: String,
    pub calibration_share: String,
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Default for Ledger {
    fn default() -> Self {
        let thresholds = [
            ("degenerate_axis_norm", DEGENERATE_AXIS_NORM),
            ("weak_axis_fraction", WEAK_AXIS_FRACTION),
            ("recall_tolerance", RECALL_TOLERANCE),
            ("predictor_mae", PREDICTOR_MAE),
            ("deployment_threshold", DEPLOYMENT_THRESHOLD),
            ("target_tpr", DEFAULT_TARGET_TPR),
            ("taylor_band", TAYLOR_BAND),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            update_rule: UPDATE_RULE.into(),
            calibration_share: CALIBRATION_SHARE_FORMULA.into(),
            thresholds,
            notes: Vec::new(),
        }
    }
}

/// Scores for one ROC plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSeries {
    pub name: String,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

/// Paired predicted/measured values for one scatter plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSeries {
    pub name: String,
    pub predicted: Vec<f64>,
    pub measured: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTable {
    pub axes: Vec<String>,
    pub cosines: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    /// Validated run configuration; hashed into `config_hash`.
    pub config: Value,
    pub config_hash: String,
    pub ledger: Ledger,
    #[serde(default)]
    pub metric_blocks: BTreeMap<String, MetricBlock<f64>>,
    #[serde(default)]
    pub pareto_cells: Vec<ParetoCell<f64>>,
    #[serde(default)]
    pub alignment: BTreeMap<String, AlignmentTable>,
    /// Free-form results of the subcommand that produced the report.
    #[serde(default)]
    pub results: BTreeMap<String, Value>,
    #[serde(skip)]
    pub roc: Vec<RocSeries>,
    #[serde(skip)]
    pub scatter: Vec<ScatterSeries>,
}

impl Report {
    pub fn new(config: Value) -> Result<Self> {
        Ok(Self {
            config_hash: config_hash(&config)?,
            config,
            ledger: Ledger::default(),
            ..Self::default()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = to_canonical_string(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per metric block, keyed by block name.
pub fn metric_blocks_csv(blocks: &BTreeMap<String, MetricBlock<f64>>) -> String {
    let mut out =
        String::from("name,auroc,fpr_at_tau,tpr_at_tau,tau,recall_guard,recall_guard_tpr\n");
    for (name, b) in blocks {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(name),
            b.auroc,
            b.fpr_at_tau,
            b.tpr_at_tau,
            b.tau,
            csv_field(b.recall_guard.as_deref().unwrap_or("")),
            opt(b.recall_guard_tpr().ok())
        );
    }
    out
}

/// One row per sweep candidate.
pub fn candidates_csv(cells: &[ParetoCell<f64>]) -> String {
    let mut out = String::from(
        "cell_id,axis,epsilon,fpr_at_tau,recall_guard_tpr,auroc,predicted_fpr_at_tau,verdict,predicted_verdict\n",
    );
    for cell in cells {
        for c in &cell.candidates {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:?},{:?}",
                csv_field(&cell.cell_id),
                csv_field(&c.axis),
                c.epsilon,
                c.metrics.fpr_at_tau,
                opt(c.metrics.recall_guard_tpr().ok()),
                c.metrics.auroc,
                c.predicted.fpr_at_tau,
                c.verdict.outcome,
                c.predicted_verdict.outcome
            );
        }
    }
    out
}

const W: f64 = 400.0;
const PAD: f64 = 40.0;

fn sx(v: f64, lo: f64, hi: f64) -> f64 {
    PAD + (v - lo) / (hi - lo).max(1e-300) * (W - 2.0 * PAD)
}

fn sy(v: f64, lo: f64, hi: f64) -> f64 {
    W - PAD - (v - lo) / (hi - lo).max(1e-300) * (W - 2.0 * PAD)
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{W}\" viewBox=\"0 0 {W} {W}\">\n\
         <title>{}</title>\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        escape(title),
        W - 2.0 * PAD,
        W - 2.0 * PAD
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// ROC curve with operating points marked at FPR 1% and 5%.
pub fn roc_svg(series: &RocSeries) -> Result<String> {
    let pts = roc_curve(&series.pos, &series.neg)?;
    let mut out = svg_open(&format!("ROC {}", series.name));
    let path: Vec<String> = pts
        .iter()
        .map(|&(f, t)| format!("{:.2},{:.2}", sx(f, 0.0, 1.0), sy(t, 0.0, 1.0)))
        .collect();
    let _ = writeln!(
        out,
        "<polyline class=\"roc\" fill=\"none\" stroke=\"#1f77b4\" points=\"{}\"/>",
        path.join(" ")
    );
    for fpr in OPERATING_FPRS {
        let tpr = tpr_at_fpr(&series.pos, &series.neg, fpr)?;
        let _ = writeln!(
            out,
            "<circle class=\"operating-point\" data-fpr=\"{fpr}\" data-tpr=\"{tpr}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#d62728\"/>",
            sx(fpr, 0.0, 1.0),
            sy(tpr, 0.0, 1.0)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Predicted-vs-measured scatter with the identity line.
pub fn scatter_svg(series: &ScatterSeries) -> Result<String> {
    if series.predicted.len() != series.measured.len() {
        return Err(Error::LengthMismatch {
            what: "scatter series".into(),
            expected: series.predicted.len(),
            actual: series.measured.len(),
        });
    }
    let all = series.predicted.iter().chain(&series.measured).copied();
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (-1.0, 1.0)
    };
    let mut out = svg_open(&format!("predicted vs measured {}", series.name));
    let _ = writeln!(
        out,
        "<line class=\"identity\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888\" stroke-dasharray=\"4\"/>",
        sx(lo, lo, hi),
        sy(lo, lo, hi),
        sx(hi, lo, hi),
        sy(hi, lo, hi)
    );
    for (&p, &m) in series.predicted.iter().zip(&series.measured) {
        let _ = writeln!(
            out,
            "<circle class=\"point\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#1f77b4\"/>",
            sx(p, lo, hi),
            sy(m, lo, hi)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes `report.json` plus CSV tables and SVG plots when there is
/// something to put in them. Returns the written paths.
pub fn emit_report(report: &Report, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write(dir.join("report.json"), &report.to_json()?, &mut written)?;
    if !report.metric_blocks.is_empty() {
        write(
            dir.join("metric_blocks.csv"),
            &metric_blocks_csv(&report.metric_blocks),
            &mut written,
        )?;
    }
    if !report.pareto_cells.is_empty() {
        write(
            dir.join("candidates.csv"),
            &candidates_csv(&report.pareto_cells),
            &mut written,
        )?;
    }
    for s in &report.roc {
        write(
            dir.join(format!("roc_{}.svg", slug(&s.name))),
            &roc_svg(s)?,
            &mut written,
        )?;
    }
    for s in &report.scatter {
        write(
            dir.join(format!("scatter_{}.svg", slug(&s.name))),
            &scatter_svg(s)?,
            &mut written,
        )?;
    }
    Ok(written)
}
