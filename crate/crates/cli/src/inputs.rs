//! Loading and validating command inputs.

use std::fmt;
use std::path::{Path, PathBuf};

use axislab_core::geometry::{
    compute_direction, AxisId, CovariateTable, Direction, EmbeddingMatrix,
};
use axislab_core::io::{load_embeddings, load_head, load_manifest, PopulationManifest};
use axislab_core::{Error, HeadModel};
use ndarray::Axis;

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unusable inputs (exit 2).
    Validation(String),
    /// The inputs were fine but the computation failed (exit 1).
    Compute(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Compute(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Compute(_) => "computation",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => f.write_str(m),
            CliError::Compute(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. }
            | Error::Format { .. }
            | Error::Truncated { .. }
            | Error::DuplicateTextId { .. }
            | Error::UnknownRole { .. }
            | Error::Json(_)
            | Error::InvalidArgument(_)
            | Error::InvalidEmbedding(_)
            | Error::NonFinite { .. }
            | Error::DimensionMismatch { .. }
            | Error::LengthMismatch { .. }
            | Error::MissingCovariate { .. }
            | Error::MissingRecallGuard => CliError::Validation(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// `name=POP_A:POP_B`, the centroid difference of two manifest populations.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub id: AxisId,
    pub from: String,
    pub minus: String,
}

impl std::str::FromStr for AxisSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, pops) = s
            .split_once('=')
            .ok_or_else(|| format!("axis `{s}` is not of the form name=POP_A:POP_B"))?;
        let (from, minus) = pops
            .split_once(':')
            .ok_or_else(|| format!("axis `{s}` is not of the form name=POP_A:POP_B"))?;
        if from.is_empty() || minus.is_empty() {
            return Err(format!("axis `{s}` names an empty population"));
        }
        let id = name.parse::<AxisId>().map_err(|e| e.to_string())?;
        Ok(Self {
            id,
            from: from.into(),
            minus: minus.into(),
        })
    }
}

pub fn parse_finite(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

/// `name=value` pair with a float value.
pub fn parse_named_value(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("`{s}` is not name=value"))?;
    let v = parse_finite(v)?;
    Ok((k.to_string(), v))
}

/// An embedding file with its manifest, rows aligned.
pub struct Corpus {
    pub emb: EmbeddingMatrix<f64>,
    pub manifest: PopulationManifest,
    pub covariates: CovariateTable<f64>,
}

impl Corpus {
    pub fn load(emb: &Path, manifest: &Path) -> CliResult<Self> {
        let emb: EmbeddingMatrix<f64> = load_embeddings(emb)?;
        let (manifest, covariates) = load_manifest(manifest)?;
        if manifest.len() != emb.n() {
            return Err(invalid(format!(
                "manifest has {} records but the embedding file has {} rows",
                manifest.len(),
                emb.n()
            )));
        }
        Ok(Self {
            emb,
            manifest,
            covariates,
        })
    }

    pub fn population(&self, name: &str) -> CliResult<EmbeddingMatrix<f64>> {
        let rows = self.manifest.rows_of(name);
        if rows.is_empty() {
            return Err(invalid(format!(
                "population `{name}` not in manifest (have {:?})",
                self.manifest.populations()
            )));
        }
        let data = self.emb.data().select(Axis(0), &rows);
        Ok(self.emb.with_data(data)?)
    }

    pub fn axis(&self, spec: &AxisSpec) -> CliResult<Direction<f64>> {
        let a = self.population(&spec.from)?;
        let b = self.population(&spec.minus)?;
        let d = compute_direction(&a, &b, spec.id.clone())?;
        if d.is_weak_for(&self.emb) {
            log::warn!(
                "axis {} is weak: raw norm {:.3e} is below 1e-3 of the median row norm",
                d.axis,
                d.raw_norm()
            );
        }
        Ok(d)
    }

    pub fn axes(&self, specs: &[AxisSpec]) -> CliResult<Vec<Direction<f64>>> {
        specs.iter().map(|s| self.axis(s)).collect()
    }
}

pub fn require<'a, T>(v: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    v.as_ref()
        .ok_or_else(|| invalid(format!("missing required flag --{flag}")))
}

pub fn corpus(emb: &Option<PathBuf>, manifest: &Option<PathBuf>) -> CliResult<Corpus> {
    Corpus::load(require(emb, "emb")?, require(manifest, "manifest")?)
}

pub fn head(path: &Option<PathBuf>) -> CliResult<HeadModel<f64>> {
    Ok(load_head(require(path, "head")?)?)
}
