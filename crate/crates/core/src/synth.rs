//! Seeded synthetic cells and toy heads. Every acceptance fixture is built
//! from a [`SyntheticCellSpec`] with a pinned seed, so regeneration is
//! bit-stable.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compute_direction, AxisId, AxisKind, Direction, EmbeddingMatrix};
use crate::intervention::{Cell, Pool, PoolRole, ScoreKind};
use crate::io::manifest::{ManifestRecord, PopulationManifest, TextRole};
use crate::predictor::{HeadModel, LinearHead, MlpHead};
use crate::scalar::Scalar;

/// Name of the synthetic length covariate written to the manifest.
pub const LENGTH_COVARIATE: &str = "char_length";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub name: String,
    pub pool_role: PoolRole,
    pub text_role: TextRole,
    pub n: usize,
    /// `(dimension, mean offset)` along planted basis axes.
    pub offsets: Vec<(usize, f64)>,
    /// Noise scale on the offset dimensions; all other dimensions are N(0, 1).
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadSpec {
    /// Sparse weights `(dimension, weight)`.
    Linear {
        weights: Vec<(usize, f64)>,
        bias: f64,
    },
    /// Random tanh network of widths (h, hidden, 1); `scale` sets the
    /// pre-activation magnitude and hence how nonlinear the head is.
    Mlp {
        hidden: usize,
        scale: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCellSpec {
    pub cell_id: String,
    pub h: usize,
    pub seed: u64,
    pub populations: Vec<PopulationSpec>,
    pub head: HeadSpec,
    /// Basis dimension carrying the planted bias.
    pub bias_axis: usize,
    /// Target correlation of the length covariate with the bias coordinate.
    pub length_correlation: f64,
    pub tau: f64,
    #[serde(default)]
    pub score_kind: ScoreKind,
}

impl SyntheticCellSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h < 2 {
            return Err(Error::InvalidArgument(format!("h = {} < 2", self.h)));
        }
        if self.bias_axis >= self.h {
            return Err(Error::InvalidArgument("bias axis outside h".into()));
        }
        if !(-1.0..=1.0).contains(&self.length_correlation) {
            return Err(Error::InvalidArgument(
                "length correlation outside [-1, 1]".into(),
            ));
        }
        for p in &self.populations {
            if p.n == 0 || !(p.scale > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "population `{}` needs n ≥ 1 and scale > 0",
                    p.name
                )));
            }
            if let Some(&(d, _)) = p.offsets.iter().find(|(d, _)| *d >= self.h) {
                return Err(Error::InvalidArgument(format!(
                    "offset dimension {d} outside h = {}",
                    self.h
                )));
            }
        }
        match &self.head {
            HeadSpec::Linear { weights, .. } => {
                if weights.iter().any(|(d, _)| *d >= self.h) {
                    return Err(Error::InvalidArgument(
                        "head weight dimension outside h".into(),
                    ));
                }
            }
            HeadSpec::Mlp { hidden, scale, .. } => {
                if *hidden == 0 || !(*scale > 0.0) {
                    return Err(Error::InvalidArgument(
                        "MLP head needs hidden ≥ 1 and scale > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCell<T: Scalar> {
    pub spec: SyntheticCellSpec,
    pub pools: Vec<Pool<T>>,
    pub manifest: PopulationManifest,
    pub head: HeadModel<T>,
}

impl<T: Scalar> SyntheticCell<T> {
    pub fn pool(&self, name: &str) -> Result<&Pool<T>> {
        self.pools
            .iter()
            .find(|p| p.id == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no pool `{name}`")))
    }

    fn pool_with_role(&self, role: PoolRole) -> Result<&Pool<T>> {
        self.pools
            .iter()
            .find(|p| p.role == role)
            .ok_or_else(|| Error::InvalidArgument(format!("no {role:?} pool")))
    }

    pub fn cell(&self) -> Result<Cell<T>> {
        Cell::new(
            self.spec.cell_id.clone(),
            T::lit(self.spec.tau),
            self.spec.score_kind,
            self.pools.clone(),
            self.head.clone(),
        )
    }

    /// All pools stacked in manifest order.
    pub fn stacked(&self) -> Result<EmbeddingMatrix<T>> {
        let views: Vec<_> = self.pools.iter().map(|p| p.emb.data()).collect();
        let data = ndarray::concatenate(ndarray::Axis(0), &views)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        EmbeddingMatrix::new(self.spec.cell_id.clone(), "synthetic", 0, data)
    }

    /// `d_class` (in-domain AI − other human) and `d_typ_NYT` (bias human −
    /// other human), in that bank order.
    pub fn axis_bank(&self) -> Result<Vec<Direction<T>>> {
        let ai = self.pool_with_role(PoolRole::InDomainPositive)?;
        let bias = self.pool_with_role(PoolRole::BiasNegative)?;
        let human = self.pool_with_role(PoolRole::Negative)?;
        Ok(vec![
            compute_direction(&ai.emb, &human.emb, AxisId::new(AxisKind::Class))?,
            compute_direction(&bias.emb, &human.emb, AxisId::new(AxisKind::TypNyt))?,
        ])
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn mlp_head<T: Scalar>(h: usize, hidden: usize, scale: f64, seed: u64) -> Result<MlpHead<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_scale = scale / (h as f64).sqrt();
    let w1 = Array2::from_shape_fn((hidden, h), |_| T::lit(normal(&mut rng) * w_scale));
    let b1 = (0..hidden)
        .map(|_| T::lit(normal(&mut rng) * 0.1))
        .collect::<Array1<T>>();
    let w2 = (0..hidden)
        .map(|_| T::lit(normal(&mut rng) / (hidden as f64).sqrt()))
        .collect::<Array1<T>>();
    MlpHead::new(w1, b1, w2, T::zero())
}

pub fn generate<T: Scalar>(spec: &SyntheticCellSpec) -> Result<SyntheticCell<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut raw: Vec<Array2<f64>> = Vec::with_capacity(spec.populations.len());
    for p in &spec.populations {
        let mut x = Array2::<f64>::zeros((p.n, spec.h));
        for i in 0..p.n {
            for j in 0..spec.h {
                x[[i, j]] = normal(&mut rng);
            }
            for &(d, off) in &p.offsets {
                x[[i, d]] = x[[i, d]] * p.scale + off;
            }
        }
        raw.push(x);
    }

    // length covariate: r · standardized bias coordinate + √(1 − r²) · noise
    let coords: Vec<f64> = raw
        .iter()
        .flat_map(|x| x.column(spec.bias_axis).to_vec())
        .collect();
    let m = coords.iter().sum::<f64>() / coords.len() as f64;
    let sd = (coords.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / coords.len() as f64)
        .sqrt()
        .max(1e-12);
    let r = spec.length_correlation;
    let mut records = Vec::new();
    let mut k = 0;
    for (p, x) in spec.populations.iter().zip(&raw) {
        for i in 0..p.n {
            let z = (coords[k] - m) / sd;
            k += 1;
            let len = 600.0 + 150.0 * (r * z + (1.0 - r * r).sqrt() * normal(&mut rng));
            let mut covariates = std::collections::BTreeMap::new();
            covariates.insert(LENGTH_COVARIATE.to_string(), Some(len.round()));
            covariates.insert("bias_coordinate".to_string(), Some(x[[i, spec.bias_axis]]));
            records.push(ManifestRecord {
                text_id: format!("{}-{i:05}", p.name),
                population: p.name.clone(),
                role: p.text_role,
                covariates,
            });
        }
    }

    let pools = spec
        .populations
        .iter()
        .zip(raw)
        .map(|(p, x)| {
            Ok(Pool {
                id: p.name.clone(),
                role: p.pool_role,
                emb: EmbeddingMatrix::new(spec.cell_id.clone(), "synthetic", 0, x.mapv(T::lit))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let head = match &spec.head {
        HeadSpec::Linear { weights, bias } => {
            let mut w = Array1::<T>::zeros(spec.h);
            for &(d, v) in weights {
                w[d] = T::lit(v);
            }
            HeadModel::Linear(LinearHead {
                weights: w,
                bias: T::lit(*bias),
            })
        }
        HeadSpec::Mlp {
            hidden,
            scale,
            seed,
        } => HeadModel::Mlp(mlp_head(spec.h, *hidden, *scale, *seed)?),
    };

    Ok(SyntheticCell {
        spec: spec.clone(),
        pools,
        manifest: PopulationManifest { records },
        head,
    })
}

/// The bundled planted-bias cell. Dimension 0 carries the class signal,
/// dimension 1 the typicality offset shared by in-domain AI text and the
/// bias-pool humans; the held-out pool leans on typicality more than the
/// in-domain pool, so removing all of it costs held-out recall.
pub fn planted_bias_spec(seed: u64) -> SyntheticCellSpec {
    let pop = |name: &str, pool_role, text_role, sig: f64, typ: f64| PopulationSpec {
        name: name.into(),
        pool_role,
        text_role,
        n: 400,
        offsets: vec![(0, sig), (1, typ)],
        scale: 0.7,
    };
    SyntheticCellSpec {
        cell_id: format!("planted-{seed}"),
        h: 128,
        seed,
        populations: vec![
            pop("HC3-AI", PoolRole::InDomainPositive, TextRole::Ai, 2.0, 1.5),
            pop("HC3-human", PoolRole::Negative, TextRole::Human, -2.0, -1.5),
            pop(
                "NYT-human",
                PoolRole::BiasNegative,
                TextRole::Human,
                -2.0,
                1.5,
            ),
            pop("Cp1-AI", PoolRole::HeldOutPositive, TextRole::Ai, 1.05, 2.0),
        ],
        head: HeadSpec::Linear {
            weights: vec![(0, 1.0), (1, 1.0)],
            bias: 0.0,
        },
        bias_axis: 1,
        length_correlation: 0.5,
        tau: 0.0,
        score_kind: ScoreKind::Logit,
    }
}

/// Two-population cloud with a planted gap of `gap` along dimension 0.
pub fn two_cloud_spec(h: usize, n: usize, gap: f64, seed: u64) -> SyntheticCellSpec {
    let pop = |name: &str, pool_role, text_role, off: f64| PopulationSpec {
        name: name.into(),
        pool_role,
        text_role,
        n,
        offsets: vec![(0, off)],
        scale: 1.0,
    };
    SyntheticCellSpec {
        cell_id: format!("clouds-{seed}"),
        h,
        seed,
        populations: vec![
            pop("A", PoolRole::InDomainPositive, TextRole::Ai, gap / 2.0),
            pop("B", PoolRole::BiasNegative, TextRole::Human, -gap / 2.0),
        ],
        head: HeadSpec::Linear {
            weights: vec![(0, 1.0)],
            bias: 0.0,
        },
        bias_axis: 0,
        length_correlation: 0.0,
        tau: 0.0,
        score_kind: ScoreKind::Logit,
    }
}

/// Two-axis probe construction: a high-variance typicality axis (dim 0)
/// with a large class gap and a tight, smaller-gap discriminative axis
/// (dim 1). Small samples lean on the first; large samples find the second.
pub fn probe_rotation_data(n: usize, h: usize, seed: u64) -> (Array2<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|i| i >= n / 2).collect();
    let mut x = Array2::<f64>::zeros((n, h));
    for i in 0..n {
        for j in 0..h {
            x[[i, j]] = normal(&mut rng);
        }
        let c = if labels[i] { 0.5 } else { -0.5 };
        x[[i, 0]] = x[[i, 0]] + 2.0 * c;
        x[[i, 1]] = x[[i, 1]] * 0.2 + 0.6 * c;
    }
    (x, labels)
}
