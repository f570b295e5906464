//! Turning embedding tensors into low-dimensional feature rows.

mod pca;
mod pool;
mod tsne;

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::gaussian::{read_json, write_json};
use crate::tensor_io::EmbeddingTensor;

pub use pca::{fit_pca, fit_standardizer, PcaModel, Standardizer, MIN_STD};
pub use pool::{average_pool, PoolingSpec};
pub use tsne::{tsne_embed, TsneConfig, TsneOutput};

/// `n_samples × n_features`.
pub type FeatureMatrix = Array2<f64>;

/// The PCA component counts searched by the sweep.
pub const PCA_GRID: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];

/// `(kernel, stride)` pairs searched by the sweep, for both 2-D and 3-D pooling.
pub const POOL_GRID: [(usize, usize); 5] = [(2, 1), (2, 2), (3, 1), (3, 2), (4, 1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReducerSpec {
    Identity,
    Pool(PoolingSpec),
    Pca { n_components: usize },
    Tsne(TsneConfig),
}

impl ReducerSpec {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, ReducerSpec::Tsne(_))
    }

    /// Same reducer with its seed replaced (no-op for deterministic reducers).
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ReducerSpec::Tsne(cfg) => ReducerSpec::Tsne(TsneConfig { seed, ..*cfg }),
            other => other.clone(),
        }
    }
}

impl fmt::Display for ReducerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReducerSpec::Identity => f.write_str("Baseline"),
            ReducerSpec::Pool(p) => f.write_str(&p.label()),
            ReducerSpec::Pca { n_components } => write!(f, "PCA({n_components})"),
            ReducerSpec::Tsne(cfg) if cfg.n_components == 2 => f.write_str("t-SNE"),
            ReducerSpec::Tsne(cfg) => write!(f, "t-SNE({})", cfg.n_components),
        }
    }
}

/// C-order flattening.
pub fn flatten(t: &EmbeddingTensor) -> Vec<f64> {
    t.values().to_vec()
}

/// Stack flattened tensors as the rows of a matrix.
pub fn stack_flat(tensors: &[EmbeddingTensor]) -> Result<FeatureMatrix> {
    let Some(first) = tensors.first() else {
        return Ok(Array2::zeros((0, 0)));
    };
    let shape = first.shape();
    let width = first.len();
    let mut data = Vec::with_capacity(width * tensors.len());
    for t in tensors {
        if t.shape() != shape {
            return Err(OodError::ShapeMismatch {
                expected: shape.to_vec(),
                found: t.shape().to_vec(),
            });
        }
        data.extend_from_slice(t.values());
    }
    Ok(Array2::from_shape_vec((tensors.len(), width), data).expect("uniform widths"))
}

#[derive(Debug, Clone)]
pub enum FittedKind {
    Identity,
    Pool(PoolingSpec),
    Pca(PcaModel),
    /// No out-of-sample map exists; the embedding was computed jointly.
    Tsne {
        config: TsneConfig,
        kl_after_exaggeration: f64,
        kl_final: f64,
    },
}

#[derive(Debug, Clone)]
pub struct FittedReducer {
    pub input_shape: [usize; 4],
    pub kind: FittedKind,
}

impl FittedReducer {
    /// Map new tensors through the reducer. Fails for t-SNE.
    pub fn transform(&self, tensors: &[EmbeddingTensor]) -> Result<FeatureMatrix> {
        if let Some(t) = tensors.iter().find(|t| t.shape() != self.input_shape) {
            return Err(OodError::ShapeMismatch {
                expected: self.input_shape.to_vec(),
                found: t.shape().to_vec(),
            });
        }
        match &self.kind {
            FittedKind::Identity => stack_flat(tensors),
            FittedKind::Pool(spec) => pool_all(tensors, spec),
            FittedKind::Pca(model) => model.apply(stack_flat(tensors)?.view()),
            FittedKind::Tsne { .. } => Err(OodError::Config(
                "t-SNE has no out-of-sample transform; embed all samples jointly".into(),
            )),
        }
    }

    /// Feature count after reduction.
    pub fn output_dim(&self) -> Result<usize> {
        Ok(match &self.kind {
            FittedKind::Identity => self.input_shape.iter().product(),
            FittedKind::Pool(spec) => spec.output_shape(self.input_shape)?.iter().product(),
            FittedKind::Pca(model) => model.n_components(),
            FittedKind::Tsne { config, .. } => config.n_components,
        })
    }

    pub fn spec(&self) -> ReducerSpec {
        match &self.kind {
            FittedKind::Identity => ReducerSpec::Identity,
            FittedKind::Pool(p) => ReducerSpec::Pool(*p),
            FittedKind::Pca(m) => ReducerSpec::Pca {
                n_components: m.n_components(),
            },
            FittedKind::Tsne { config, .. } => ReducerSpec::Tsne(*config),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ReducerMeta {
    format_version: u32,
    input_shape: [usize; 4],
    spec: ReducerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kl_after_exaggeration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kl_final: Option<f64>,
}

impl FittedReducer {
    /// Write `reducer.json` (and `pca/` for PCA) under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| OodError::io(dir, e))?;
        let (kl_after_exaggeration, kl_final) = match &self.kind {
            FittedKind::Tsne {
                kl_after_exaggeration,
                kl_final,
                ..
            } => (Some(*kl_after_exaggeration), Some(*kl_final)),
            _ => (None, None),
        };
        if let FittedKind::Pca(model) = &self.kind {
            model.save(&dir.join("pca"))?;
        }
        let meta = ReducerMeta {
            format_version: 1,
            input_shape: self.input_shape,
            spec: self.spec(),
            kl_after_exaggeration,
            kl_final,
        };
        write_json(&dir.join("reducer.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ReducerMeta = read_json(&dir.join("reducer.json"))?;
        let kind = match meta.spec {
            ReducerSpec::Identity => FittedKind::Identity,
            ReducerSpec::Pool(p) => FittedKind::Pool(p),
            ReducerSpec::Pca { n_components } => {
                let model = PcaModel::load(&dir.join("pca"))?;
                let d: usize = meta.input_shape.iter().product();
                if model.n_components() != n_components || model.input_dim() != d {
                    return Err(OodError::ShapeMismatch {
                        expected: vec![n_components, d],
                        found: vec![model.n_components(), model.input_dim()],
                    });
                }
                FittedKind::Pca(model)
            }
            ReducerSpec::Tsne(config) => FittedKind::Tsne {
                config,
                kl_after_exaggeration: meta.kl_after_exaggeration.unwrap_or(f64::NAN),
                kl_final: meta.kl_final.unwrap_or(f64::NAN),
            },
        };
        Ok(Self {
            input_shape: meta.input_shape,
            kind,
        })
    }
}

fn pool_all(tensors: &[EmbeddingTensor], spec: &PoolingSpec) -> Result<FeatureMatrix> {
    let pooled = tensors
        .iter()
        .map(|t| average_pool(t, spec))
        .collect::<Result<Vec<_>>>()?;
    stack_flat(&pooled)
}

#[derive(Debug, Clone)]
pub struct ReducedData {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub reducer: FittedReducer,
}

/// Reduce both splits. PCA is fit on train only; t-SNE embeds train and test
/// together and splits the rows back apart.
pub fn reduce_dataset(
    train: &[EmbeddingTensor],
    test: &[EmbeddingTensor],
    spec: &ReducerSpec,
) -> Result<ReducedData> {
    let input_shape = train
        .first()
        .or(test.first())
        .map(|t| t.shape())
        .ok_or(OodError::SampleSize {
            required: 1,
            actual: 0,
        })?;
    if let Some(t) = train.iter().chain(test).find(|t| t.shape() != input_shape) {
        return Err(OodError::ShapeMismatch {
            expected: input_shape.to_vec(),
            found: t.shape().to_vec(),
        });
    }
    let fit_kind = |kind| FittedReducer { input_shape, kind };
    let mut reduced = match spec {
        ReducerSpec::Identity => Ok(ReducedData {
            train: stack_flat(train)?,
            test: stack_flat(test)?,
            reducer: fit_kind(FittedKind::Identity),
        }),
        ReducerSpec::Pool(p) => Ok(ReducedData {
            train: pool_all(train, p)?,
            test: pool_all(test, p)?,
            reducer: fit_kind(FittedKind::Pool(*p)),
        }),
        ReducerSpec::Pca { n_components } => {
            let train_flat = stack_flat(train)?;
            let model = fit_pca(train_flat.view(), *n_components)?;
            let train_red = model.apply(train_flat.view())?;
            let test_red = if test.is_empty() {
                Array2::zeros((0, model.n_components()))
            } else {
                model.apply(stack_flat(test)?.view())?
            };
            Ok(ReducedData {
                train: train_red,
                test: test_red,
                reducer: fit_kind(FittedKind::Pca(model)),
            })
        }
        ReducerSpec::Tsne(config) => {
            let joint = if test.is_empty() {
                stack_flat(train)?
            } else {
                concatenate(Axis(0), &[stack_flat(train)?.view(), stack_flat(test)?.view()])
                    .expect("same width")
            };
            let out = tsne_embed(joint.view(), config)?;
            let n_train = train.len();
            Ok(ReducedData {
                train: out.embedding.slice(s![..n_train, ..]).to_owned(),
                test: out.embedding.slice(s![n_train.., ..]).to_owned(),
                reducer: fit_kind(FittedKind::Tsne {
                    config: *config,
                    kl_after_exaggeration: out.kl_after_exaggeration,
                    kl_final: out.kl_final,
                }),
            })
        }
    }?;
    if test.is_empty() {
        reduced.test = Array2::zeros((0, reduced.train.ncols()));
    }
    Ok(reduced)
}
