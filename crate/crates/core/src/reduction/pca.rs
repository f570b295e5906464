//! PCA on flattened, standardized embeddings.
//!
//! With far fewer samples than features (337 vs 98 304 for the canonical
//! embedding) the components come from the `n × n` Gram matrix of the
//! standardized data rather than the `d × d` covariance.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::gaussian::{read_json, write_json};
use crate::linalg;
use crate::tensor_io::npy;

/// Columns whose population std falls below this standardize to zero.
pub const MIN_STD: f64 = 1e-12;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn apply(&self, m: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if m.ncols() != self.mean.len() {
            return Err(OodError::Dimension {
                expected: self.mean.len(),
                found: m.ncols(),
            });
        }
        Ok((&m - &self.mean.view().insert_axis(Axis(0))) / self.std.view().insert_axis(Axis(0)))
    }
}

/// Per-column mean and population standard deviation.
pub fn fit_standardizer(train: ArrayView2<'_, f64>) -> Result<Standardizer> {
    let n = train.nrows();
    if n < 2 {
        return Err(OodError::SampleSize {
            required: 2,
            actual: n,
        });
    }
    let mean = linalg::column_means(train);
    let centered = &train - &mean.view().insert_axis(Axis(0));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n as f64;
    let std = var.mapv(|v| {
        let s = v.sqrt();
        if s < MIN_STD {
            1.0
        } else {
            s
        }
    });
    Ok(Standardizer { mean, std })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub standardizer: Standardizer,
    /// `n × d`, orthonormal rows.
    pub components: Array2<f64>,
    /// Sample variance (divisor `n_train − 1`) along each component.
    pub explained_variance: Array1<f64>,
}

#[derive(Serialize, Deserialize)]
struct PcaMeta {
    format_version: u32,
    n: usize,
    d: usize,
}

fn flip_sign(v: &mut Array1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Project `v` off every row already in `basis` (two passes) and normalize.
/// Returns `None` when nothing substantial is left.
fn orthonormalize_against(mut v: Array1<f64>, basis: &[Array1<f64>]) -> Option<Array1<f64>> {
    let norm0 = v.dot(&v).sqrt();
    if norm0 == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&v);
            v.scaled_add(-c, q);
        }
    }
    let norm = v.dot(&v).sqrt();
    (norm > 1e-6 * norm0).then(|| v / norm)
}

pub fn fit_pca(train: ArrayView2<'_, f64>, n_components: usize) -> Result<PcaModel> {
    let (n_train, d) = train.dim();
    if n_train < 2 {
        return Err(OodError::SampleSize {
            required: 2,
            actual: n_train,
        });
    }
    let bound = (n_train - 1).min(d);
    if n_components == 0 || n_components > bound {
        return Err(OodError::TooManyComponents {
            requested: n_components,
            bound,
        });
    }
    let standardizer = fit_standardizer(train)?;
    let z = standardizer.apply(train)?;
    let denom = (n_train - 1) as f64;

    // Candidate directions in feature space, paired with their eigenvalue
    // of ZᵀZ, in non-increasing order.
    let (eigvals, directions): (Array1<f64>, Vec<Array1<f64>>) = if n_train < d {
        let gram = z.dot(&z.t());
        let (vals, vecs) = linalg::symmetric_eigen(gram.view());
        let dirs = (0..n_components)
            .map(|i| z.t().dot(&vecs.column(i)))
            .collect();
        (vals, dirs)
    } else {
        let scatter = z.t().dot(&z);
        let (vals, vecs) = linalg::symmetric_eigen(scatter.view());
        let dirs = (0..n_components).map(|i| vecs.column(i).to_owned()).collect();
        (vals, dirs)
    };
    let tol = eigvals[0].max(0.0) * n_train.max(d) as f64 * f64::EPSILON;

    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(n_components);
    let mut variances = Vec::with_capacity(n_components);
    let mut rank_deficient = 0;
    for (i, dir) in directions.into_iter().enumerate() {
        let lambda = eigvals[i];
        let accepted = if lambda > tol {
            orthonormalize_against(dir, &basis)
        } else {
            None
        };
        match accepted {
            Some(mut v) => {
                flip_sign(&mut v);
                basis.push(v);
                variances.push(lambda / denom);
            }
            None => {
                rank_deficient += 1;
                // Deterministic completion from the standard basis.
                let mut k = 0;
                let v = loop {
                    let mut e = Array1::zeros(d);
                    e[k] = 1.0;
                    if let Some(v) = orthonormalize_against(e, &basis) {
                        break v;
                    }
                    k += 1;
                };
                let mut v = v;
                flip_sign(&mut v);
                basis.push(v);
                variances.push(0.0);
            }
        }
    }
    if rank_deficient > 0 {
        log::warn!(
            "PCA({n_components}) exceeds the numerical rank of the training data; \
             {rank_deficient} component(s) carry zero variance"
        );
    }

    let mut components = Array2::zeros((n_components, d));
    for (i, v) in basis.iter().enumerate() {
        components.row_mut(i).assign(v);
    }
    Ok(PcaModel {
        standardizer,
        components,
        explained_variance: Array1::from(variances),
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    /// Standardize with the training statistics, then project.
    pub fn apply(&self, m: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.standardizer.apply(m)?;
        Ok(z.dot(&self.components.t()))
    }

    /// Back-project component scores to the standardized feature space.
    pub fn reconstruct_standardized(&self, scores: ArrayView2<'_, f64>) -> Array2<f64> {
        scores.dot(&self.components)
    }

    /// Back-project and undo standardization.
    pub fn inverse_transform(&self, scores: ArrayView2<'_, f64>) -> Array2<f64> {
        let z = self.reconstruct_standardized(scores);
        &z * &self.standardizer.std.view().insert_axis(Axis(0))
            + self.standardizer.mean.view().insert_axis(Axis(0))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| OodError::io(dir, e))?;
        let (n, d) = self.components.dim();
        npy::write_npy(&dir.join("mean.npy"), &[d], self.standardizer.mean.as_slice().unwrap())?;
        npy::write_npy(&dir.join("std.npy"), &[d], self.standardizer.std.as_slice().unwrap())?;
        npy::write_npy(
            &dir.join("components.npy"),
            &[n, d],
            self.components.as_slice().unwrap(),
        )?;
        npy::write_npy(
            &dir.join("explained_variance.npy"),
            &[n],
            self.explained_variance.as_slice().unwrap(),
        )?;
        write_json(
            &dir.join("meta.json"),
            &PcaMeta {
                format_version: FORMAT_VERSION,
                n,
                d,
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: PcaMeta = read_json(&dir.join("meta.json"))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(OodError::Config(format!(
                "unsupported PCA model format version {}",
                meta.format_version
            )));
        }
        let load = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let arr = npy::read_npy(&dir.join(name))?;
            if arr.shape != shape {
                return Err(OodError::ShapeMismatch {
                    expected: shape.to_vec(),
                    found: arr.shape,
                });
            }
            Ok(arr.data)
        };
        let (n, d) = (meta.n, meta.d);
        Ok(Self {
            standardizer: Standardizer {
                mean: Array1::from(load("mean.npy", &[d])?),
                std: Array1::from(load("std.npy", &[d])?),
            },
            components: Array2::from_shape_vec((n, d), load("components.npy", &[n, d])?)
                .expect("checked shape"),
            explained_variance: Array1::from(load("explained_variance.npy", &[n])?),
        })
    }
}
