//! Synthetic embeddings with known ID/OOD structure.
//!
//! Latent points are drawn from `N(0, I)` (train, ID test) or `N(shift·u, I)`
//! (OOD test) and mapped into the ambient tensor space by a random linear map
//! with orthonormal columns, plus isotropic ambient noise.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::tensor_io::{write_array, write_labels, write_manifest, EmbeddingTensor, Label, LabelRow, LabelTable, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub latent_dim: usize,
    pub ambient_shape: [usize; 4],
    pub n_train: usize,
    pub n_id_test: usize,
    pub n_ood_test: usize,
    pub shift: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            ambient_shape: [16, 8, 4, 4],
            n_train: 300,
            n_id_test: 100,
            n_ood_test: 100,
            shift: 4.0,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn ambient_dim(&self) -> usize {
        self.ambient_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OodError::Config(m));
        if self.ambient_shape.contains(&0) {
            return bad(format!("ambient shape {:?} has a zero axis", self.ambient_shape));
        }
        if self.latent_dim == 0 || self.latent_dim > self.ambient_dim() {
            return bad(format!(
                "latent_dim {} must be in 1..={}",
                self.latent_dim,
                self.ambient_dim()
            ));
        }
        if self.n_train == 0 || self.n_id_test == 0 || self.n_ood_test == 0 {
            return bad("sample counts must be positive".into());
        }
        if !(self.shift >= 0.0 && self.shift.is_finite())
            || !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite())
        {
            return bad("shift and noise_sigma must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub train: Vec<EmbeddingTensor>,
    pub id_test: Vec<EmbeddingTensor>,
    pub ood_test: Vec<EmbeddingTensor>,
    pub labels: LabelTable,
}

impl SyntheticDataset {
    pub fn train_ids(&self) -> Vec<String> {
        (0..self.train.len()).map(|i| format!("train_{i:04}")).collect()
    }

    pub fn test_ids(&self) -> Vec<String> {
        self.labels.rows.iter().map(|r| r.sample_id.clone()).collect()
    }

    /// ID test tensors followed by OOD test tensors, matching `labels` order.
    pub fn test(&self) -> Vec<EmbeddingTensor> {
        self.id_test.iter().chain(&self.ood_test).cloned().collect()
    }

    pub fn test_labels(&self) -> Vec<Label> {
        self.labels.rows.iter().map(|r| r.label.expect("synthetic rows are labeled")).collect()
    }

    /// Write `embeddings/*.npy`, `manifest.csv` and `labels.csv` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let emb = dir.join("embeddings");
        fs::create_dir_all(&emb).map_err(|e| OodError::io(&emb, e))?;
        let mut rows = Vec::new();
        let train = self.train_ids().into_iter().zip(&self.train).map(|(id, t)| (id, t, Split::Train));
        let test_tensors = self.test();
        let test = self
            .test_ids()
            .into_iter()
            .zip(test_tensors.iter())
            .map(|(id, t)| (id, t, Split::Test));
        for (id, tensor, split) in train.chain(test) {
            let rel = format!("embeddings/{id}.npy");
            write_array(tensor, &dir.join(&rel))?;
            rows.push((id, rel, split));
        }
        write_manifest(&dir.join("manifest.csv"), &rows)?;
        write_labels(&dir.join("labels.csv"), &self.labels)
    }
}

/// Independent sub-streams of one seed.
#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Embedding = 1,
    Direction = 2,
    TrainLatent = 3,
    IdLatent = 4,
    OodLatent = 5,
    TrainNoise = 6,
    IdNoise = 7,
    OodNoise = 8,
}

fn rng_for(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// `rows × cols` matrix with orthonormal columns: modified Gram–Schmidt
/// (two passes) on a Gaussian matrix.
fn orthonormal_columns(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
    let mut q = Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal));
    for j in 0..cols {
        for _ in 0..2 {
            for k in 0..j {
                let c = q.column(k).dot(&q.column(j));
                let qk = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-c, &qk);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

fn sample_split(
    count: usize,
    center: &Array1<f64>,
    basis: &Array2<f64>,
    spec: &SyntheticSpec,
    latent_stream: Stream,
    noise_stream: Stream,
) -> Vec<EmbeddingTensor> {
    let mut latent_rng = rng_for(spec.seed, latent_stream);
    let mut noise_rng = rng_for(spec.seed, noise_stream);
    let k = spec.latent_dim;
    (0..count)
        .map(|_| {
            let z = Array1::from_shape_fn(k, |i| center[i] + latent_rng.sample::<f64, _>(StandardNormal));
            let mut x = basis.dot(&z);
            if spec.noise_sigma > 0.0 {
                x.mapv_inplace(|v| v + spec.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal));
            }
            EmbeddingTensor::new(spec.ambient_shape, x.to_vec()).expect("finite by construction")
        })
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let k = spec.latent_dim;
    let basis = orthonormal_columns(spec.ambient_dim(), k, &mut rng_for(spec.seed, Stream::Embedding));
    let direction = {
        let mut rng = rng_for(spec.seed, Stream::Direction);
        let u = Array1::from_shape_fn(k, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = u.dot(&u).sqrt();
        u / norm
    };
    let origin = Array1::zeros(k);
    let shifted = &direction * spec.shift;

    let train = sample_split(spec.n_train, &origin, &basis, spec, Stream::TrainLatent, Stream::TrainNoise);
    let id_test = sample_split(spec.n_id_test, &origin, &basis, spec, Stream::IdLatent, Stream::IdNoise);
    let ood_test = sample_split(spec.n_ood_test, &shifted, &basis, spec, Stream::OodLatent, Stream::OodNoise);

    let rows = (0..spec.n_id_test)
        .map(|i| (format!("id_{i:04}"), Label::Id))
        .chain((0..spec.n_ood_test).map(|i| (format!("ood_{i:04}"), Label::Ood)))
        .map(|(sample_id, label)| LabelRow {
            sample_id,
            dsc: None,
            label: Some(label),
        })
        .collect();
    Ok(SyntheticDataset {
        train,
        id_test,
        ood_test,
        labels: LabelTable::new(rows)?,
    })
}

/// AUROC of two unit-variance Gaussians whose means differ by `shift`:
/// `Φ(shift / √2)`.
pub fn oracle_auroc_one_dim(shift: f64) -> f64 {
    0.5 * libm::erfc(-shift / 2.0)
}
