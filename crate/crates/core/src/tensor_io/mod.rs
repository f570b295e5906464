//! Embedding tensors on disk, sample manifests, and DSC-derived labels.

pub mod npy;

mod labels;
mod manifest;

use std::path::Path;

use ndarray::ArrayView4;

use crate::error::{OodError, Result};

pub use labels::{label_from_dsc, read_labels, write_labels, Label, LabelRow, LabelTable, DEFAULT_DSC_THRESHOLD};
pub use manifest::{load_manifest, write_manifest, Manifest, ManifestEntry, Split};

/// One sample's bottleneck activation, `(C, D, H, W)` in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor {
    shape: [usize; 4],
    values: Vec<f64>,
}

impl EmbeddingTensor {
    pub fn new(shape: [usize; 4], values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(OodError::Config(format!(
                "tensor shape {shape:?} has a zero-length axis"
            )));
        }
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(OodError::ShapeMismatch {
                expected: shape.to_vec(),
                found: vec![values.len()],
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(OodError::NonFinite { index });
        }
        Ok(Self { shape, values })
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn view(&self) -> ArrayView4<'_, f64> {
        ArrayView4::from_shape(self.shape, &self.values).expect("shape invariant")
    }
}

/// Load a 4-axis float NPY file, widening to `f64`.
pub fn read_array(path: &Path) -> Result<EmbeddingTensor> {
    let arr = npy::read_npy(path)?;
    let shape: [usize; 4] = arr
        .shape
        .as_slice()
        .try_into()
        .map_err(|_| OodError::Rank {
            actual: arr.shape.len(),
        })?;
    EmbeddingTensor::new(shape, arr.data)
}

pub fn write_array(tensor: &EmbeddingTensor, path: &Path) -> Result<()> {
    npy::write_npy(path, &tensor.shape, &tensor.values)
}
