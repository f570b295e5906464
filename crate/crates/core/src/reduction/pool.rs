use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::tensor_io::EmbeddingTensor;

/// Average pooling over `(H, W)` (dims = 2) or `(D, H, W)` (dims = 3) with
/// square kernel `kernel` and stride `stride`, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingSpec {
    pub dims: u8,
    pub kernel: usize,
    pub stride: usize,
}

impl PoolingSpec {
    pub fn new(dims: u8, kernel: usize, stride: usize) -> Result<Self> {
        let spec = Self {
            dims,
            kernel,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !matches!(self.dims, 2 | 3) {
            return Err(OodError::Config(format!(
                "pooling dims must be 2 or 3, got {}",
                self.dims
            )));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(OodError::Config("pooling kernel and stride must be >= 1".into()));
        }
        Ok(())
    }

    fn out_len(&self, axis: &'static str, len: usize) -> Result<usize> {
        if len < self.kernel {
            return Err(OodError::KernelTooLarge {
                axis,
                length: len,
                kernel: self.kernel,
            });
        }
        Ok((len - self.kernel) / self.stride + 1)
    }

    /// Shape after pooling an input of shape `[C, D, H, W]`.
    pub fn output_shape(&self, shape: [usize; 4]) -> Result<[usize; 4]> {
        self.validate()?;
        let [c, d, h, w] = shape;
        let d_out = if self.dims == 3 { self.out_len("D", d)? } else { d };
        Ok([c, d_out, self.out_len("H", h)?, self.out_len("W", w)?])
    }

    pub fn label(&self) -> String {
        format!("AveragePool{}D({}, {})", self.dims, self.kernel, self.stride)
    }
}

pub fn average_pool(t: &EmbeddingTensor, spec: &PoolingSpec) -> Result<EmbeddingTensor> {
    let out_shape = spec.output_shape(t.shape())?;
    let [c, d_out, h_out, w_out] = out_shape;
    let input = t.view();
    let (j, k) = (spec.kernel, spec.stride);
    // dims = 2 keeps D untouched: a depth window of 1 at stride 1
    let (dj, dk) = if spec.dims == 3 { (j, k) } else { (1, 1) };
    let norm = 1.0 / (dj * j * j) as f64;

    let mut values = Vec::with_capacity(c * d_out * h_out * w_out);
    for ci in 0..c {
        for od in 0..d_out {
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let mut acc = 0.0;
                    for di in od * dk..od * dk + dj {
                        for hi in oh * k..oh * k + j {
                            for wi in ow * k..ow * k + j {
                                acc += input[[ci, di, hi, wi]];
                            }
                        }
                    }
                    values.push(acc * norm);
                }
            }
        }
    }
    EmbeddingTensor::new(out_shape, values)
}
