//! Exact (O(N²)) t-SNE.
//!
//! Gaussian input affinities with per-point bandwidths found by bisection on
//! the entropy, Student-t output affinities, and gradient descent with
//! momentum and per-parameter gains.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};

const ENTROPY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 50;
const MOMENTUM_SWITCH_ITER: usize = 250;
const INITIAL_MOMENTUM: f64 = 0.5;
const FINAL_MOMENTUM: f64 = 0.8;
const MIN_GAIN: f64 = 0.01;
const INIT_STD: f64 = 1e-4;
const MIN_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub n_components: usize,
    pub perplexity: f64,
    pub n_iter: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            n_components: 2,
            perplexity: 30.0,
            n_iter: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        let bad = |m: String| Err(OodError::Config(m));
        if n_samples < 4 {
            return bad(format!("t-SNE needs at least 4 samples, got {n_samples}"));
        }
        if self.n_components == 0 || self.n_iter == 0 {
            return bad("t-SNE n_components and n_iter must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration >= 1.0) {
            return bad("t-SNE needs learning_rate > 0 and early_exaggeration >= 1".into());
        }
        let limit = (n_samples as f64 - 1.0) / 3.0;
        if !(self.perplexity > 0.0) || self.perplexity >= limit {
            return bad(format!(
                "perplexity {} infeasible for {n_samples} samples (must be in (0, {limit:.3}))",
                self.perplexity
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TsneOutput {
    pub embedding: Array2<f64>,
    /// KL(P‖Q) with the un-exaggerated P when exaggeration ends.
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
}

fn squared_distances(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.nrows();
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
    let gram = x.dot(&x.t());
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Conditional affinities `p_{j|i}` whose entropy matches `ln(perplexity)`.
fn conditional_affinities(dist: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = dist.nrows();
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    let mut row = vec![0.0; n];
    for i in 0..n {
        // shift by the nearest neighbor distance; entropy is unchanged
        let d_min = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist[[i, j]])
            .fold(f64::INFINITY, f64::min);
        let mut beta = 1.0;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..MAX_BISECTION_STEPS {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] = if j == i {
                    0.0
                } else {
                    let shifted = dist[[i, j]] - d_min;
                    let v = (-shifted * beta).exp();
                    weighted += shifted * v;
                    v
                };
                sum += row[j];
            }
            let entropy = sum.ln() + beta * weighted / sum;
            let diff = entropy - target;
            if diff.abs() <= ENTROPY_TOLERANCE {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_infinite() { beta * 2.0 } else { 0.5 * (beta + hi) };
            } else {
                hi = beta;
                beta = if lo.is_infinite() { beta / 2.0 } else { 0.5 * (beta + lo) };
            }
        }
        let sum: f64 = row.iter().sum();
        for j in 0..n {
            p[[i, j]] = row[j] / sum;
        }
    }
    p
}

fn joint_affinities(x: ArrayView2<'_, f64>, perplexity: f64) -> Array2<f64> {
    let n = x.nrows();
    let cond = conditional_affinities(&squared_distances(x), perplexity);
    let mut p = Array2::zeros((n, n));
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[[i, j]] = ((cond[[i, j]] + cond[[j, i]]) / denom).max(MIN_PROBABILITY);
            }
        }
    }
    p
}

/// Student-t kernel weights `(1 + ‖yᵢ − yⱼ‖²)⁻¹` into the upper triangle of
/// the row-major `n × n` buffer `w`, and their sum over all ordered pairs.
fn student_weights(y: &[f64], dims: usize, w: &mut [f64]) -> f64 {
    let n = y.len() / dims;
    let mut total = 0.0;
    for i in 0..n {
        let yi = &y[i * dims..(i + 1) * dims];
        for j in i + 1..n {
            let yj = &y[j * dims..(j + 1) * dims];
            let d2: f64 = yi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = 1.0 / (1.0 + d2);
            w[i * n + j] = v;
            total += 2.0 * v;
        }
    }
    total
}

fn kl_divergence(p: &[f64], w: &[f64], n: usize, w_sum: f64) -> f64 {
    let mut kl = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let q = (w[i * n + j] / w_sum).max(MIN_PROBABILITY);
            let pij = p[i * n + j];
            kl += pij * (pij / q).ln();
        }
    }
    // both triangles contribute equally
    2.0 * kl
}

/// Embed the rows of `x` into `config.n_components` dimensions.
pub fn tsne_embed(x: ArrayView2<'_, f64>, config: &TsneConfig) -> Result<TsneOutput> {
    let n = x.nrows();
    config.validate(n)?;
    let dims = config.n_components;
    let p = joint_affinities(x, config.perplexity);

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut y = Array2::from_shape_fn((n, dims), |_| INIT_STD * rng.sample::<f64, _>(StandardNormal));
    let mut update = Array2::<f64>::zeros((n, dims));
    let mut gains = Array2::<f64>::ones((n, dims));
    let mut grad = Array2::<f64>::zeros((n, dims));
    let mut w = Array2::<f64>::zeros((n, n));

    let p = p.as_slice().expect("standard layout");
    let y_buf = y.as_slice_mut().expect("standard layout");
    let update = update.as_slice_mut().expect("standard layout");
    let gains = gains.as_slice_mut().expect("standard layout");
    let grad = grad.as_slice_mut().expect("standard layout");
    let w = w.as_slice_mut().expect("standard layout");

    let exaggeration_end = config.exaggeration_iters.min(config.n_iter);
    let mut kl_after_exaggeration = None;
    for iter in 0..config.n_iter {
        if iter == exaggeration_end {
            let w_sum = student_weights(y_buf, dims, w);
            kl_after_exaggeration = Some(kl_divergence(p, w, n, w_sum));
        }
        let exaggeration = if iter < exaggeration_end { config.early_exaggeration } else { 1.0 };
        let momentum = if iter < MOMENTUM_SWITCH_ITER { INITIAL_MOMENTUM } else { FINAL_MOMENTUM };

        let w_sum = student_weights(y_buf, dims, w);
        grad.fill(0.0);
        let inv_sum = 1.0 / w_sum;
        for i in 0..n {
            let (p_row, w_row) = (&p[i * n..(i + 1) * n], &w[i * n..(i + 1) * n]);
            for j in i + 1..n {
                let wij = w_row[j];
                // P and W are symmetric, so each pair pushes i and j apart equally
                let coeff = 4.0 * (exaggeration * p_row[j] - wij * inv_sum) * wij;
                for k in 0..dims {
                    let f = coeff * (y_buf[i * dims + k] - y_buf[j * dims + k]);
                    grad[i * dims + k] += f;
                    grad[j * dims + k] -= f;
                }
            }
        }
        for ((g, u), gain) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut()) {
            // grow the gain when the gradient flips against the last step
            *gain = if (*u * *g) < 0.0 { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(MIN_GAIN);
            *u = momentum * *u - config.learning_rate * *gain * *g;
        }
        for (v, u) in y_buf.iter_mut().zip(update.iter()) {
            *v += u;
        }
    }

    let w_sum = student_weights(y_buf, dims, w);
    let kl_final = kl_divergence(p, w, n, w_sum);
    Ok(TsneOutput {
        embedding: y,
        kl_after_exaggeration: kl_after_exaggeration.unwrap_or(kl_final),
        kl_final,
    })
}
