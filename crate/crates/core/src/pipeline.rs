//! One detection experiment: reduce, fit, score, evaluate.

use std::time::Instant;

use crate::error::{OodError, Result};
use crate::gaussian::{fit_gaussian, EpsilonPolicy, FittedGaussian, PseudoInverseGaussian};
use crate::metrics::{aggregate_trials, evaluate_at, scored, MetricsTriple, TrialSummary};
use crate::reduction::{reduce_dataset, ReducedData, ReducerSpec};
use crate::tensor_io::{EmbeddingTensor, Label};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub epsilon: EpsilonPolicy,
    pub tpr_target: f64,
    /// Score against the pseudo-inverse instead of a ridge-regularized inverse.
    pub pseudo_inverse: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            epsilon: EpsilonPolicy::default(),
            tpr_target: crate::metrics::DEFAULT_TPR_TARGET,
            pseudo_inverse: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub metrics: MetricsTriple,
    /// Seconds to invert the covariance (or build the pseudo-inverse).
    pub inversion_seconds: f64,
    pub test_distances: Vec<f64>,
    pub feature_dim: usize,
}

pub fn fit_distance_model(reduced: &ReducedData, options: &PipelineOptions) -> Result<(FittedGaussian, f64)> {
    if options.pseudo_inverse {
        let start = Instant::now();
        let model = PseudoInverseGaussian::fit(reduced.train.view())?;
        Ok((FittedGaussian::PseudoInverse(model), start.elapsed().as_secs_f64()))
    } else {
        let model = fit_gaussian(reduced.train.view(), options.epsilon)?;
        let (_, seconds) = model.invert_covariance_timed()?;
        Ok((FittedGaussian::Cholesky(model), seconds))
    }
}

pub fn run_experiment(
    train: &[EmbeddingTensor],
    test: &[EmbeddingTensor],
    test_labels: &[Label],
    spec: &ReducerSpec,
    options: &PipelineOptions,
) -> Result<ExperimentResult> {
    if test.len() != test_labels.len() {
        return Err(OodError::Dimension {
            expected: test.len(),
            found: test_labels.len(),
        });
    }
    let reduced = reduce_dataset(train, test, spec)?;
    let (model, inversion_seconds) = fit_distance_model(&reduced, options)?;
    let test_distances = model.as_model().mahalanobis_batch(reduced.test.view())?;
    let metrics = evaluate_at(&scored(&test_distances, test_labels), options.tpr_target)?;
    Ok(ExperimentResult {
        metrics,
        inversion_seconds,
        test_distances,
        feature_dim: reduced.train.ncols(),
    })
}

#[derive(Debug, Clone)]
pub struct TrialsResult {
    pub summary: TrialSummary,
    pub timing_mean: f64,
    pub timing_sd: f64,
}

/// Repeat a stochastic experiment with seeds `base_seed, base_seed + 1, …`.
pub fn run_trials(
    train: &[EmbeddingTensor],
    test: &[EmbeddingTensor],
    test_labels: &[Label],
    spec: &ReducerSpec,
    options: &PipelineOptions,
    trials: usize,
    base_seed: u64,
) -> Result<TrialsResult> {
    if trials == 0 {
        return Err(OodError::Config("trials must be >= 1".into()));
    }
    let mut triples = Vec::with_capacity(trials);
    let mut times = Vec::with_capacity(trials);
    for t in 0..trials {
        let seeded = spec.with_seed(base_seed.wrapping_add(t as u64));
        let r = run_experiment(train, test, test_labels, &seeded, options)?;
        triples.push(r.metrics);
        times.push(r.inversion_seconds);
    }
    let n = trials as f64;
    let timing_mean = times.iter().sum::<f64>() / n;
    let timing_sd = (times.iter().map(|t| (t - timing_mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(TrialsResult {
        summary: aggregate_trials(&triples)?,
        timing_mean,
        timing_sd,
    })
}
