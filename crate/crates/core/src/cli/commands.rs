use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{CommonArgs, FileConfig, RunConfig, ScoreSplit, SynthArgs};
use crate::error::{OodError, Result};
use crate::gaussian::{read_json, write_json, EpsilonPolicy, FittedGaussian};
use crate::metrics::{evaluate_at, MetricsTriple, ScoredSample, TrialSummary};
use crate::pipeline::{fit_distance_model, run_experiment, run_trials};
use crate::reduction::{reduce_dataset, FittedKind, FittedReducer, ReducerSpec};
use crate::synthetic::{generate, SyntheticSpec};
use crate::tensor_io::{load_manifest, read_labels, EmbeddingTensor, Label, LabelTable, Manifest, Split};

pub(crate) const FIT_REPORT: &str = "fit_report.json";
pub(crate) const EMBEDDING_CSV: &str = "tsne_embedding.csv";
const GAUSSIAN_DIR: &str = "gaussian";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| OodError::io(dir, e))
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> OodError {
    OodError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn parse_shape(s: &str) -> Result<[usize; 4]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| OodError::Config(format!("cannot parse shape {s:?} (expected C,D,H,W)")))?;
    parts
        .try_into()
        .map_err(|_| OodError::Config(format!("shape {s:?} must have four axes")))
}

pub fn synth(file: &FileConfig, common: &CommonArgs, args: &SynthArgs) -> Result<()> {
    let mut spec = file.synth.unwrap_or_default();
    if let Some(seed) = common.seed.or(file.seed) {
        spec.seed = seed;
    }
    if let Some(s) = &args.shape {
        spec.ambient_shape = parse_shape(s)?;
    }
    spec.latent_dim = args.latent_dim.unwrap_or(spec.latent_dim);
    spec.n_train = args.n_train.unwrap_or(spec.n_train);
    spec.n_id_test = args.n_id.unwrap_or(spec.n_id_test);
    spec.n_ood_test = args.n_ood.unwrap_or(spec.n_ood_test);
    spec.shift = args.shift.unwrap_or(spec.shift);
    spec.noise_sigma = args.noise.unwrap_or(spec.noise_sigma);
    let out = common
        .out
        .clone()
        .or(file.out.clone())
        .ok_or_else(|| OodError::Config("no output directory given (use --out)".into()))?;
    write_synthetic(&spec, &out)?;
    println!(
        "wrote {} train, {} ID test and {} OOD test samples of shape {:?} to {}",
        spec.n_train,
        spec.n_id_test,
        spec.n_ood_test,
        spec.ambient_shape,
        out.display()
    );
    Ok(())
}

/// Generate `spec` and write it, with the spec itself as `synth.json`.
pub fn write_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    let data = generate(spec)?;
    create_dir(out)?;
    data.write_to(out)?;
    write_json(&out.join("synth.json"), spec)
}

/// Resolve every row to a label: the explicit label when present, else
/// `dsc >= threshold` means ID.
pub fn resolve_labels(table: &LabelTable, dsc_threshold: f64) -> HashMap<String, Label> {
    table
        .rows
        .iter()
        .map(|r| {
            let label = r.label.unwrap_or(match r.dsc {
                Some(d) if d >= dsc_threshold => Label::Id,
                _ => Label::Ood,
            });
            (r.sample_id.clone(), label)
        })
        .collect()
}

pub(crate) fn labels_for(ids: &[String], labels: &HashMap<String, Label>) -> Result<Vec<Label>> {
    ids.iter()
        .map(|id| labels.get(id).copied().ok_or_else(|| OodError::MissingLabel(id.clone())))
        .collect()
}

/// Train tensors, test tensors, test ids and test labels for a run.
pub(crate) struct ExperimentData {
    pub train: Vec<EmbeddingTensor>,
    pub test: Vec<EmbeddingTensor>,
    pub test_ids: Vec<String>,
    pub test_labels: Vec<Label>,
}

pub(crate) fn load_experiment(cfg: &RunConfig) -> Result<ExperimentData> {
    let manifest = load_manifest(cfg.require_manifest()?)?;
    let labels = resolve_labels(&read_labels(cfg.require_labels()?)?, cfg.dsc_threshold);
    let test_ids = manifest.ids(Split::Test);
    let test_labels = labels_for(&test_ids, &labels)?;
    Ok(ExperimentData {
        train: manifest.tensors(Split::Train),
        test: manifest.tensors(Split::Test),
        test_ids,
        test_labels,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub reducer: String,
    pub reducer_spec: ReducerSpec,
    pub input_dim: usize,
    pub feature_dim: usize,
    pub n_train: usize,
    pub model: String,
    pub epsilon_policy: EpsilonPolicy,
    /// Ridge actually added to the covariance diagonal.
    pub epsilon: Option<f64>,
    /// Rank of the pseudo-inverse model.
    pub rank: Option<usize>,
    pub inversion_seconds: f64,
    pub manifest: PathBuf,
    pub seed: u64,
    pub kl_after_exaggeration: Option<f64>,
    pub kl_final: Option<f64>,
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let out = cfg.require_out()?;
    let manifest_path = cfg.require_manifest()?;
    let manifest = load_manifest(manifest_path)?;
    let train = manifest.tensors(Split::Train);
    // t-SNE has no out-of-sample map, so every sample is embedded now
    let test = if cfg.reducer.is_stochastic() {
        manifest.tensors(Split::Test)
    } else {
        Vec::new()
    };
    let reduced = reduce_dataset(&train, &test, &cfg.reducer)?;
    let (model, inversion_seconds) = fit_distance_model(&reduced, &cfg.pipeline_options())?;

    create_dir(out)?;
    reduced.reducer.save(out)?;
    model.save(&out.join(GAUSSIAN_DIR))?;
    if cfg.reducer.is_stochastic() {
        let ids: Vec<String> = manifest.ids(Split::Train).into_iter().chain(manifest.ids(Split::Test)).collect();
        let splits: Vec<Split> = std::iter::repeat_n(Split::Train, train.len())
            .chain(std::iter::repeat_n(Split::Test, test.len()))
            .collect();
        let rows = ndarray::concatenate(ndarray::Axis(0), &[reduced.train.view(), reduced.test.view()])
            .expect("same width");
        write_embedding(&out.join(EMBEDDING_CSV), &ids, &splits, &rows)?;
    }
    let (kl_after_exaggeration, kl_final) = match &reduced.reducer.kind {
        FittedKind::Tsne {
            kl_after_exaggeration,
            kl_final,
            ..
        } => (Some(*kl_after_exaggeration), Some(*kl_final)),
        _ => (None, None),
    };
    let (model_kind, epsilon, rank) = match &model {
        FittedGaussian::Cholesky(g) => ("cholesky", Some(g.epsilon()), None),
        FittedGaussian::PseudoInverse(p) => ("pseudo_inverse", None, Some(p.rank())),
    };
    let report = FitReport {
        reducer: cfg.reducer.to_string(),
        reducer_spec: cfg.reducer.clone(),
        input_dim: manifest.shape.iter().product(),
        feature_dim: reduced.train.ncols(),
        n_train: train.len(),
        model: model_kind.into(),
        epsilon_policy: cfg.epsilon,
        epsilon,
        rank,
        inversion_seconds,
        manifest: fs::canonicalize(manifest_path).unwrap_or_else(|_| manifest_path.to_path_buf()),
        seed: cfg.seed,
        kl_after_exaggeration,
        kl_final,
    };
    write_json(&out.join(FIT_REPORT), &report)?;
    println!(
        "{}: d {} -> {}, n_train {}, {} model, inversion {:.4} s; model written to {}",
        report.reducer,
        report.input_dim,
        report.feature_dim,
        report.n_train,
        report.model,
        report.inversion_seconds,
        out.display()
    );
    Ok(())
}

pub(crate) fn write_embedding(path: &Path, ids: &[String], splits: &[Split], rows: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["sample_id".to_string(), "split".to_string()];
    header.extend((1..=rows.ncols()).map(|k| format!("comp{k}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for ((id, split), row) in ids.iter().zip(splits).zip(rows.rows()) {
        let mut rec = vec![id.clone(), split.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| OodError::io(path, e))
}

/// Rows of a stored t-SNE embedding: `(sample_id, split, coordinates)`.
pub(crate) fn read_embedding(path: &Path) -> Result<Vec<(String, Split, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let split: Split = rec.get(1).unwrap_or("").parse().map_err(|e| csv_err(path, e))?;
        let coords = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|e| csv_err(path, e)))
            .collect::<Result<Vec<_>>>()?;
        out.push((rec[0].to_string(), split, coords));
    }
    Ok(out)
}

/// A fitted model directory.
pub(crate) struct ModelDir {
    pub reducer: FittedReducer,
    pub gaussian: FittedGaussian,
    pub report: FitReport,
    pub dir: PathBuf,
}

impl ModelDir {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            reducer: FittedReducer::load(dir)?,
            gaussian: FittedGaussian::load(&dir.join(GAUSSIAN_DIR))?,
            report: read_json(&dir.join(FIT_REPORT))?,
            dir: dir.to_path_buf(),
        })
    }

    /// Features of the manifest samples in `splits`, in manifest order (or
    /// embedding order for t-SNE).
    pub fn features(
        &self,
        manifest: Option<&Path>,
        keep: impl Fn(Split) -> bool,
    ) -> Result<(Vec<String>, Vec<Split>, Array2<f64>)> {
        if let FittedKind::Tsne { .. } = self.reducer.kind {
            let rows: Vec<_> = read_embedding(&self.dir.join(EMBEDDING_CSV))?
                .into_iter()
                .filter(|(_, s, _)| keep(*s))
                .collect();
            let width = self.reducer.output_dim()?;
            let mut m = Array2::zeros((rows.len(), width));
            for (i, (_, _, c)) in rows.iter().enumerate() {
                if c.len() != width {
                    return Err(OodError::Dimension {
                        expected: width,
                        found: c.len(),
                    });
                }
                m.row_mut(i).assign(&ndarray::ArrayView1::from(c.as_slice()));
            }
            let ids = rows.iter().map(|r| r.0.clone()).collect();
            let splits = rows.iter().map(|r| r.1).collect();
            return Ok((ids, splits, m));
        }
        let manifest = load_manifest(manifest.unwrap_or(&self.report.manifest))?;
        let (ids, splits, tensors) = select(&manifest, keep);
        Ok((ids, splits, self.reducer.transform(&tensors)?))
    }
}

fn select(manifest: &Manifest, keep: impl Fn(Split) -> bool) -> (Vec<String>, Vec<Split>, Vec<EmbeddingTensor>) {
    let entries: Vec<_> = manifest.entries.iter().filter(|e| keep(e.split)).collect();
    (
        entries.iter().map(|e| e.sample_id.clone()).collect(),
        entries.iter().map(|e| e.split).collect(),
        entries.iter().map(|e| e.tensor.clone()).collect(),
    )
}

pub fn score(model_dir: &Path, manifest: Option<&Path>, split: ScoreSplit, out: Option<&Path>) -> Result<()> {
    let model = ModelDir::load(model_dir)?;
    let keep = |s: Split| match split {
        ScoreSplit::Train => s == Split::Train,
        ScoreSplit::Test => s == Split::Test,
        ScoreSplit::All => true,
    };
    let (ids, splits, features) = model.features(manifest, keep)?;
    let scores = model.gaussian.as_model().mahalanobis_batch(features.view())?;
    let out = out.unwrap_or(model_dir);
    create_dir(out)?;
    let path = out.join("scores.csv");
    write_scores(&path, &ids, &scores, &splits)?;
    println!("scored {} samples; wrote {}", ids.len(), path.display());
    Ok(())
}

pub(crate) fn write_scores(path: &Path, ids: &[String], scores: &[f64], splits: &[Split]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["sample_id", "score", "split"]).map_err(|e| csv_err(path, e))?;
    for ((id, s), split) in ids.iter().zip(scores).zip(splits) {
        w.write_record([id.as_str(), &s.to_string(), &split.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| OodError::io(path, e))
}

#[derive(Deserialize)]
struct ScoreRow {
    sample_id: String,
    score: f64,
    #[serde(default)]
    split: Option<String>,
}

/// Read `sample_id,score[,split]`; rows whose split is not `test` are skipped.
pub fn read_test_scores(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize::<ScoreRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if !row.score.is_finite() {
            return Err(csv_err(path, format!("non-finite score for {:?}", row.sample_id)));
        }
        if row.split.as_deref().is_none_or(|s| s.is_empty() || s == "test") {
            out.push((row.sample_id, row.score));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr75: f64,
    pub tpr_target: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl EvalReport {
    fn new(m: MetricsTriple, labels: &[Label]) -> Self {
        let n_ood = labels.iter().filter(|l| l.is_ood()).count();
        Self {
            auroc: m.auroc,
            aupr: m.aupr,
            fpr75: m.fpr_at_tpr,
            tpr_target: m.tpr_target,
            n_id: labels.len() - n_ood,
            n_ood,
        }
    }
}

fn emit_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join(name), value)?;
    println!("{}", serde_json::to_string_pretty(value).expect("plain data"));
    Ok(())
}

pub fn eval(scores_path: &Path, cfg: &RunConfig) -> Result<()> {
    let scores = read_test_scores(scores_path)?;
    let labels = resolve_labels(&read_labels(cfg.require_labels()?)?, cfg.dsc_threshold);
    let samples = scores
        .into_iter()
        .map(|(id, s)| {
            let label = *labels.get(&id).ok_or_else(|| OodError::MissingLabel(id.clone()))?;
            Ok(ScoredSample::new(id, s, label))
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics = evaluate_at(&samples, cfg.tpr_target)?;
    let label_list: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| scores_path.parent().unwrap_or(Path::new(".")).to_path_buf());
    emit_json(&out, "metrics.json", &EvalReport::new(metrics, &label_list))
}

#[derive(Debug, Serialize)]
struct TrialsReport {
    reducer: String,
    mean: EvalReport,
    sd: MetricsTriple,
    n_trials: usize,
    seeds: Vec<u64>,
    inversion_seconds_mean: f64,
    inversion_seconds_sd: f64,
}

pub fn run_single(cfg: &RunConfig) -> Result<()> {
    let out = cfg.require_out()?;
    let data = load_experiment(cfg)?;
    let options = cfg.pipeline_options();
    if cfg.trials == 1 {
        let r = run_experiment(&data.train, &data.test, &data.test_labels, &cfg.reducer, &options)?;
        create_dir(out)?;
        let splits = vec![Split::Test; data.test_ids.len()];
        write_scores(&out.join("scores.csv"), &data.test_ids, &r.test_distances, &splits)?;
        return emit_json(out, "metrics.json", &EvalReport::new(r.metrics, &data.test_labels));
    }
    let r = run_trials(
        &data.train,
        &data.test,
        &data.test_labels,
        &cfg.reducer,
        &options,
        cfg.trials,
        cfg.seed,
    )?;
    let TrialSummary { mean, sd, n_trials } = r.summary;
    let report = TrialsReport {
        reducer: cfg.reducer.to_string(),
        mean: EvalReport::new(mean, &data.test_labels),
        sd,
        n_trials,
        seeds: (0..n_trials as u64).map(|t| cfg.seed.wrapping_add(t)).collect(),
        inversion_seconds_mean: r.timing_mean,
        inversion_seconds_sd: r.timing_sd,
    };
    emit_json(out, "metrics.json", &report)
}
