use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{CommonArgs, ExperimentArgs};
use crate::error::{OodError, Result};
use crate::gaussian::EpsilonPolicy;
use crate::metrics::DEFAULT_TPR_TARGET;
use crate::reduction::{PoolingSpec, ReducerSpec, TsneConfig, PCA_GRID, POOL_GRID};
use crate::synthetic::SyntheticSpec;
use crate::tensor_io::DEFAULT_DSC_THRESHOLD;

/// Trials run for a stochastic reducer unless told otherwise.
pub const DEFAULT_STOCHASTIC_TRIALS: usize = 10;

/// Contents of a `--config` TOML file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub reducer: Option<ReducerSpec>,
    pub epsilon: Option<EpsilonPolicy>,
    pub tpr_target: Option<f64>,
    pub trials: Option<usize>,
    pub pseudo_inverse: Option<bool>,
    pub dsc_threshold: Option<f64>,
    pub synth: Option<SyntheticSpec>,
    pub sweep: Option<SweepGrid>,
}

impl FileConfig {
    /// Parse a TOML file. Relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| OodError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            OodError::Config(m) => OodError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.labels, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OodError::Config(e.to_string()))
    }
}

/// Which reducer families the sweep evaluates.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub baseline: bool,
    pub pool: bool,
    pub pca: bool,
    pub tsne: bool,
    /// `(kernel, stride)` pairs, each run as 2-D and 3-D pooling.
    pub pool_grid: Vec<(usize, usize)>,
    pub pca_grid: Vec<usize>,
    pub tsne_config: TsneConfig,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            baseline: false,
            pool: true,
            pca: true,
            tsne: true,
            pool_grid: POOL_GRID.to_vec(),
            pca_grid: PCA_GRID.to_vec(),
            tsne_config: TsneConfig::default(),
        }
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
    /// `Identity` when no reducer was given (see [`RunConfig::resolve`]).
    pub reducer: ReducerSpec,
    pub epsilon: EpsilonPolicy,
    pub tpr_target: f64,
    pub trials: usize,
    pub pseudo_inverse: bool,
    pub dsc_threshold: f64,
    /// t-SNE overrides from the command line.
    pub perplexity: Option<f64>,
    pub tsne_iters: Option<usize>,
}

impl RunConfig {
    /// Resolve settings for commands that run one reducer; the reducer is required.
    pub fn resolve(file: &FileConfig, common: &CommonArgs, args: &ExperimentArgs) -> Result<Self> {
        if args.reducer.is_none() && file.reducer.is_none() {
            return Err(OodError::Config(
                "no reducer given (use --reducer or `reducer` in the config file)".into(),
            ));
        }
        Self::resolve_partial(file, common, args)
    }

    /// Resolve settings without requiring a reducer.
    pub fn resolve_partial(file: &FileConfig, common: &CommonArgs, args: &ExperimentArgs) -> Result<Self> {
        let seed = common.seed.or(file.seed).unwrap_or(0);
        let mut reducer = match &args.reducer {
            Some(s) => parse_reducer(s)?,
            None => file.reducer.clone().unwrap_or(ReducerSpec::Identity),
        };
        if let ReducerSpec::Tsne(cfg) = &mut reducer {
            cfg.seed = seed;
            if let Some(p) = args.perplexity {
                cfg.perplexity = p;
            }
            if let Some(n) = args.tsne_iters {
                cfg.n_iter = n;
            }
        }
        if let ReducerSpec::Pool(p) = reducer {
            PoolingSpec::new(p.dims, p.kernel, p.stride)?;
        }
        let epsilon = match &args.epsilon {
            Some(s) => parse_epsilon(s)?,
            None => file.epsilon.unwrap_or_default(),
        };
        let tpr_target = args.tpr_target.or(file.tpr_target).unwrap_or(DEFAULT_TPR_TARGET);
        if !(tpr_target > 0.0 && tpr_target <= 1.0) {
            return Err(OodError::Config(format!("tpr_target {tpr_target} outside (0, 1]")));
        }
        let dsc_threshold = args
            .dsc_threshold
            .or(file.dsc_threshold)
            .unwrap_or(DEFAULT_DSC_THRESHOLD);
        if !(0.0..=1.0).contains(&dsc_threshold) {
            return Err(OodError::Config(format!("dsc_threshold {dsc_threshold} outside [0, 1]")));
        }
        let jobs = common.jobs.or(file.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(OodError::Config("jobs must be >= 1".into()));
        }
        let reducer_given = args.reducer.is_some() || file.reducer.is_some();
        let explicit_trials = args.trials.or(file.trials);
        let trials = match explicit_trials {
            Some(0) => return Err(OodError::Config("trials must be >= 1".into())),
            Some(t) if t > 1 && reducer_given && !reducer.is_stochastic() => {
                return Err(OodError::Config(format!(
                    "trials = {t} requested for deterministic reducer {reducer}; repetitions only apply to t-SNE"
                )))
            }
            Some(t) => t,
            None if reducer.is_stochastic() => DEFAULT_STOCHASTIC_TRIALS,
            // the sweep's t-SNE row falls back to this when no reducer is set
            None if !reducer_given => DEFAULT_STOCHASTIC_TRIALS,
            None => 1,
        };
        Ok(Self {
            manifest: args.manifest.clone().or(file.manifest.clone()),
            labels: args.labels.clone().or(file.labels.clone()),
            out: common.out.clone().or(file.out.clone()),
            seed,
            jobs,
            reducer,
            epsilon,
            tpr_target,
            trials,
            pseudo_inverse: args.pseudo_inverse || file.pseudo_inverse.unwrap_or(false),
            dsc_threshold,
            perplexity: args.perplexity,
            tsne_iters: args.tsne_iters,
        })
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| OodError::Config("no manifest given (use --manifest)".into()))
    }

    pub fn require_labels(&self) -> Result<&Path> {
        self.labels
            .as_deref()
            .ok_or_else(|| OodError::Config("no label file given (use --labels)".into()))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| OodError::Config("no output directory given (use --out)".into()))
    }

    pub fn pipeline_options(&self) -> crate::pipeline::PipelineOptions {
        crate::pipeline::PipelineOptions {
            epsilon: self.epsilon,
            tpr_target: self.tpr_target,
            pseudo_inverse: self.pseudo_inverse,
        }
    }
}

fn parse_num<T: std::str::FromStr>(what: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| OodError::Config(format!("cannot parse {what} from {s:?}")))
}

/// Parse `identity`, `pool2d:K,S`, `pool3d:K,S`, `pca:N` or `tsne[:N]`.
pub fn parse_reducer(s: &str) -> Result<ReducerSpec> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    match (name.to_ascii_lowercase().as_str(), arg) {
        ("identity" | "baseline", None) => Ok(ReducerSpec::Identity),
        ("pca", Some(n)) => Ok(ReducerSpec::Pca {
            n_components: parse_num("component count", n)?,
        }),
        (kind @ ("pool2d" | "pool3d"), Some(ks)) => {
            let (k, st) = ks
                .split_once(',')
                .ok_or_else(|| OodError::Config(format!("expected {kind}:KERNEL,STRIDE, got {s:?}")))?;
            let dims = if kind == "pool2d" { 2 } else { 3 };
            Ok(ReducerSpec::Pool(PoolingSpec::new(
                dims,
                parse_num("kernel", k)?,
                parse_num("stride", st)?,
            )?))
        }
        ("tsne", n) => Ok(ReducerSpec::Tsne(TsneConfig {
            n_components: match n {
                Some(n) => parse_num("component count", n)?,
                None => 2,
            },
            ..TsneConfig::default()
        })),
        _ => Err(OodError::Config(format!(
            "unknown reducer {s:?} (expected identity, pool2d:K,S, pool3d:K,S, pca:N or tsne[:N])"
        ))),
    }
}

/// Parse `none`, `abs:E` or `rel:R`.
pub fn parse_epsilon(s: &str) -> Result<EpsilonPolicy> {
    let policy = match s.split_once(':') {
        None if s == "none" => EpsilonPolicy::None,
        Some(("abs" | "absolute", v)) => EpsilonPolicy::Absolute(parse_num("epsilon", v)?),
        Some(("rel" | "relative", v)) => EpsilonPolicy::Relative(parse_num("epsilon", v)?),
        _ => {
            return Err(OodError::Config(format!(
                "unknown epsilon policy {s:?} (expected none, abs:E or rel:R)"
            )))
        }
    };
    match policy {
        EpsilonPolicy::Absolute(v) | EpsilonPolicy::Relative(v) if !(v >= 0.0 && v.is_finite()) => Err(
            OodError::Config(format!("epsilon must be finite and non-negative, got {v}")),
        ),
        p => Ok(p),
    }
}
