//! The reducer grid: every pooling, PCA and t-SNE configuration evaluated on
//! one dataset, written as CSV and Markdown tables.

use std::fs;

use rayon::prelude::*;

use super::commands::load_experiment;
use super::{RunConfig, SweepGrid};
use crate::error::{OodError, Result};
use crate::metrics::MetricsTriple;
use crate::pipeline::{run_experiment, run_trials, PipelineOptions, TrialsResult};
use crate::reduction::{PoolingSpec, ReducerSpec, TsneConfig};
use crate::tensor_io::{EmbeddingTensor, Label};

pub const SWEEP_COLUMNS: [&str; 5] = ["Experiment", "AUROC", "AUPR", "FPR75", "ComputationTime"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub name: String,
    pub spec: ReducerSpec,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub enum SweepOutcome {
    Single { metrics: MetricsTriple, seconds: f64 },
    Trials(TrialsResult),
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepFormat {
    /// Print the measured inversion time; `false` prints "-".
    pub timing: bool,
}

/// Rows in table order: baseline, 2-D pools, 3-D pools, PCA, t-SNE.
pub fn grid_rows(grid: &SweepGrid, tsne: TsneConfig, tsne_trials: usize) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut push = |spec: ReducerSpec, trials: usize| {
        let name = if trials > 1 {
            format!("{spec}, n={trials}")
        } else {
            spec.to_string()
        };
        rows.push(SweepRow { name, spec, trials });
    };
    if grid.baseline {
        push(ReducerSpec::Identity, 1);
    }
    if grid.pool {
        for dims in [2, 3] {
            for &(kernel, stride) in &grid.pool_grid {
                push(ReducerSpec::Pool(PoolingSpec::new(dims, kernel, stride)?), 1);
            }
        }
    }
    if grid.pca {
        for &n in &grid.pca_grid {
            push(ReducerSpec::Pca { n_components: n }, 1);
        }
    }
    if grid.tsne {
        push(ReducerSpec::Tsne(tsne), tsne_trials);
    }
    Ok(rows)
}

/// Evaluate every row on `jobs` threads. Results come back in row order and a
/// failing row does not stop the others.
pub fn run_sweep(
    train: &[EmbeddingTensor],
    test: &[EmbeddingTensor],
    labels: &[Label],
    rows: &[SweepRow],
    options: &PipelineOptions,
    base_seed: u64,
    jobs: usize,
) -> Result<Vec<SweepOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| OodError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let run_row = |row: &SweepRow| {
        log::info!("sweep row {}", row.name);
        let outcome = if row.spec.is_stochastic() {
            run_trials(train, test, labels, &row.spec, options, row.trials, base_seed).map(SweepOutcome::Trials)
        } else {
            run_experiment(train, test, labels, &row.spec, options).map(|r| SweepOutcome::Single {
                metrics: r.metrics,
                seconds: r.inversion_seconds,
            })
        };
        outcome.unwrap_or_else(|e| {
            log::warn!("sweep row {} failed: {e}", row.name);
            SweepOutcome::Failed(e.to_string())
        })
    };
    Ok(pool.install(|| rows.par_iter().map(run_row).collect()))
}

#[derive(Clone, Copy)]
enum Style {
    Csv,
    Markdown,
}

impl Style {
    fn decimals(self) -> usize {
        match self {
            Style::Csv => 4,
            Style::Markdown => 2,
        }
    }
}

fn cell(mean: f64, sd: Option<f64>, decimals: usize) -> String {
    match sd {
        Some(sd) => format!("{mean:.decimals$} (±{sd:.decimals$})"),
        None => format!("{mean:.decimals$}"),
    }
}

/// `(mean, sd)` of the three metrics, or `None` for a failed row.
fn metric_values(o: &SweepOutcome) -> Option<[(f64, Option<f64>); 3]> {
    match o {
        SweepOutcome::Single { metrics: m, .. } => Some([(m.auroc, None), (m.aupr, None), (m.fpr_at_tpr, None)]),
        SweepOutcome::Trials(t) => {
            let (m, s) = (t.summary.mean, t.summary.sd);
            Some([
                (m.auroc, Some(s.auroc)),
                (m.aupr, Some(s.aupr)),
                (m.fpr_at_tpr, Some(s.fpr_at_tpr)),
            ])
        }
        SweepOutcome::Failed(_) => None,
    }
}

fn mean_seconds(o: &SweepOutcome) -> Option<f64> {
    match o {
        SweepOutcome::Single { seconds, .. } => Some(*seconds),
        SweepOutcome::Trials(t) => Some(t.timing_mean),
        SweepOutcome::Failed(_) => None,
    }
}

fn time_cell(o: &SweepOutcome, format: SweepFormat) -> String {
    if !format.timing {
        return "-".into();
    }
    match o {
        SweepOutcome::Single { seconds, .. } => format!("{seconds:.4}"),
        SweepOutcome::Trials(t) => cell(t.timing_mean, Some(t.timing_sd), 4),
        SweepOutcome::Failed(_) => "-".into(),
    }
}

fn table_cells(rows: &[SweepRow], outcomes: &[SweepOutcome], format: SweepFormat, style: Style) -> Vec<[String; 5]> {
    let d = style.decimals();
    let rounded = |v: f64| format!("{v:.d$}").parse::<f64>().unwrap_or(v);
    // best per metric at display precision; FPR is lower-is-better
    let mut best: [Option<f64>; 3] = [None; 3];
    for vals in outcomes.iter().filter_map(metric_values) {
        for (k, (mean, _)) in vals.iter().enumerate() {
            let r = rounded(*mean);
            best[k] = Some(match best[k] {
                None => r,
                Some(b) if k == 2 => b.min(r),
                Some(b) => b.max(r),
            });
        }
    }
    // fastest row; times always show 4 decimals
    let time_key = |v: f64| format!("{v:.4}").parse::<f64>().unwrap_or(v);
    let best_time = outcomes
        .iter()
        .filter_map(mean_seconds)
        .map(time_key)
        .fold(None, |b: Option<f64>, t| Some(b.map_or(t, |b| b.min(t))));
    rows.iter()
        .zip(outcomes)
        .map(|(row, o)| {
            let mut time = time_cell(o, format);
            let fastest = mean_seconds(o).map(time_key) == best_time;
            if format.timing && fastest && matches!(style, Style::Markdown) {
                time = format!("**{time}**");
            }
            match (metric_values(o), o) {
                (Some(vals), _) => {
                    let m = vals.map(|(mean, sd)| (cell(mean, sd, d), rounded(mean)));
                    let mark = |k: usize| {
                        let (text, r) = &m[k];
                        if matches!(style, Style::Markdown) && Some(*r) == best[k] {
                            format!("**{text}**")
                        } else {
                            text.clone()
                        }
                    };
                    [row.name.clone(), mark(0), mark(1), mark(2), time]
                }
                (None, SweepOutcome::Failed(msg)) => [
                    row.name.clone(),
                    format!("ERROR: {msg}"),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                ],
                (None, _) => unreachable!("only failed rows lack metrics"),
            }
        })
        .collect()
}

/// Render the sweep as `(csv, markdown)`.
pub fn format_sweep(rows: &[SweepRow], outcomes: &[SweepOutcome], format: SweepFormat) -> (String, String) {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).expect("in-memory write");
    for r in table_cells(rows, outcomes, format, Style::Csv) {
        w.write_record(&r).expect("in-memory write");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 cells");

    let mut md = format!("| {} |\n", SWEEP_COLUMNS.join(" | "));
    md.push_str("|---|---:|---:|---:|---:|\n");
    for r in table_cells(rows, outcomes, format, Style::Markdown) {
        let escaped: Vec<String> = r.iter().map(|c| c.replace('|', "\\|")).collect();
        md.push_str(&format!("| {} |\n", escaped.join(" | ")));
    }
    (csv, md)
}

pub fn sweep_command(cfg: &RunConfig, grid: &SweepGrid, format: SweepFormat) -> Result<()> {
    let out = cfg.require_out()?;
    let data = load_experiment(cfg)?;
    let mut tsne = grid.tsne_config;
    if let ReducerSpec::Tsne(c) = cfg.reducer {
        tsne = c;
    }
    if let Some(p) = cfg.perplexity {
        tsne.perplexity = p;
    }
    if let Some(n) = cfg.tsne_iters {
        tsne.n_iter = n;
    }
    tsne.seed = cfg.seed;
    let rows = grid_rows(grid, tsne, cfg.trials)?;
    let outcomes = run_sweep(
        &data.train,
        &data.test,
        &data.test_labels,
        &rows,
        &cfg.pipeline_options(),
        cfg.seed,
        cfg.jobs,
    )?;
    let (csv, md) = format_sweep(&rows, &outcomes, format);
    fs::create_dir_all(out).map_err(|e| OodError::io(out, e))?;
    for (name, text) in [("sweep.csv", &csv), ("sweep.md", &md)] {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| OodError::io(&path, e))?;
    }
    print!("{md}");
    let failed = outcomes.iter().filter(|o| matches!(o, SweepOutcome::Failed(_))).count();
    if failed > 0 {
        eprintln!("{failed} of {} rows failed; see the ERROR cells", rows.len());
    }
    Ok(())
}
