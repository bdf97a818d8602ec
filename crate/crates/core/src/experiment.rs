//! Experiment driver: repeated generate-train-evaluate runs over a method
//! grid, parallel across repetitions, with stable CSV/JSON outputs.
//!
//! Seed policy: repetition `i` of a sweep uses `seed = base_seed + i` for
//! both graph generation and model initialization (separated into
//! independent streams internally), so any row can be reproduced in
//! isolation.

use rayon::prelude::*;
use serde::Serialize;

use crate::graph::TemporalGraph;
use crate::nn::{train_gcn, train_sgc, Alignment, PipelineSpec, TrainConfig, TrainReport};
use crate::numerics::SeededRng;
use crate::tsbm::{generate, GammaMode, TsbmConfig};
use crate::{Error, Result};

/// Stream tag for graph generation randomness (models use their own).
const GRAPH_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Sgc,
    Gcn,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Sgc => "sgc",
            ModelKind::Gcn => "gcn",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MethodSpec {
    pub model: ModelKind,
    pub pipeline: PipelineSpec,
}

impl MethodSpec {
    pub fn new(model: ModelKind, pipeline: PipelineSpec) -> Self {
        Self { model, pipeline }
    }

    pub fn label(&self) -> String {
        let p = &self.pipeline;
        match p.alignment {
            Alignment::None => format!("{}/{}", self.model.name(), p.scheme.name()),
            a => format!("{}/{}+{}", self.model.name(), p.scheme.name(), a.name()),
        }
    }

    fn run(&self, g: &TemporalGraph, cfg: &TrainConfig) -> Result<TrainReport> {
        match self.model {
            ModelKind::Sgc => train_sgc(g, &self.pipeline, cfg),
            ModelKind::Gcn => train_gcn(g, &self.pipeline, cfg),
        }
    }
}

/// One experiment outcome; the CSV schema mirrors these fields exactly.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub model: String,
    pub scheme: String,
    pub alignment: String,
    pub gamma_mode: String,
    pub seed: u64,
    pub test_acc: f64,
    pub train_acc: f64,
    pub wall_ms: f64,
}

/// Schema comment + column line; columns are frozen.
pub const CSV_HEADER: &str =
    "# chronopass results schema v1\nmodel,scheme,alignment,gamma_mode,seed,test_acc,train_acc,wall_ms";

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            r.model, r.scheme, r.alignment, r.gamma_mode, r.seed, r.test_acc, r.train_acc, r.wall_ms
        ));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct GridOutcome {
    pub rows: Vec<ResultRow>,
    /// Human-readable descriptions of failed runs (the grid keeps going).
    pub failures: Vec<String>,
}

impl GridOutcome {
    fn merge(&mut self, other: GridOutcome) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }
}

/// Runs every method on one already-built graph.
pub fn run_graph_methods(
    g: &TemporalGraph,
    gamma_tag: &str,
    methods: &[MethodSpec],
    train: &TrainConfig,
    seed: u64,
) -> GridOutcome {
    let mut out = GridOutcome::default();
    let cfg = TrainConfig { seed, ..*train };
    for method in methods {
        match method.run(g, &cfg) {
            Ok(report) => out.rows.push(ResultRow {
                model: report.model,
                scheme: report.scheme,
                alignment: report.alignment,
                gamma_mode: gamma_tag.to_string(),
                seed,
                test_acc: report.test_acc,
                train_acc: report.train_acc,
                wall_ms: report.wall_ms,
            }),
            Err(e) => out.failures.push(format!("seed {seed} {}: {e}", method.label())),
        }
    }
    out
}

fn run_one_rep(
    base: &TsbmConfig,
    methods: &[MethodSpec],
    train: &TrainConfig,
    seed: u64,
) -> GridOutcome {
    let mut rng = SeededRng::for_task(seed, GRAPH_STREAM);
    match generate(base, &mut rng) {
        Ok((g, _)) => run_graph_methods(&g, &base.gamma_mode.tag(), methods, train, seed),
        Err(e) => GridOutcome {
            rows: Vec::new(),
            failures: vec![format!("seed {seed} generate: {e}")],
        },
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        Ok(f())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// `repetitions` independent graphs (seeds `base_seed..base_seed+reps`),
/// every method trained on each; parallel over repetitions. Row order is
/// deterministic and independent of `jobs`.
pub fn run_tsbm_grid(
    base: &TsbmConfig,
    methods: &[MethodSpec],
    train: &TrainConfig,
    repetitions: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<GridOutcome> {
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    base.validate()?;
    let outcomes: Vec<GridOutcome> = with_pool(jobs, || {
        (0..repetitions as u64)
            .into_par_iter()
            .map(|i| run_one_rep(base, methods, train, base_seed + i))
            .collect()
    })?;
    let mut merged = GridOutcome::default();
    for o in outcomes {
        merged.merge(o);
    }
    Ok(merged)
}

/// The fixed-decay sweep: the same grid repeated at each `gamma`.
pub fn sweep_gamma(
    base: &TsbmConfig,
    gammas: &[f64],
    methods: &[MethodSpec],
    train: &TrainConfig,
    repetitions: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<GridOutcome> {
    if gammas.is_empty() {
        return Err(Error::Config("gamma sweep needs at least one value".into()));
    }
    let mut merged = GridOutcome::default();
    for &gamma in gammas {
        let cfg = TsbmConfig { gamma_mode: GammaMode::Fixed(gamma), ..*base };
        merged.merge(run_tsbm_grid(&cfg, methods, train, repetitions, base_seed, jobs)?);
    }
    Ok(merged)
}

/// Mean and standard deviation per method (and gamma mode).
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub model: String,
    pub scheme: String,
    pub alignment: String,
    pub gamma_mode: String,
    pub runs: usize,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub mean_train_acc: f64,
    pub mean_wall_ms: f64,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<MethodSummary> {
    let mut keys: Vec<(String, String, String, String)> = Vec::new();
    for r in rows {
        let key = (r.model.clone(), r.scheme.clone(), r.alignment.clone(), r.gamma_mode.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|key| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| {
                    (&r.model, &r.scheme, &r.alignment, &r.gamma_mode)
                        == (&key.0, &key.1, &key.2, &key.3)
                })
                .collect();
            let n = group.len();
            let mean = |f: fn(&ResultRow) -> f64| -> f64 {
                group.iter().map(|r| f(r)).sum::<f64>() / n as f64
            };
            let mean_test = mean(|r| r.test_acc);
            let var = if n > 1 {
                group.iter().map(|r| (r.test_acc - mean_test).powi(2)).sum::<f64>()
                    / (n - 1) as f64
            } else {
                0.0
            };
            MethodSummary {
                model: key.0,
                scheme: key.1,
                alignment: key.2,
                gamma_mode: key.3,
                runs: n,
                mean_test_acc: mean_test,
                std_test_acc: var.sqrt(),
                mean_train_acc: mean(|r| r.train_acc),
                mean_wall_ms: mean(|r| r.wall_ms),
            }
        })
        .collect()
}

/// Convenience lookup into a summary list.
pub fn summary_for<'a>(
    summaries: &'a [MethodSummary],
    model: &str,
    scheme: &str,
    alignment: &str,
) -> Option<&'a MethodSummary> {
    summaries
        .iter()
        .find(|s| s.model == model && s.scheme == scheme && s.alignment == alignment)
}
