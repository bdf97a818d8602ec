//! Command-line driver: graph generation, experiment grids, decay-factor
//! sweeps, and diagnostics dumps.
//!
//! Exit codes: 0 success, 1 at least one run failed, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chronopass::connectivity::estimate_connectivity;
use chronopass::diagnostics::{compare_to_oracle, invariance_gap};
use chronopass::experiment::{self, GridOutcome, MethodSpec, ModelKind};
use chronopass::graph::{CommunityIndex, TemporalGraph};
use chronopass::moment_align::{community_moments, jjnorm_transform, TestMomentTarget};
use chronopass::nn::{Alignment, PipelineSpec, TrainConfig};
use chronopass::numerics::SeededRng;
use chronopass::propagation::{propagate, rewrite, PmpBoundary, Scheme};
use chronopass::tsbm::{self, GammaMode, TsbmConfig, TsbmSidecar};
use chronopass::Mat;

#[derive(Parser)]
#[command(name = "chronopass", version, about = "Invariant message passing on chronologically split temporal graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic temporal graph plus its parameter sidecar.
    Generate(GenerateArgs),
    /// Train a method grid over repeated graphs and write CSV/summary.
    Run(RunArgs),
    /// Repeat the grid at several fixed decay factors.
    SweepGamma(SweepArgs),
    /// Dump connectivity / moment / invariance reports for a graph file.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// TSBM configuration JSON; flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    num_times: Option<usize>,
    #[arg(long)]
    num_labels: Option<usize>,
    /// Fixed decay factor (switches gamma mode to fixed).
    #[arg(long)]
    gamma: Option<f64>,
    /// Decay factor range "lo,hi" (switches gamma mode to uniform).
    #[arg(long, value_parser = parse_range)]
    gamma_range: Option<(f64, f64)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_boundary: Option<i64>,
    /// Output graph path; the parameter sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configure JSON; flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train on a previously generated graph file instead of fresh TSBM
    /// graphs (repetitions then vary only the model seed).
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Comma list of methods, e.g. "avg,mmp,pmp,pmp+pny,pmp+jjnorm".
    #[arg(long)]
    methods: Option<String>,
    /// Shorthand for a single method: scheme name.
    #[arg(long)]
    scheme: Option<String>,
    /// Shorthand for a single method: alignment name.
    #[arg(long)]
    alignment: Option<String>,
    #[arg(long)]
    pmp_boundary: Option<String>,
    /// Apply the recoloring only after the final hop (decoupled model).
    #[arg(long)]
    pny_final_only: bool,
    /// Fixed decay factor for the generated graphs.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-method summary JSON path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma list of fixed decay factors, e.g. "0.3,0.4,0.5".
    #[arg(long, required = true)]
    gammas: String,
    #[arg(long, default_value = "sgc")]
    model: String,
    #[arg(long, default_value = "avg,pmp")]
    methods: String,
    #[arg(long)]
    pmp_boundary: Option<String>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Graph JSON produced by `generate` (or hand-written in the same format).
    graph: PathBuf,
    /// Which report to write.
    #[arg(long, default_value = "all")]
    section: String,
    /// Parameter sidecar; enables the oracle comparison report.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value = "pmp")]
    scheme: String,
    #[arg(long)]
    pmp_boundary: Option<String>,
    /// Output directory for the JSON reports.
    #[arg(long, default_value = "diagnostics")]
    out: PathBuf,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected \"lo,hi\"".into());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn parse_boundary(s: &str) -> Result<PmpBoundary, String> {
    match s {
        "upper" => Ok(PmpBoundary::UpperOnly),
        "both" => Ok(PmpBoundary::BothBounds),
        other => Err(format!("unknown pmp boundary '{other}' (expected upper|both)")),
    }
}

fn parse_scheme(s: &str, boundary: PmpBoundary) -> Result<Scheme, String> {
    match s {
        "avg" => Ok(Scheme::Avg),
        "mmp" => Ok(Scheme::Mmp),
        "pmp" => Ok(Scheme::Pmp(boundary)),
        "genpmp" => Ok(Scheme::GenPmp),
        other => Err(format!("unknown scheme '{other}' (expected avg|mmp|pmp|genpmp)")),
    }
}

fn parse_alignment(s: &str) -> Result<Alignment, String> {
    match s {
        "none" => Ok(Alignment::None),
        "pny" => Ok(Alignment::Pny),
        "jjnorm" => Ok(Alignment::Jjnorm),
        other => Err(format!("unknown alignment '{other}' (expected none|pny|jjnorm)")),
    }
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    match s {
        "sgc" => Ok(ModelKind::Sgc),
        "gcn" => Ok(ModelKind::Gcn),
        other => Err(format!("unknown model '{other}' (expected sgc|gcn)")),
    }
}

/// "scheme" or "scheme+alignment", e.g. "pmp+jjnorm".
fn parse_method(
    s: &str,
    model: ModelKind,
    boundary: PmpBoundary,
    pny_final_only: bool,
) -> Result<MethodSpec, String> {
    let (scheme_str, align_str) = match s.split_once('+') {
        Some((a, b)) => (a, b),
        None => (s, "none"),
    };
    let pipeline = PipelineSpec {
        scheme: parse_scheme(scheme_str.trim(), boundary)?,
        alignment: parse_alignment(align_str.trim())?,
        pny_final_only,
        ..PipelineSpec::default()
    };
    Ok(MethodSpec::new(model, pipeline))
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(default)]
struct ExperimentConfig {
    tsbm: TsbmConfig,
    graph_file: Option<String>,
    model: String,
    methods: Vec<String>,
    pmp_boundary: String,
    pny_final_only: bool,
    train: TrainConfig,
    repetitions: usize,
    base_seed: u64,
    jobs: usize,
    out_csv: Option<String>,
    out_summary: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tsbm: TsbmConfig::default(),
            graph_file: None,
            model: "sgc".into(),
            methods: vec!["avg".into()],
            pmp_boundary: "upper".into(),
            pny_final_only: false,
            train: TrainConfig::default(),
            repetitions: 200,
            base_seed: 0,
            jobs: 0,
            out_csv: None,
            out_summary: None,
        }
    }
}

enum CliError {
    Config(String),
    RunFailures(usize),
}

impl From<chronopass::Error> for CliError {
    fn from(e: chronopass::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<String> for CliError {
    fn from(e: String) -> Self {
        CliError::Config(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::SweepGamma(args) => cmd_sweep(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::RunFailures(n)) => {
            eprintln!("error: {n} run(s) failed");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn sidecar_path(graph_path: &Path) -> PathBuf {
    let mut name = graph_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "graph".into());
    name.push_str(".params.json");
    graph_path.with_file_name(name)
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut cfg: TsbmConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => TsbmConfig::default(),
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(f) = args.feature_dim {
        cfg.f = f;
    }
    if let Some(t) = args.num_times {
        cfg.num_times = t;
    }
    if let Some(y) = args.num_labels {
        cfg.num_labels = y;
    }
    if let Some(g) = args.gamma {
        cfg.gamma_mode = GammaMode::Fixed(g);
    }
    if let Some((lo, hi)) = args.gamma_range {
        cfg.gamma_mode = GammaMode::UniformRange(lo, hi);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(b) = args.test_boundary {
        cfg.test_boundary = b;
    }
    cfg.validate()?;

    let mut rng = SeededRng::new(cfg.seed);
    let (graph, params) = tsbm::generate(&cfg, &mut rng)?;
    graph.save_json(&args.out)?;
    TsbmSidecar { config: cfg, params }.save_json(&sidecar_path(&args.out))?;
    println!(
        "wrote {} ({} nodes, {} edges) and {}",
        args.out.display(),
        graph.num_nodes(),
        graph.edges().len(),
        sidecar_path(&args.out).display()
    );
    Ok(())
}

fn finish_grid(
    outcome: GridOutcome,
    out_csv: Option<&Path>,
    out_summary: Option<&Path>,
) -> Result<(), CliError> {
    let csv = experiment::rows_to_csv(&outcome.rows);
    match out_csv {
        Some(path) => std::fs::write(path, &csv)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    let summaries = experiment::summarize(&outcome.rows);
    let summary_json = serde_json::to_string_pretty(&summaries)
        .map_err(|e| CliError::Config(e.to_string()))?;
    match out_summary {
        Some(path) => std::fs::write(path, summary_json)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => {
            for s in &summaries {
                eprintln!(
                    "{}/{}+{} [{}]: test {:.4} ± {:.4} over {} runs",
                    s.model, s.scheme, s.alignment, s.gamma_mode, s.mean_test_acc,
                    s.std_test_acc, s.runs
                );
            }
        }
    }
    for f in &outcome.failures {
        eprintln!("failed: {f}");
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::RunFailures(outcome.failures.len()))
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &args.model {
        cfg.model = m.clone();
    }
    if let Some(methods) = &args.methods {
        cfg.methods = methods.split(',').map(|s| s.trim().to_string()).collect();
    }
    if args.scheme.is_some() || args.alignment.is_some() {
        let scheme = args.scheme.clone().unwrap_or_else(|| "avg".into());
        let alignment = args.alignment.clone().unwrap_or_else(|| "none".into());
        cfg.methods = vec![if alignment == "none" {
            scheme
        } else {
            format!("{scheme}+{alignment}")
        }];
    }
    if let Some(b) = &args.pmp_boundary {
        cfg.pmp_boundary = b.clone();
    }
    if args.pny_final_only {
        cfg.pny_final_only = true;
    }
    if let Some(g) = args.gamma {
        cfg.tsbm.gamma_mode = GammaMode::Fixed(g);
    }
    if let Some(r) = args.reps {
        cfg.repetitions = r;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(g) = &args.graph {
        cfg.graph_file = Some(g.to_string_lossy().into_owned());
    }
    if cfg.repetitions == 0 {
        return Err(CliError::Config("repetitions must be at least 1".into()));
    }

    let model = parse_model(&cfg.model)?;
    let boundary = parse_boundary(&cfg.pmp_boundary)?;
    let methods: Vec<MethodSpec> = cfg
        .methods
        .iter()
        .map(|m| parse_method(m, model, boundary, cfg.pny_final_only))
        .collect::<Result<_, _>>()?;

    let outcome = match &cfg.graph_file {
        Some(path) => {
            let g = TemporalGraph::load_json(Path::new(path))?;
            let mut merged = GridOutcome::default();
            for i in 0..cfg.repetitions as u64 {
                let one =
                    experiment::run_graph_methods(&g, "file", &methods, &cfg.train, cfg.base_seed + i);
                merged.rows.extend(one.rows);
                merged.failures.extend(one.failures);
            }
            merged
        }
        None => experiment::run_tsbm_grid(
            &cfg.tsbm,
            &methods,
            &cfg.train,
            cfg.repetitions,
            cfg.base_seed,
            cfg.jobs,
        )?,
    };
    let out_csv = args.out.as_deref().or(cfg.out_csv.as_deref().map(Path::new));
    let out_summary = args.summary.as_deref().or(cfg.out_summary.as_deref().map(Path::new));
    finish_grid(outcome, out_csv, out_summary)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let gammas: Vec<f64> = args
        .gammas
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("gamma '{s}': {e}")))
        .collect::<Result<_, _>>()?;
    if gammas.is_empty() {
        return Err(CliError::Config("gamma sweep needs at least one value".into()));
    }
    let model = parse_model(&args.model)?;
    let boundary = args.pmp_boundary.as_deref().map(parse_boundary).transpose()?.unwrap_or_default();
    let methods: Vec<MethodSpec> = args
        .methods
        .split(',')
        .map(|m| parse_method(m.trim(), model, boundary, false))
        .collect::<Result<_, _>>()?;
    let mut train = TrainConfig::default();
    if let Some(e) = args.epochs {
        train.epochs = e;
    }
    let outcome = experiment::sweep_gamma(
        &TsbmConfig::default(),
        &gammas,
        &methods,
        &train,
        args.reps,
        args.seed,
        args.jobs,
    )?;
    finish_grid(outcome, args.out.as_deref(), args.summary.as_deref())
}

fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<(), CliError> {
    let g = TemporalGraph::load_json(&args.graph)?;
    let boundary = args.pmp_boundary.as_deref().map(parse_boundary).transpose()?.unwrap_or_default();
    let scheme = parse_scheme(&args.scheme, boundary)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.out.display())))?;
    let section = args.section.as_str();
    let want = |s: &str| section == "all" || section == s;
    let write = |name: &str, json: String| -> Result<(), CliError> {
        let path = args.out.join(name);
        std::fs::write(&path, json).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    };

    let adj = rewrite::<f64>(&g, scheme);
    let messages = propagate(g.features(), &adj);
    let zero_in = adj.zero_in_degree_nodes().len();
    if zero_in > 0 {
        eprintln!("note: {zero_in} node(s) had no in-edges; self-copy fallback used");
    }

    if want("connectivity") {
        let est = estimate_connectivity(&g)?;
        if est.uniform_fallback_rows > 0 {
            eprintln!("note: {} row(s) fell back to uniform", est.uniform_fallback_rows);
        }
        let json = serde_json::json!({
            "p_hat": est.p_hat,
            "g_hat": est.g_hat,
            "valid_rows": est.valid_mask,
        });
        write("connectivity.json", serde_json::to_string_pretty(&json).unwrap())?;
    }

    if want("moments") {
        let idx = CommunityIndex::build(&g, true);
        let conn = estimate_connectivity(&g)?;
        let moments = community_moments(
            &messages,
            g.features(),
            &g,
            &idx,
            &conn,
            scheme,
            TestMomentTarget::TestPool,
        )?;
        let (_, jj) = jjnorm_transform(&messages, &g, &idx, TestMomentTarget::TestPool)?;
        let json = serde_json::json!({
            "mu_m": moments.mu_m,
            "mu_m_label": moments.mu_m_label,
            "mu_m_time": moments.mu_m_time,
            "sigma_xx": moments.sigma_xx.iter().map(mat_to_rows).collect::<Vec<_>>(),
            "sigma_mm": moments.sigma_mm.iter().map(|m| m.as_ref().map(mat_to_rows)).collect::<Vec<_>>(),
            "sigma_mm_eff": moments.sigma_mm_eff.iter().map(|m| m.as_ref().map(mat_to_rows)).collect::<Vec<_>>(),
            "mean_degree": moments.n_yt,
            "jj_stats": jj,
        });
        write("moments.json", serde_json::to_string_pretty(&json).unwrap())?;
    }

    if want("invariance") {
        let idx = CommunityIndex::build(&g, false);
        let report = invariance_gap(&messages, &g, &idx, scheme.name());
        write("invariance.json", serde_json::to_string_pretty(&report).unwrap())?;
        if let Some(params_path) = &args.params {
            let sidecar = TsbmSidecar::load_json(params_path)?;
            let oracle = compare_to_oracle(&g, &sidecar.params, scheme)?;
            write("oracle.json", serde_json::to_string_pretty(&oracle).unwrap())?;
        }
    }
    Ok(())
}
