//! `umi`: decomposition, ROI extraction, index scoring and statistics from
//! the command line.

mod stats_cmd;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use umi_core::matrix::MatrixFormat;
use umi_core::pipeline::{
    files_config_text, run_pipeline, sweep_lambda, GridScale, PipelineConfig, SweepConfig,
};
use umi_core::roi::{extract_roi, stability_folds, low_rank_component, min_p_value, RoiMask, RoiMethod, RoiSettings, StabilityConfig};
use umi_core::solver::{LambdaChoice, SolverOptions};
use umi_core::synth::{generate_synthetic, SyntheticSpec};
use umi_core::umi::{build_template, scores_csv, AtrophyTemplate};
use umi_core::{Error, FeatureMatrix, LocalGroups, TriangleMesh, VertexMap};

#[derive(Debug, Parser)]
#[command(name = "umi", version, about = "Low-rank + locally sparse decomposition and morphometry index tools")]
struct Cli {
    /// Base seed for every random stream of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Matrix format for written feature matrices.
    #[arg(long, global = true)]
    format: Option<MatrixFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Sparsity weight: `default`, `group_scaled` or a number.
    #[arg(long, default_value = "group_scaled")]
    lambda: LambdaChoice,
    #[arg(long, default_value_t = 1.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    /// Noise radius; data-derived when omitted.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rank_budget: Option<usize>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
}

impl SolverArgs {
    fn options(&self, seed: Option<u64>) -> SolverOptions {
        SolverOptions {
            lambda: self.lambda,
            alpha: self.alpha,
            tau: self.tau,
            epsilon: self.epsilon,
            rank_budget: self.rank_budget,
            max_iters: self.max_iters,
            seed: seed.unwrap_or(0),
        }
    }
}

#[derive(Debug, Args)]
struct SpecArgs {
    /// JSON file with synthetic-cohort parameters.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override one parameter, e.g. `--set n_ad=40`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl SpecArgs {
    fn spec(&self, seed: Option<u64>) -> Result<SyntheticSpec> {
        let mut value = match &self.spec {
            Some(p) => serde_json::from_str::<Value>(&read_text(p)?).map_err(Error::from)?,
            None => serde_json::to_value(SyntheticSpec::default())?,
        };
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!(Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")));
            };
            let v = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string()));
            value
                .as_object_mut()
                .ok_or_else(|| Error::Config("synthetic spec must be a JSON object".into()))?
                .insert(k.trim().to_string(), v);
        }
        let mut spec: SyntheticSpec =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("synthetic spec: {e}")))?;
        if let Some(s) = seed {
            spec.seed = s;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a feature matrix into low-rank, locally sparse and noise parts.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        /// CSV of `row,vertex` pairs; identity when omitted.
        #[arg(long)]
        vertex_map: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vertex-wise two-group test and ROI selection, optionally with fold stability.
    Roi {
        #[arg(long)]
        group_a: PathBuf,
        #[arg(long)]
        group_b: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        vertex_map: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        n_perm: usize,
        #[arg(long, default_value_t = 1e-3)]
        p_thresh: f64,
        #[arg(long, default_value = "permutation")]
        method: RoiMethod,
        /// FDR level for `--method fdr`.
        #[arg(long, default_value_t = 0.05)]
        q: f64,
        /// Number of subsampling folds for the stability map (0 = none).
        #[arg(long, default_value_t = 0)]
        folds: usize,
        #[arg(long, default_value_t = 0.9)]
        fraction: f64,
        /// Test the low-rank components instead of the raw features.
        #[arg(long)]
        decompose: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an atrophy template from AD and CU low-rank components and an ROI.
    Template {
        #[arg(long)]
        low_rank_ad: PathBuf,
        #[arg(long)]
        low_rank_cu: PathBuf,
        /// `roi.csv` written by `umi roi`.
        #[arg(long)]
        roi: PathBuf,
        #[arg(long)]
        vertex_map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score subjects against a template.
    Umi {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Statistical tests on CSV input.
    Stats(stats_cmd::StatsArgs),
    /// Generate a synthetic cohort with ground truth and a ready-to-run config.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank, sparse-norm and holdout-error curves over a sparsity-weight grid.
    SweepLambda {
        #[command(flatten)]
        spec: SpecArgs,
        /// Grid values; defaults to 0.003..0.014 in steps of 0.001.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// `relative`: grid value 0.0082 maps to the reference weight of `--lambda`.
        #[arg(long, default_value = "relative")]
        scale: GridScale,
        /// Reference weight for the relative scale.
        #[arg(long, default_value = "default")]
        lambda: LambdaChoice,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0.1)]
        holdout: f64,
        #[arg(long, default_value_t = 1000)]
        n_perm: usize,
        #[arg(long, default_value_t = 0.01)]
        p_thresh: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a config file.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Result of a command that produced its outputs.
enum Outcome {
    Done,
    NotConverged(String),
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    std::fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn load_matrix(path: &Path) -> Result<FeatureMatrix> {
    let fm = FeatureMatrix::load(path)?;
    let bad = fm.nonpositive_count();
    if bad > 0 {
        log::warn!("{}: {bad} nonpositive feature values", path.display());
    }
    Ok(fm)
}

fn load_map(path: Option<&PathBuf>, m: usize) -> Result<VertexMap> {
    match path {
        Some(p) => Ok(VertexMap::read_csv(&read_text(p)?, m)?),
        None => Ok(VertexMap::identity(m)),
    }
}

fn load_mesh(path: &Path, rows: usize) -> Result<TriangleMesh> {
    let mesh = TriangleMesh::load(path)?;
    if mesh.vertex_count() != rows {
        bail!(Error::Dimension(format!(
            "matrix has {rows} rows but {} has {} vertices",
            path.display(),
            mesh.vertex_count()
        )));
    }
    Ok(mesh)
}

fn save_matrix(dir: &Path, stem: &str, fm: &FeatureMatrix, format: MatrixFormat) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    fm.save(&path, format)?;
    Ok(path)
}

fn decompose_cmd(
    input: &Path,
    mesh: &Path,
    vertex_map: Option<&PathBuf>,
    solver: SolverOptions,
    out: &Path,
    format: MatrixFormat,
) -> Result<Outcome> {
    let fm = load_matrix(input)?;
    let mesh = load_mesh(mesh, fm.nrows())?;
    let map = load_map(vertex_map, fm.nrows())?;
    let groups = LocalGroups::new(&mesh, &map)?;
    let cfg = solver.config_for(&fm.data, &groups)?;
    let res = umi_core::decompose(&fm.data, &groups, &cfg)?;
    create_dir(out)?;
    let ids = fm.subject_ids.clone();
    save_matrix(out, "low_rank", &FeatureMatrix::new(res.low_rank.clone(), ids.clone())?, format)?;
    save_matrix(out, "sparse", &FeatureMatrix::new(res.sparse.clone(), ids.clone())?, format)?;
    save_matrix(out, "noise", &FeatureMatrix::new(res.noise.clone(), ids)?, format)?;
    write_json(&out.join("diagnostics.json"), &res.diagnostics_json(&cfg))?;
    eprintln!(
        "rank {} | sparse norm {:.4} | {} iterations | converged {}",
        res.rank(),
        res.sparse_norm(),
        res.iters,
        res.converged
    );
    if res.converged {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::NotConverged(format!("solver stopped after {} iterations", res.iters)))
    }
}

#[allow(clippy::too_many_arguments)]
fn roi_cmd(
    a_path: &Path,
    b_path: &Path,
    mesh: &Path,
    vertex_map: Option<&PathBuf>,
    settings: RoiSettings,
    folds: usize,
    fraction: f64,
    decompose: bool,
    solver: SolverOptions,
    out: &Path,
) -> Result<Outcome> {
    let a = load_matrix(a_path)?;
    let b = load_matrix(b_path)?;
    let mesh = load_mesh(mesh, a.nrows())?;
    let map = load_map(vertex_map, a.nrows())?;
    let groups = LocalGroups::new(&mesh, &map)?;
    let (ta, tb) = if decompose {
        (
            low_rank_component(&a.data, &groups, &solver)?,
            low_rank_component(&b.data, &groups, &solver)?,
        )
    } else {
        (a.data.clone(), b.data.clone())
    };
    let mask = extract_roi(&ta, &tb, &settings)?;
    create_dir(out)?;
    write_text(&out.join("roi.csv"), &mask.to_csv(&map))?;
    write_text(&out.join("roi_overlay.txt"), &mask.overlay(&mesh, &map)?)?;
    let mut summary = json!({
        "method": settings.method,
        "threshold": settings.threshold,
        "n_perm": settings.n_perm,
        "min_attainable_p": min_p_value(settings.n_perm),
        "seed": settings.seed,
        "tested": if decompose { "low_rank" } else { "raw" },
        "vertices": mask.selected.len(),
        "selected": mask.count(),
    });
    if folds > 0 {
        let cfg = StabilityConfig {
            n_folds: folds,
            fraction,
            roi: settings,
            solver,
            low_rank: decompose,
            seed: settings.seed,
        };
        let stab = stability_folds(&a.data, &b.data, &groups, &cfg)?;
        write_text(&out.join("stability.csv"), &stab.to_csv(&map))?;
        write_text(&out.join("stability_overlay.txt"), &stab.overlay(&mesh, &map)?)?;
        summary["stability"] = json!({
            "folds": folds,
            "fraction": fraction,
            "full_count_fraction": stab.full_count_fraction(),
            "ever_selected": stab.counts.iter().filter(|&&c| c > 0).count(),
        });
    }
    write_json(&out.join("roi_summary.json"), &summary)?;
    eprintln!("{} of {} vertices selected", mask.count(), mask.selected.len());
    Ok(Outcome::Done)
}

fn template_cmd(ad: &Path, cu: &Path, roi: &Path, vertex_map: Option<&PathBuf>, out: &Path) -> Result<Outcome> {
    let la = load_matrix(ad)?;
    let lc = load_matrix(cu)?;
    let map = load_map(vertex_map, la.nrows())?;
    let mask = RoiMask::from_csv(&read_text(roi)?, &map, f64::NAN, RoiMethod::Permutation)
        .with_context(|| format!("reading ROI {}", roi.display()))?;
    let t = build_template(&la.data, &lc.data, &mask)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    t.save(out)?;
    eprintln!("template over {} ROI vertices", t.len());
    Ok(Outcome::Done)
}

fn umi_cmd(template: &Path, features: &Path, out: Option<&PathBuf>) -> Result<Outcome> {
    let t = AtrophyTemplate::load(template)?;
    let fm = load_matrix(features)?;
    let text = scores_csv(&t.score_matrix(&fm)?);
    match out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Done)
}

fn simulate_cmd(spec: &SyntheticSpec, out: &Path, format: MatrixFormat) -> Result<Outcome> {
    let syn = generate_synthetic(spec)?;
    create_dir(out)?;
    let features = save_matrix(out, "features", &syn.features, format)?;
    syn.cohort.save(&out.join("cohort.csv"))?;
    syn.mesh.save(&out.join("mesh.txt"))?;
    write_json(&out.join("truth.json"), &serde_json::to_value(&syn.truth)?)?;
    write_json(&out.join("spec.json"), &serde_json::to_value(spec)?)?;
    let name = features.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_text(
        &out.join("pipeline.cfg"),
        &files_config_text(&name, "cohort.csv", "mesh.txt", "results"),
    )?;
    eprintln!(
        "{} vertices, {} subjects written to {}",
        syn.features.nrows(),
        syn.features.ncols(),
        out.display()
    );
    Ok(Outcome::Done)
}

fn sweep_cmd(cfg: &SweepConfig, out: &Path) -> Result<Outcome> {
    let res = sweep_lambda(cfg)?;
    create_dir(out)?;
    write_text(&out.join("sweep.csv"), &res.to_csv())?;
    write_json(
        &out.join("sweep.json"),
        &json!({ "config": cfg, "result": res, "best": res.points[res.best()].grid_value }),
    )?;
    for p in &res.points {
        eprintln!(
            "grid {:.4} lambda {:.5} rank {}/{} sparse {:.1}/{:.1} error {:.3}",
            p.grid_value, p.lambda, p.rank_ad, p.rank_cu, p.sparse_norm_ad, p.sparse_norm_cu, p.classification_error
        );
    }
    let stalled = res.points.iter().filter(|p| !p.converged).count();
    if stalled > 0 {
        return Ok(Outcome::NotConverged(format!("{stalled} grid points did not converge")));
    }
    Ok(Outcome::Done)
}

fn run_cmd(config: &Path, out: Option<&PathBuf>, seed: Option<u64>, format: Option<MatrixFormat>) -> Result<Outcome> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(s) = seed {
        cfg.reseed(s);
    }
    if let Some(f) = format {
        cfg.output.format = f;
    }
    if let Some(o) = out {
        cfg.output.dir = o.clone();
    }
    let report = run_pipeline(&cfg)?;
    eprintln!("results in {}", report.out_dir.display());
    if report.converged {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::NotConverged("a decomposition stopped at the iteration limit".into()))
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let format = cli.format.unwrap_or(MatrixFormat::Csv);
    let seed = cli.seed;
    match &cli.command {
        Command::Decompose {
            input,
            mesh,
            vertex_map,
            solver,
            out,
        } => decompose_cmd(input, mesh, vertex_map.as_ref(), solver.options(seed), out, format),
        Command::Roi {
            group_a,
            group_b,
            mesh,
            vertex_map,
            n_perm,
            p_thresh,
            method,
            q,
            folds,
            fraction,
            decompose,
            solver,
            out,
        } => {
            let settings = RoiSettings {
                method: *method,
                n_perm: *n_perm,
                threshold: match method {
                    RoiMethod::Permutation => *p_thresh,
                    RoiMethod::Fdr => *q,
                },
                seed: seed.unwrap_or(0),
            };
            roi_cmd(
                group_a,
                group_b,
                mesh,
                vertex_map.as_ref(),
                settings,
                *folds,
                *fraction,
                *decompose,
                solver.options(seed),
                out,
            )
        }
        Command::Template {
            low_rank_ad,
            low_rank_cu,
            roi,
            vertex_map,
            out,
        } => template_cmd(low_rank_ad, low_rank_cu, roi, vertex_map.as_ref(), out),
        Command::Umi { template, features, out } => umi_cmd(template, features, out.as_ref()),
        Command::Stats(args) => stats_cmd::run(args, seed).map(|_| Outcome::Done),
        Command::Simulate { spec, out } => simulate_cmd(&spec.spec(seed)?, out, format),
        Command::SweepLambda {
            spec,
            grid,
            scale,
            lambda,
            repeats,
            holdout,
            n_perm,
            p_thresh,
            out,
        } => {
            let base = SweepConfig::default();
            let cfg = SweepConfig {
                spec: spec.spec(seed)?,
                grid: grid.clone().unwrap_or(base.grid),
                scale: *scale,
                holdout_fraction: *holdout,
                repeats: *repeats,
                roi: RoiSettings {
                    n_perm: *n_perm,
                    threshold: *p_thresh,
                    seed: seed.unwrap_or(0),
                    ..base.roi
                },
                solver: SolverOptions {
                    lambda: *lambda,
                    seed: seed.unwrap_or(0),
                    ..base.solver
                },
                seed: seed.unwrap_or(0),
            };
            sweep_cmd(&cfg, out)
        }
        Command::Run { config, out } => run_cmd(config, out.as_ref(), seed, cli.format),
    }
}

/// Exit status for an error: the library's code when the chain carries one.
fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

/// Error chain on one line, skipping causes the outer messages already show.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("warning: {msg}; outputs were written");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
