//! The four subcommands. Every output file starts with a provenance line
//! `# config_hash=<sha256> seed=<seed>` (JSON files carry the same two values
//! as fields instead).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use plantmf::init::{sample_stream, split_samples, InitialSizeLaw};
use plantmf::meanfield::{potential_surface, train, write_surface_csv, GridSpec, MeanFieldModel};
use plantmf::metrics::{convergence_experiment, write_reports_csv, Comparison, ConvergenceConfig, DistanceReport};
use plantmf::population::{integrate, PopulationState, SnapshotDiagnostics, INVARIANT_SLACK};
use plantmf::SampleStream;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

const SIMULATE_LAW: InitialSizeLaw = InitialSizeLaw::PointMass { value: 0.1 };
const TRAIN_LAW: InitialSizeLaw = InitialSizeLaw::Uniform { min: 0.1, max: 0.3 };

fn create_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", out.display())))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
    let io_err = |e: std::io::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
    Ok(path.to_path_buf())
}

fn write_csv(
    path: &Path,
    hash: &str,
    seed: u64,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<PathBuf, CliError> {
    write_file(path, |w| {
        writeln!(w, "# config_hash={hash} seed={seed}")?;
        body(w)
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_file(path, |w| writeln!(w, "{text}"))
}

#[derive(Serialize)]
struct SimulationDiagnostics<'a> {
    config_hash: &'a str,
    seed: u64,
    n: usize,
    t_end: f64,
    accepted_steps: usize,
    min_size: f64,
    max_size: f64,
    min_index: f64,
    max_index: f64,
    /// Smallest `s_i − s_m` over the run.
    min_lower_margin: f64,
    /// Smallest `S_i − s_i` over the run.
    min_upper_margin: f64,
    /// Smallest margins to the lower and upper size envelopes.
    envelope_lower_margin: f64,
    envelope_upper_margin: f64,
    invariants_hold: bool,
    snapshots: &'a [SnapshotDiagnostics],
}

/// Simulates `n` plants drawn from the initial law and writes
/// `trajectory.csv` and `diagnostics.json`.
pub fn simulate(mut cfg: ExperimentConfig, n: usize, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if seed.is_some() {
        cfg.seed = seed;
    }
    let seed = cfg.require_seed()?;
    if n < 2 {
        return Err(CliError::Config(format!("--n must be at least 2, got {n}")));
    }
    let hash = cfg.hash();
    let mu0 = cfg.mu0(SIMULATE_LAW, seed);
    let samples = sample_stream(&mu0, SampleStream::Population, n)?;
    let (traits, sizes) = split_samples(&samples);
    let initial = PopulationState::new(traits, sizes, 0.0)?;
    let traj = integrate(&cfg.model, &initial, &cfg.solver())?;

    create_out_dir(out)?;
    let csv = write_csv(&out.join("trajectory.csv"), &hash, seed, |w| traj.write_csv(w))?;

    let d = &traj.diagnostics;
    let fold = |f: fn(&SnapshotDiagnostics) -> f64, min: bool| {
        d.iter()
            .map(f)
            .fold(if min { f64::INFINITY } else { f64::NEG_INFINITY }, |a, b| if min { a.min(b) } else { a.max(b) })
    };
    let (env_lo, env_hi) = traj.envelope_margins();
    let diag = SimulationDiagnostics {
        config_hash: &hash,
        seed,
        n,
        t_end: traj.t_end(),
        accepted_steps: traj.accepted_steps(),
        min_size: fold(|s| s.min_size, true),
        max_size: fold(|s| s.max_size, false),
        min_index: fold(|s| s.min_index, true),
        max_index: fold(|s| s.max_index, false),
        min_lower_margin: fold(|s| s.min_lower_margin, true),
        min_upper_margin: fold(|s| s.min_upper_margin, true),
        envelope_lower_margin: env_lo,
        envelope_upper_margin: env_hi,
        invariants_hold: fold(|s| s.min_lower_margin, true) > 0.0
            && fold(|s| s.min_upper_margin, true) > 0.0
            && fold(|s| s.min_index, true) >= -INVARIANT_SLACK
            && fold(|s| s.max_index, false) <= 1.0 + INVARIANT_SLACK
            && env_lo >= -INVARIANT_SLACK
            && env_hi >= -INVARIANT_SLACK,
        snapshots: d,
    };
    let json = write_json(&out.join("diagnostics.json"), &diag)?;
    Ok(vec![csv, json])
}

/// Trains the mean-field model and writes `model.json` and `r2.csv`.
pub fn train_meanfield(cfg: ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let seed = cfg.require_seed()?;
    let hash = cfg.hash();
    let mu0 = cfg.mu0(TRAIN_LAW, seed);
    let mut model = train(&mu0, &cfg.train)?;
    model.config_hash = Some(hash.clone());
    for st in &model.stages {
        let dim = st.spec.dimension();
        if st.rank < dim {
            eprintln!(
                "warning: stage {} design matrix is rank deficient ({} of {dim}); minimum-norm fit used",
                st.stage_index, st.rank
            );
        }
        if st.r2_test.is_none() {
            eprintln!("warning: stage {} has constant targets; R² is undefined", st.stage_index);
        }
    }
    create_out_dir(out)?;
    let model_path = out.join("model.json");
    let text = model.to_json()?;
    write_file(&model_path, |w| writeln!(w, "{text}"))?;
    let r2 = write_csv(&out.join("r2.csv"), &hash, seed, |w| model.write_r2_csv(w))?;
    Ok(vec![model_path, r2])
}

pub fn load_model(path: &Path) -> Result<MeanFieldModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
    MeanFieldModel::from_json(&text).map_err(|e| CliError::Config(format!("invalid model {}: {e}", path.display())))
}

#[derive(Serialize)]
struct ConvergenceOutput<'a> {
    config_hash: &'a str,
    seed: u64,
    reports: &'a [DistanceReport],
}

/// Runs the convergence experiment against a trained model (or against the
/// populations themselves) and writes `convergence.csv` and `convergence.json`.
pub fn converge(
    cfg: ExperimentConfig,
    model_path: Option<&Path>,
    self_compare: bool,
    n_list: Option<Vec<usize>>,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let model = match (model_path, self_compare) {
        (Some(p), false) => Some(load_model(p)?),
        (_, true) => None,
        (None, false) => return Err(CliError::Config("--model is required unless --self-compare is given".into())),
    };
    let mu0 = match &model {
        // populations must come from the law (and seed) the model was trained on
        Some(m) => m.mu0.clone(),
        None => cfg.mu0(TRAIN_LAW, cfg.require_seed()?),
    };
    let t_grid = cfg.converge.t_grid.clone();
    if let Some(m) = &model {
        if t_grid.last().is_some_and(|&t| t > m.horizon) {
            return Err(CliError::Config(format!(
                "converge.t_grid exceeds the model horizon {}",
                m.horizon
            )));
        }
    }
    let mut resolved = cfg.clone();
    if let Some(list) = n_list {
        resolved.converge.n_list = list;
    }
    resolved.seed = Some(mu0.seed);
    let hash = resolved.hash();
    let conv = ConvergenceConfig {
        n_list: resolved.converge.n_list.clone(),
        t_grid,
        solver: cfg.solver(),
        weights: cfg.weights(&mu0),
        matching_cap: cfg.metric.matching_cap,
    };
    let comparison = match &model {
        Some(m) => Comparison::MeanField(m),
        None => Comparison::SelfEmpirical,
    };
    let reports = convergence_experiment(&mu0, comparison, &conv)?;
    for r in &reports {
        eprintln!("N={}: {:.3} s", r.n, r.runtime_secs);
    }
    create_out_dir(out)?;
    let csv = write_csv(&out.join("convergence.csv"), &hash, mu0.seed, |w| write_reports_csv(&reports, w))?;
    let json = write_json(
        &out.join("convergence.json"),
        &ConvergenceOutput {
            config_hash: &hash,
            seed: mu0.seed,
            reports: &reports,
        },
    )?;
    Ok(vec![csv, json])
}

/// Writes `surface.csv`: the final-time flow of the mean plant on a grid.
pub fn potential_dump(model_path: &Path, grid: &GridSpec, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model = load_model(model_path)?;
    let rows = potential_surface(&model, grid)?;
    let outside = rows.iter().filter(|r| !r.in_cloud).count();
    if outside > 0 {
        eprintln!("note: {outside} of {} grid points lie outside the training cloud (flagged in_cloud=0)", rows.len());
    }
    create_out_dir(out)?;
    let hash = model.config_hash.clone().unwrap_or_else(|| "none".into());
    let csv = write_csv(&out.join("surface.csv"), &hash, model.mu0.seed, |w| write_surface_csv(&rows, w))?;
    Ok(vec![csv])
}
