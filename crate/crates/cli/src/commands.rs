//! Subcommand implementations. Each writes its artefacts and the effective
//! configuration (`config.txt`) into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use msgnn_core::metrics::{error_map, field_ppm, write_text, EvalReport};
use msgnn_core::solver::{rayleigh_number, run_many, SolverConfig};
use msgnn_core::train::{one_step_loss, persistence_loss, train, Dataset, Predictor};
use msgnn_core::{build_hierarchy, CavityMesh, Trajectory};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.csv";
pub const CONFIG_ECHO: &str = "config.txt";

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write(out.join(CONFIG_ECHO), &cfg.to_text())
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    write_text(&path, text).map_err(|e| match e {
        msgnn_core::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

fn write_bytes(path: PathBuf, bytes: &[u8]) -> Result<()> {
    std::fs::write(&path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    if !path.is_file() {
        return Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such trajectory file")));
    }
    Ok(Trajectory::read(path)?)
}

fn trajectory_name(aspect_ratio: u32, t_hot: f64, seed: u64) -> String {
    format!("traj_ar{aspect_ratio}_th{t_hot}_s{seed}.cmgn")
}

/// One trajectory per (aspect ratio, hot-wall temperature, seed) in the
/// sweep lists, plus a manifest listing them.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    prepare_out(out, cfg)?;
    let mut jobs: Vec<(SolverConfig, u64)> = Vec::new();
    for &aspect_ratio in &cfg.sweep_aspect_ratios {
        for &t_hot in &cfg.sweep_t_hot {
            for &seed in &cfg.sweep_seeds {
                let solver = SolverConfig { aspect_ratio, t_hot, ..cfg.solver.clone() };
                solver.validate()?;
                jobs.push((solver, seed));
            }
        }
    }
    log::info!("generating {} trajectories", jobs.len());
    let mut manifest = String::from("file,aspect_ratio,t_hot,seed,frames,rayleigh\n");
    for ((solver, seed), result) in jobs.iter().zip(run_many(&jobs, cfg.train.exec)) {
        let traj = result?;
        let name = trajectory_name(solver.aspect_ratio, solver.t_hot, *seed);
        let path = out.join(&name);
        traj.write(&path)?;
        let _ = writeln!(
            manifest,
            "{name},{},{},{seed},{},{}",
            solver.aspect_ratio,
            solver.t_hot,
            traj.len(),
            rayleigh_number(solver)
        );
        println!("{name}: {} frames, Ra {:.0}", traj.len(), rayleigh_number(solver));
    }
    write(out.join(MANIFEST), &manifest)
}

/// Builds the hierarchy for the configured mesh, prints per-level node
/// counts and the clique-size histogram, and writes a text dump.
pub fn hierarchy(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    prepare_out(out, cfg)?;
    let s = &cfg.solver;
    let mesh = CavityMesh::new(s.aspect_ratio, s.cells_per_height, s.height)?;
    let h = build_hierarchy(&mesh.adjacency(cfg.model.neighborhood), cfg.model.n_levels, cfg.model.hierarchy_seed)?;
    let counts = h.node_counts();
    if counts.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Invariant(format!("node counts {counts:?} do not strictly decrease")));
    }
    let hist = h.clique_histogram();
    let mut stats = String::from("level,nodes,edges\n");
    for (k, level) in h.levels().iter().enumerate() {
        let _ = writeln!(stats, "{k},{},{}", level.n_nodes(), level.adjacency.n_edges());
        println!("level {k}: {} nodes, {} edges", level.n_nodes(), level.adjacency.n_edges());
    }
    println!("cliques: {} of size 1, {} of size 2, {} of size 3", hist[0], hist[1], hist[2]);
    if h.n_levels() < cfg.model.n_levels {
        println!("note: stopped at {} of {} requested levels", h.n_levels(), cfg.model.n_levels);
    }
    write(out.join("hierarchy_stats.csv"), &stats)?;
    write(out.join("hierarchy.txt"), &h.dump())
}

/// Trajectory files named by the manifest in `data`, or `data` itself when
/// it is a file.
pub fn load_dataset_files(data: &Path) -> Result<Vec<PathBuf>> {
    if data.is_file() {
        return Ok(vec![data.to_path_buf()]);
    }
    let manifest = data.join(MANIFEST);
    let text = std::fs::read_to_string(&manifest).map_err(|e| CliError::io(&manifest, e))?;
    let mut files = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let name = line.split(',').next().unwrap_or_default();
        files.push(data.join(name));
    }
    Ok(files)
}

pub fn train_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let files = load_dataset_files(&cfg.data)?;
    let mut trajectories = Vec::with_capacity(files.len());
    for f in &files {
        trajectories.push(read_trajectory(f)?);
    }
    if trajectories.is_empty() {
        return Err(CliError::Config(format!("no trajectories found under {}", cfg.data.display())));
    }
    prepare_out(out, cfg)?;
    let data = Dataset::new(trajectories, &cfg.model)?;
    println!(
        "{} trajectories, {} samples, {} distinct meshes; persistence loss {:.3e}",
        data.trajectories().len(),
        data.samples().len(),
        data.n_distinct_graphs(),
        persistence_loss(&data)
    );
    let outcome = train(&data, &cfg.model, &cfg.train, cfg.seed)?;
    let mut curve = String::from("epoch,loss\n");
    for (e, l) in outcome.loss_curve.iter().enumerate() {
        let _ = writeln!(curve, "{e},{l}");
    }
    write(out.join("loss.csv"), &curve)?;
    let final_loss = one_step_loss(&outcome.model, &outcome.params, &data, cfg.train.exec)?;
    if !final_loss.is_finite() || !outcome.params.all_finite() {
        return Err(msgnn_core::Error::NonFinite("trained parameters".into()).into());
    }
    println!("{} parameters, final one-step loss {final_loss:.3e}", outcome.params.n_scalars());
    Predictor::from_outcome(&outcome).save(out.join("model.ckpt"))?;
    Ok(())
}

/// Absolute-error image scaled to its own maximum.
fn error_ppm(err: &[f64], mesh: &CavityMesh) -> Result<Vec<u8>> {
    let max = err.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok(field_ppm(err, mesh, 0.0, max.max(1e-12), 8)?)
}

pub fn rollout(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let predictor = Predictor::load(&cfg.checkpoint).map_err(|e| match e {
        msgnn_core::Error::Io(io) => CliError::io(&cfg.checkpoint, io),
        other => other.into(),
    })?;
    let traj = read_trajectory(&cfg.trajectory)?;
    let pred = predictor.rollout(&traj, cfg.rollout_start, cfg.rollout_horizon)?;
    prepare_out(out, cfg)?;
    let mut frames = vec![traj.snapshots[cfg.rollout_start].temperatures.clone()];
    frames.extend(pred);
    let result = Trajectory::from_frames(traj.mesh.clone(), traj.params, frames)?;
    result.write(out.join("predictions.cmgn"))?;
    println!("{} predicted frames from frame {}", cfg.rollout_horizon, cfg.rollout_start);
    Ok(())
}

/// Compares predicted frames `1..` with reference frames `rollout_start +
/// 1..`; writes per-step metrics, the final line profile and images.
pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let truth = read_trajectory(&cfg.trajectory)?;
    let pred = read_trajectory(&cfg.predictions)?;
    if pred.mesh != truth.mesh {
        return Err(msgnn_core::Error::ShapeMismatch("prediction and reference meshes differ".into()).into());
    }
    let start = cfg.rollout_start;
    let n = pred.len().saturating_sub(1);
    if start + n >= truth.len() {
        return Err(CliError::Config(format!(
            "{n} predicted frames from frame {start} overrun a {}-frame reference",
            truth.len()
        )));
    }
    prepare_out(out, cfg)?;
    let predicted: Vec<Vec<f64>> = pred.snapshots[1..].iter().map(|s| s.temperatures.clone()).collect();
    let reference: Vec<Vec<f64>> =
        truth.snapshots[start + 1..=start + n].iter().map(|s| s.temperatures.clone()).collect();
    let p = truth.params;
    let report = EvalReport::compute(
        &predicted,
        &reference,
        &truth.mesh,
        (p.t_cold, p.t_hot),
        start + 1,
        cfg.profile_y,
        &cfg.map_steps,
    )?;
    write(out.join("metrics.csv"), &report.metrics_csv())?;
    write(out.join("profile.csv"), &report.profile_csv())?;
    if let (Some(last_p), Some(last_t)) = (predicted.last(), reference.last()) {
        write_bytes(out.join("predicted_final.ppm"), &field_ppm(last_p, &truth.mesh, p.t_cold, p.t_hot, 8)?)?;
        write_bytes(out.join("truth_final.ppm"), &field_ppm(last_t, &truth.mesh, p.t_cold, p.t_hot, 8)?)?;
        let err = error_map(last_p, last_t)?;
        write_bytes(out.join("error_final.ppm"), &error_ppm(&err, &truth.mesh)?)?;
    }
    for (step, err) in &report.error_maps {
        write_bytes(out.join(format!("error_step{step}.ppm")), &error_ppm(err, &truth.mesh)?)?;
    }
    let (m, ms) = report.mse_mean_std();
    let (s, ss) = report.ssim_mean_std();
    println!("{} steps: MSE {m:.3e} +- {ms:.1e} K^2, SSIM {s:.4} +- {ss:.1e}", report.len());
    Ok(())
}
