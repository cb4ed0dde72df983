//! Property checks shared by the integration tests and the acceptance
//! runner. Each returns a one-line summary on success.

use std::sync::Arc;

use msgnn_core::autodiff::{ParamStore, Tape, Var};
use msgnn_core::hierarchy::{
    partition_cliques, pool_features, pooled_adjacency, unpool_features, CliqueIndexMatrix, CliquePartition,
    PoolMode,
};
use msgnn_core::metrics::{mse, ssim};
use msgnn_core::mesh::grid_adjacency;
use msgnn_core::model::{ModelConfig, ModelGraph, MultiStageGnn};
use msgnn_core::solver::{rayleigh_number, Solver, SolverConfig};
use msgnn_core::{build_hierarchy, CavityMesh, Matrix, Neighborhood};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub type Check = Result<String, String>;

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn check_hierarchy_levels(adj: &SparseAdjacency, n_levels: usize, seed: u64) -> Result<usize, String> {
    let h = build_hierarchy(adj, n_levels, seed).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for k in 0..h.n_levels() {
        let level = h.level(k);
        if let Some(p) = &level.pooling {
            check_partition(&level.adjacency, &p.partition)?;
            compare_pooled(&h.level(k + 1).adjacency, &p.partition, &level.adjacency)?;
            checked += 1;
        }
    }
    Ok(checked)
}

/// Partitions and pooled adjacencies of random graphs and of every
/// structured mesh with `n` in {4, 8, 16} and aspect ratio 1 to 4.
pub fn hierarchy_oracles(n_random: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut partitions = 0;
    for trial in 0..n_random {
        let n = rng.random_range(1..=200);
        let p = rng.random_range(0.0..0.3f64).powi(2);
        let adj = random_graph(&mut rng, n, p);
        let part = partition_cliques(&adj, rng.random());
        check_partition(&adj, &part).map_err(|e| format!("random graph {trial}: {e}"))?;
        let pooled = pooled_adjacency(&adj, &part).map_err(|e| e.to_string())?;
        compare_pooled(&pooled, &part, &adj).map_err(|e| format!("random graph {trial}: {e}"))?;
        partitions += 1;
        partitions += check_hierarchy_levels(&adj, 3, rng.random()).map_err(|e| format!("random graph {trial}: {e}"))?;
    }
    let mut meshes = 0;
    for n in [4usize, 8, 16] {
        for ar in 1..=4usize {
            for nb in [Neighborhood::Moore8, Neighborhood::Face4] {
                let adj = grid_adjacency(ar * n, n, nb);
                partitions += check_hierarchy_levels(&adj, 4, (n * 10 + ar) as u64)
                    .map_err(|e| format!("{}x{n} mesh ({nb:?}): {e}", ar * n))?;
                meshes += 1;
            }
        }
    }
    Ok(format!("{n_random} random graphs and {meshes} meshes, {partitions} partitions checked"))
}

/// Random partition of `0..n` into cliques of one to three nodes (no graph
/// needed for pooling).
pub fn random_partition(rng: &mut impl Rng, n: usize) -> CliquePartition {
    let order = random_permutation(rng, n);
    let mut cliques = Vec::new();
    let mut rest = &order[..];
    while !rest.is_empty() {
        let k = rng.random_range(1..=3).min(rest.len());
        cliques.push(rest[..k].to_vec());
        rest = &rest[k..];
    }
    CliquePartition::from_cliques(cliques, n, 0).unwrap()
}

/// Fast pooling against the per-clique loop, and pool after unpool.
pub fn pooling_matches_naive(n_pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..n_pairs {
        let n = rng.random_range(1..=150);
        let c = rng.random_range(1..=6);
        let scale = 10f64.powi(rng.random_range(-3..=3));
        let features = random_matrix(&mut rng, n, c).map(|v| v * scale);
        let part = random_partition(&mut rng, n);
        let index = CliqueIndexMatrix::from_partition(&part);
        for mode in [PoolMode::Padded, PoolMode::TrueMean] {
            let fast = pool_features(&features, &index, mode).map_err(|e| e.to_string())?;
            let naive = naive_pool(&features, &part, mode);
            let same = fast.as_slice().iter().zip(naive.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same || fast.shape() != naive.shape() {
                return Err(format!("pair {trial} ({mode}): fast and naive pooling differ"));
            }
            let coarse = random_matrix(&mut rng, part.n_cliques(), c).map(|v| v * scale);
            let round = pool_features(&unpool_features(&coarse, &part, n).unwrap(), &index, mode).unwrap();
            for (a, b) in round.as_slice().iter().zip(coarse.as_slice()) {
                if (a - b).abs() > b.abs() * f64::EPSILON {
                    return Err(format!("pair {trial} ({mode}): unpool then pool moved {b} to {a}"));
                }
            }
        }
    }
    Ok(format!("{n_pairs} pairs bit-identical, round trips within 1 ulp"))
}

/// Gradient checks on random small models, each on a tiny mesh.
pub fn gradient_checks(n_configs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < n_configs {
        let mut cfg = random_small_config(&mut rng);
        let mesh = CavityMesh::new(rng.random_range(1..=2), 4, 1.0).unwrap();
        let graph = loop {
            match ModelGraph::for_mesh(&mesh, &cfg) {
                Ok(g) => break g,
                Err(_) => cfg.n_levels -= 1,
            }
        };
        let mut store = ParamStore::new();
        let model = MultiStageGnn::new(cfg.clone(), &mut store, rng.random()).unwrap();
        if store.n_scalars() > 500 {
            continue;
        }
        let inputs = random_matrix(&mut rng, mesh.n_nodes(), 4);
        let target = random_matrix(&mut rng, mesh.n_nodes(), 1);
        let err = gradient_check(&model, &store, &graph, &inputs, &target, 1e-6);
        if !(err < 1e-4) {
            return Err(format!(
                "config {done} ({} levels, width {}, {} params): relative error {err:e}",
                cfg.n_levels,
                cfg.latent_width,
                store.n_scalars()
            ));
        }
        worst = worst.max(err);
        done += 1;
    }
    Ok(format!("{n_configs} configs, max relative error {worst:.2e}"))
}

/// `<A x, y>` recorded on a tape as a sum of `y_j^T (A x) e_j` terms, so its
/// gradient with respect to `x` is `A^T y`.
fn inner_product(tape: &mut Tape<'_>, ax: Var, y: &Matrix) -> Var {
    let (m, c) = y.shape();
    let mut total = None;
    for j in 0..c {
        let yj = tape.constant(Matrix::from_vec(1, m, y.col_values(j)).unwrap());
        let mut ej = Matrix::zeros(c, 1);
        ej[(j, 0)] = 1.0;
        let ej = tape.constant(ej);
        let col = tape.matmul(ax, ej).unwrap();
        let term = tape.matmul(yj, col).unwrap();
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term).unwrap(),
        });
    }
    total.unwrap()
}

fn adjoint_gap(x: &Matrix, y: &Matrix, op: impl Fn(&mut Tape<'_>, Var) -> Var) -> f64 {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let xv = tape.constant(x.clone());
    let ax = op(&mut tape, xv);
    let f = inner_product(&mut tape, ax, y);
    let lhs = tape.value(f)[(0, 0)];
    let grads = tape.backward(f).unwrap();
    let rhs = x.dot(grads.get(xv).unwrap());
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

/// `<A x, y> = <x, A^T y>` for pooling, unpooling and segment sums, with the
/// transpose taken from the reverse sweep.
pub fn adjoint_checks(n_trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_trials {
        let n = rng.random_range(1..=80);
        let c = rng.random_range(1..=4);
        let part = random_partition(&mut rng, n);
        let m = part.n_cliques();
        let index = Arc::new(CliqueIndexMatrix::from_partition(&part));
        let assignment: Arc<[usize]> = Arc::from(part.assignment().to_vec());
        for mode in [PoolMode::Padded, PoolMode::TrueMean] {
            let (x, y) = (random_matrix(&mut rng, n, c), random_matrix(&mut rng, m, c));
            worst = worst.max(adjoint_gap(&x, &y, |t, v| t.pool(v, index.clone(), mode).unwrap()));
        }
        let (x, y) = (random_matrix(&mut rng, m, c), random_matrix(&mut rng, n, c));
        worst = worst.max(adjoint_gap(&x, &y, |t, v| t.unpool(v, assignment.clone()).unwrap()));

        let n_edges = rng.random_range(0..=200);
        let n_out = rng.random_range(1..=50);
        let dest: Arc<[usize]> = (0..n_edges).map(|_| rng.random_range(0..n_out)).collect();
        let (x, y) = (random_matrix(&mut rng, n_edges, c), random_matrix(&mut rng, n_out, c));
        worst = worst.max(adjoint_gap(&x, &y, |t, v| t.scatter_add(v, dest.clone(), n_out).unwrap()));
    }
    if worst < 1e-12 {
        Ok(format!("{n_trials} trials, max adjoint gap {worst:.2e}"))
    } else {
        Err(format!("adjoint gap {worst:e}"))
    }
}

fn forward_output(model: &MultiStageGnn, store: &ParamStore, graph: &ModelGraph, inputs: &Matrix) -> (Matrix, Matrix) {
    let mut tape = Tape::new(store);
    let x = tape.constant(inputs.clone());
    let fused = model.multistage_forward(&mut tape, graph, x).unwrap();
    let current = tape.constant(Matrix::column(&inputs.col_values(0)));
    let out = model.decode(&mut tape, fused, current, 0.3).unwrap();
    (tape.value(fused).clone(), tape.value(out).clone())
}

/// Relabels every level of a three-level hierarchy on a 16x16 mesh and
/// compares the permuted outputs of the multi-stage forward pass.
pub fn permutation_equivariance(n_relabelings: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = CavityMesh::new(1, 16, 1.0).unwrap();
    let cfg = ModelConfig { latent_width: 8, n_levels: 3, layers_per_stage: 2, ..Default::default() };
    let hierarchy = build_hierarchy(&mesh.adjacency(cfg.neighborhood), 3, seed).unwrap();
    if hierarchy.n_levels() != 3 {
        return Err("hierarchy is shallower than three levels".into());
    }
    let graph = ModelGraph::new(&hierarchy, mesh.cell_centers(), mesh.spacing()).unwrap();
    let mut store = ParamStore::new();
    let model = MultiStageGnn::new(cfg, &mut store, seed).unwrap();
    let inputs = random_matrix(&mut rng, mesh.n_nodes(), 4);
    let (latent, out) = forward_output(&model, &store, &graph, &inputs);

    let mut drift: f64 = 0.0;
    for _ in 0..n_relabelings {
        let perms: Vec<Vec<usize>> = hierarchy.node_counts().iter().map(|&n| random_permutation(&mut rng, n)).collect();
        let relabeled = hierarchy.relabeled(&perms).map_err(|e| e.to_string())?;
        let p = &perms[0];
        let mut positions = vec![[0.0; 2]; mesh.n_nodes()];
        let mut permuted_inputs = Matrix::zeros(mesh.n_nodes(), 4);
        for i in 0..mesh.n_nodes() {
            positions[p[i]] = mesh.cell_centers()[i];
            permuted_inputs.row_mut(p[i]).copy_from_slice(inputs.row(i));
        }
        let g2 = ModelGraph::new(&relabeled, &positions, mesh.spacing()).unwrap();
        let (latent2, out2) = forward_output(&model, &store, &g2, &permuted_inputs);
        for i in 0..mesh.n_nodes() {
            for (a, b) in latent.row(i).iter().zip(latent2.row(p[i])) {
                drift = drift.max((a - b).abs());
            }
            drift = drift.max((out[(i, 0)] - out2[(p[i], 0)]).abs());
        }
    }
    if drift <= 1e-10 {
        Ok(format!("{n_relabelings} relabelings, max drift {drift:.2e}"))
    } else {
        Err(format!("drift {drift:e} exceeds 1e-10"))
    }
}

/// `mse(x, x) = 0`, `ssim(x, x) = 1` exactly, and windowed SSIM against
/// the raw-moment reference.
pub fn metric_identities(n_pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..n_pairs {
        let mesh = CavityMesh::new(rng.random_range(1..=4), rng.random_range(4..=20), 1.0).unwrap();
        let (lo, hi) = (300.0, 300.0 + rng.random_range(0.05..2.0));
        let noise = rng.random_range(0.0..0.5) * (hi - lo);
        let x: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random_range(lo..hi)).collect();
        let y: Vec<f64> = x.iter().map(|&v| v + rng.random_range(-noise..=noise)).collect();
        if mse(&x, &x).unwrap() != 0.0 {
            return Err(format!("pair {trial}: mse(x, x) != 0"));
        }
        let self_ssim = ssim(&x, &x, &mesh, lo, hi).unwrap();
        if self_ssim != 1.0 {
            return Err(format!("pair {trial}: ssim(x, x) = {self_ssim:e}"));
        }
        let norm = |f: &[f64]| -> Vec<f64> { f.iter().map(|&v| (v - lo) / (hi - lo)).collect() };
        let expected = reference_ssim(&norm(&x), &norm(&y), mesh.nx(), mesh.ny());
        let got = ssim(&x, &y, &mesh, lo, hi).unwrap();
        worst = worst.max((got - expected).abs());
    }
    if worst <= 1e-9 {
        Ok(format!("{n_pairs} pairs, max ssim deviation {worst:.2e}"))
    } else {
        Err(format!("ssim deviates from the reference by {worst:e}"))
    }
}

/// Linear conduction profile at the cell centres, hot wall at the bottom.
pub fn conduction_profile(cfg: &SolverConfig) -> Vec<f64> {
    let mesh = CavityMesh::new(cfg.aspect_ratio, cfg.cells_per_height, cfg.height).unwrap();
    mesh.cell_centers().iter().map(|c| cfg.t_hot - cfg.delta_t() * c[1] / cfg.height).collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Steps for the slowest conduction mode to decay by `e^-decay`.
fn diffusive_steps(cfg: &SolverConfig, decay: f64) -> u64 {
    let t = decay * cfg.height * cfg.height / (std::f64::consts::PI.powi(2) * cfg.alpha);
    (t / cfg.time_step()).ceil() as u64
}

/// With gravity off the temperature relaxes to the linear profile.
pub fn conduction_steady_state(aspect_ratio: u32, cells_per_height: u32) -> Check {
    let cfg = SolverConfig { g: 0.0, aspect_ratio, cells_per_height, ..Default::default() };
    let solver = Solver::new(cfg.clone()).map_err(|e| e.to_string())?;
    let mut state = solver.initial_state(0);
    let steps = diffusive_steps(&cfg, 25.0);
    let mut last_change = f64::INFINITY;
    for _ in 0..steps {
        let before = state.t.clone();
        solver.step(&mut state).map_err(|e| e.to_string())?;
        last_change = linf(&before, &state.t);
    }
    let err = linf(&state.t, &conduction_profile(&cfg));
    let summary = format!(
        "{}x{} grid, {steps} steps: L-inf error {err:.2e}, last change {last_change:.1e}",
        aspect_ratio * cells_per_height,
        cells_per_height
    );
    if err < 1e-6 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

/// Statistics gathered while stepping a buoyant run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunDiagnostics {
    pub steps: u64,
    pub max_divergence: f64,
    pub min_temperature: f64,
    pub max_temperature: f64,
    pub max_coefficient: f64,
    pub peak_kinetic_energy: f64,
    pub final_kinetic_energy: f64,
    pub final_profile_error: f64,
}

/// Steps `cfg` from the seeded state, recording divergence, temperature
/// bounds and kinetic energy after every step.
pub fn diagnose_run(cfg: &SolverConfig, seed: u64, steps: u64) -> Result<RunDiagnostics, String> {
    let solver = Solver::new(cfg.clone()).map_err(|e| e.to_string())?;
    let h = solver.spacing();
    let mut state = solver.initial_state(seed);
    let mut d = RunDiagnostics {
        steps,
        min_temperature: f64::INFINITY,
        max_temperature: f64::NEG_INFINITY,
        ..Default::default()
    };
    for _ in 0..steps {
        let stats = solver.step(&mut state).map_err(|e| e.to_string())?;
        let (lo, hi) = state.temperature_range();
        let ke = state.kinetic_energy(h);
        d.max_divergence = d.max_divergence.max(state.max_divergence(h));
        d.min_temperature = d.min_temperature.min(lo);
        d.max_temperature = d.max_temperature.max(hi);
        d.max_coefficient = d.max_coefficient.max(stats.max_coefficient);
        d.peak_kinetic_energy = d.peak_kinetic_energy.max(ke);
        d.final_kinetic_energy = ke;
    }
    d.final_profile_error = linf(&state.t, &conduction_profile(cfg));
    Ok(d)
}

fn invariants_hold(cfg: &SolverConfig, d: &RunDiagnostics) -> Result<(), String> {
    if d.max_divergence > 1e-8 {
        return Err(format!("divergence reached {:e}", d.max_divergence));
    }
    if d.min_temperature < cfg.t_cold || d.max_temperature > cfg.t_hot {
        return Err(format!(
            "temperature left [{}, {}]: observed [{}, {}]",
            cfg.t_cold, cfg.t_hot, d.min_temperature, d.max_temperature
        ));
    }
    if d.max_coefficient > 1.0 {
        return Err(format!("temperature update coefficient sum {}", d.max_coefficient));
    }
    Ok(())
}

/// Divergence and maximum principle at every step of a convecting and a
/// sub-critical run, convection onset in the first and decay in the second.
pub fn convection_onset(cells_per_height: u32, onset_steps: u64) -> Check {
    let hot = SolverConfig { cells_per_height, ..Default::default() };
    let d_hot = diagnose_run(&hot, 0, onset_steps)?;
    invariants_hold(&hot, &d_hot).map_err(|e| format!("Ra {:.0}: {e}", rayleigh_number(&hot)))?;
    if !(d_hot.peak_kinetic_energy > 1e-10) {
        return Err(format!(
            "Ra {:.0}: kinetic energy peaked at {:e} in {onset_steps} steps",
            rayleigh_number(&hot),
            d_hot.peak_kinetic_energy
        ));
    }
    let cold = SolverConfig { t_hot: 300.1, cells_per_height, ..Default::default() };
    let d_cold = diagnose_run(&cold, 0, diffusive_steps(&cold, 25.0))?;
    invariants_hold(&cold, &d_cold).map_err(|e| format!("Ra {:.0}: {e}", rayleigh_number(&cold)))?;
    if !(d_cold.final_kinetic_energy < 1e-10 && d_cold.final_kinetic_energy < d_cold.peak_kinetic_energy) {
        return Err(format!(
            "Ra {:.0}: kinetic energy ended at {:e} (peak {:e})",
            rayleigh_number(&cold),
            d_cold.final_kinetic_energy,
            d_cold.peak_kinetic_energy
        ));
    }
    if d_cold.final_profile_error > 1e-6 {
        return Err(format!(
            "Ra {:.0}: final field is {:e} from conduction",
            rayleigh_number(&cold),
            d_cold.final_profile_error
        ));
    }
    Ok(format!(
        "Ra {:.0}: peak KE {:.2e}, max div {:.1e}, T in [{:.4}, {:.4}]; Ra {:.0}: KE {:.1e} -> {:.1e} after {} steps, {:.1e} K from conduction",
        rayleigh_number(&hot),
        d_hot.peak_kinetic_energy,
        d_hot.max_divergence.max(d_cold.max_divergence),
        d_hot.min_temperature,
        d_hot.max_temperature,
        rayleigh_number(&cold),
        d_cold.peak_kinetic_energy,
        d_cold.final_kinetic_energy,
        d_cold.steps,
        d_cold.final_profile_error
    ))
}
