//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use msgnn_core::autodiff::{ParamStore, Tape};
use msgnn_core::hierarchy::{CliquePartition, PoolMode, MAX_CLIQUE};
use msgnn_core::model::{ModelConfig, ModelGraph, MultiStageGnn};
use msgnn_core::{Matrix, SparseAdjacency};
use rand::Rng;

/// Erdos-Renyi graph with edge probability `p`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> SparseAdjacency {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    SparseAdjacency::from_edges(n, &edges).unwrap()
}

pub fn dense(adj: &SparseAdjacency) -> Vec<Vec<bool>> {
    let n = adj.n_nodes();
    let mut m = vec![vec![false; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        for &j in adj.neighbors(i) {
            row[j] = true;
        }
    }
    m
}

/// Checks that `partition` splits the nodes of `adj` into disjoint,
/// covering cliques of one to three nodes, consistent with its assignment.
pub fn check_partition(adj: &SparseAdjacency, partition: &CliquePartition) -> Result<(), String> {
    let n = adj.n_nodes();
    let a = dense(adj);
    let mut seen = vec![0usize; n];
    for (c, members) in partition.cliques().iter().enumerate() {
        if members.is_empty() || members.len() > MAX_CLIQUE {
            return Err(format!("clique {c} has {} members", members.len()));
        }
        for (x, &u) in members.iter().enumerate() {
            if u >= n {
                return Err(format!("clique {c} names node {u} of {n}"));
            }
            seen[u] += 1;
            if partition.assignment()[u] != c {
                return Err(format!("node {u} assigned to {} but listed in {c}", partition.assignment()[u]));
            }
            for &v in &members[x + 1..] {
                if !a[u][v] {
                    return Err(format!("clique {c}: {u} and {v} are not adjacent"));
                }
            }
        }
    }
    if let Some(u) = seen.iter().position(|&k| k != 1) {
        return Err(format!("node {u} appears in {} cliques", seen[u]));
    }
    Ok(())
}

/// Pooled adjacency by a double loop over clique pairs and their members.
/// Returns the dense off-diagonal matrix and the diagonal flags.
pub fn brute_pooled(adj: &SparseAdjacency, partition: &CliquePartition) -> (Vec<Vec<bool>>, Vec<bool>) {
    let a = dense(adj);
    let cliques = partition.cliques();
    let m = cliques.len();
    let mut out = vec![vec![false; m]; m];
    let mut diag = vec![false; m];
    for r in 0..m {
        for c in 0..m {
            let linked = cliques[r].iter().any(|&u| cliques[c].iter().any(|&v| u != v && a[u][v]));
            if r == c {
                diag[r] = linked || cliques[r].iter().any(|&u| adj.diagonal()[u]);
            } else {
                out[r][c] = linked;
            }
        }
    }
    (out, diag)
}

pub fn compare_pooled(pooled: &SparseAdjacency, partition: &CliquePartition, adj: &SparseAdjacency) -> Result<(), String> {
    let (expected, diag) = brute_pooled(adj, partition);
    if pooled.n_nodes() != expected.len() {
        return Err(format!("pooled graph has {} nodes, expected {}", pooled.n_nodes(), expected.len()));
    }
    if dense(pooled) != expected {
        return Err("pooled off-diagonal entries differ".into());
    }
    if pooled.diagonal() != diag.as_slice() {
        return Err("pooled diagonal flags differ".into());
    }
    Ok(())
}

/// Per-clique loop: pad each clique to three members by repeating the last
/// one and average, or take the plain mean.
pub fn naive_pool(features: &Matrix, partition: &CliquePartition, mode: PoolMode) -> Matrix {
    let c = features.cols();
    let mut out = Matrix::zeros(partition.n_cliques(), c);
    for (r, members) in partition.cliques().iter().enumerate() {
        let mut padded = members.clone();
        while padded.len() < 3 {
            padded.push(*members.last().unwrap());
        }
        for k in 0..c {
            let value = match (mode, members.len()) {
                (PoolMode::TrueMean, 1) => features[(members[0], k)],
                (PoolMode::TrueMean, 2) => (features[(members[0], k)] + features[(members[1], k)]) / 2.0,
                _ => (features[(padded[0], k)] + features[(padded[1], k)] + features[(padded[2], k)]) / 3.0,
            };
            out.row_mut(r)[k] = value;
        }
    }
    out
}

/// Windowed SSIM from raw moments (`E[xy] - E[x]E[y]`), uniform windows of
/// `min(8, dim)` at stride one.
pub fn reference_ssim(x: &[f64], y: &[f64], width: usize, height: usize) -> f64 {
    let (c1, c2) = (1e-4, 9e-4);
    let (ww, wh) = (8.min(width), 8.min(height));
    let n = (ww * wh) as f64;
    let mut scores = Vec::new();
    for top in 0..=height - wh {
        for left in 0..=width - ww {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in top..top + wh {
                for i in left..left + ww {
                    let (a, b) = (x[j * width + i], y[j * width + i]);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            scores.push(((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
        }
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// One-step MSE loss of `model` on `inputs` against `target`.
pub fn model_loss(
    model: &MultiStageGnn,
    store: &ParamStore,
    graph: &ModelGraph,
    inputs: &Matrix,
    target: &Matrix,
) -> f64 {
    let mut tape = Tape::new(store);
    let pred = model.predict(&mut tape, graph, inputs, 0.5).unwrap();
    let t = tape.constant(target.clone());
    let loss = tape.mse(pred, t).unwrap();
    tape.value(loss)[(0, 0)]
}

/// Largest relative difference between analytic and central-difference
/// gradients over every parameter entry.
pub fn gradient_check(
    model: &MultiStageGnn,
    store: &ParamStore,
    graph: &ModelGraph,
    inputs: &Matrix,
    target: &Matrix,
    step: f64,
) -> f64 {
    let analytic = {
        let mut tape = Tape::new(store);
        let pred = model.predict(&mut tape, graph, inputs, 0.5).unwrap();
        let t = tape.constant(target.clone());
        let loss = tape.mse(pred, t).unwrap();
        tape.backward(loss).unwrap().param_grads(store)
    };
    let mut probe = store.clone();
    let ids: Vec<_> = store.ids().collect();
    let mut worst: f64 = 0.0;
    for (p, id) in ids.into_iter().enumerate() {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).as_slice()[k];
            probe.get_mut(id).as_mut_slice()[k] = orig + step;
            let up = model_loss(model, &probe, graph, inputs, target);
            probe.get_mut(id).as_mut_slice()[k] = orig - step;
            let down = model_loss(model, &probe, graph, inputs, target);
            probe.get_mut(id).as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[p].as_slice()[k];
            // Central differences carry roundoff near eps * loss / step (about 1e-10
            // here), so entries below 1e-5 are compared against that floor.
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Random model configuration small enough for exhaustive gradient checks.
pub fn random_small_config(rng: &mut impl Rng) -> ModelConfig {
    use msgnn_core::model::{Fusion, Prediction};
    ModelConfig {
        latent_width: rng.random_range(2..=3),
        n_levels: rng.random_range(1..=3),
        layers_per_stage: 1,
        fusion: if rng.random() { Fusion::Concat } else { Fusion::Sum },
        mlp_hidden_layers: 0,
        use_layer_norm: rng.random(),
        residual_connections: rng.random(),
        prediction: if rng.random() { Prediction::Residual } else { Prediction::Absolute },
        pool_mode: if rng.random() { PoolMode::Padded } else { PoolMode::TrueMean },
        ..Default::default()
    }
}

pub mod checks;

/// Random permutation of `0..n`.
pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
