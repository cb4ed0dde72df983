//! Dataset assembly, the training loop, autoregressive rollout and
//! checkpoint I/O.

mod normalization;

pub use normalization::NormalizationStats;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Adam, AdamConfig, Checkpoint, ParamStore, Tape};
use crate::error::{parse_value as parse, Error, Result};
use crate::exec::{self, ExecMode};
use crate::matrix::Matrix;
use crate::mesh::NodeRole;
use crate::model::{ModelConfig, ModelGraph, MultiStageGnn, INPUT_WIDTH};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate after the last epoch as a fraction of the initial one;
    /// the rate decays geometrically in between.
    pub lr_final_factor: f64,
    /// Standard deviation of Gaussian noise added to input temperatures,
    /// in normalised units. Zero disables it.
    pub noise_std: f64,
    pub exec: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-3,
            lr_final_factor: 1.0,
            noise_std: 1e-2,
            exec: ExecMode::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(self.lr_final_factor > 0.0 && self.lr_final_factor.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad lr_final_factor {}", self.lr_final_factor)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad noise_std {}", self.noise_std)));
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (zero-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.learning_rate * self.lr_final_factor.powf(frac)
    }

    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("lr_final_factor", self.lr_final_factor.to_string()),
            ("noise_std", self.noise_std.to_string()),
            ("parallel", (self.exec == ExecMode::Parallel).to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "lr_final_factor" => self.lr_final_factor = parse(key, value)?,
            "noise_std" => self.noise_std = parse(key, value)?,
            "parallel" => {
                let on: bool = parse(key, value)?;
                self.exec = if on { ExecMode::Parallel } else { ExecMode::Sequential };
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// One training pair: frame `frame` of trajectory `trajectory` and the frame
/// after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub trajectory: usize,
    pub frame: usize,
}

/// Trajectories with their normalised frames and cached model graphs (one
/// per distinct mesh).
#[derive(Debug, Clone)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    graphs: Vec<Arc<ModelGraph>>,
    /// Per trajectory, per frame: normalised temperatures.
    normalized: Vec<Vec<Vec<f64>>>,
    stats: NormalizationStats,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Uses statistics computed from `trajectories` themselves.
    pub fn new(trajectories: Vec<Trajectory>, model: &ModelConfig) -> Result<Self> {
        let stats = NormalizationStats::from_trajectories(&trajectories)?;
        Self::with_stats(trajectories, model, stats)
    }

    pub fn with_stats(
        trajectories: Vec<Trajectory>,
        model: &ModelConfig,
        stats: NormalizationStats,
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidConfig("dataset needs at least one trajectory".into()));
        }
        stats.validate()?;
        let mut cache: HashMap<(u32, u32, u64), Arc<ModelGraph>> = HashMap::new();
        let mut graphs = Vec::with_capacity(trajectories.len());
        for traj in &trajectories {
            traj.validate()?;
            let m = &traj.mesh;
            let key = (m.aspect_ratio(), m.cells_per_height(), m.height().to_bits());
            let graph = match cache.get(&key) {
                Some(g) => g.clone(),
                None => {
                    let g = Arc::new(ModelGraph::for_mesh(m, model)?);
                    cache.insert(key, g.clone());
                    g
                }
            };
            graphs.push(graph);
        }
        let normalized = trajectories
            .iter()
            .map(|t| {
                t.snapshots
                    .iter()
                    .map(|s| s.temperatures.iter().map(|&v| stats.normalize(v)).collect())
                    .collect()
            })
            .collect();
        let samples = trajectories
            .iter()
            .enumerate()
            .flat_map(|(k, t)| (0..t.len().saturating_sub(1)).map(move |f| Sample { trajectory: k, frame: f }))
            .collect();
        Ok(Self { trajectories, graphs, normalized, stats, samples })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn graph(&self, trajectory: usize) -> &Arc<ModelGraph> {
        &self.graphs[trajectory]
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn n_distinct_graphs(&self) -> usize {
        let mut ptrs: Vec<*const ModelGraph> = self.graphs.iter().map(Arc::as_ptr).collect();
        ptrs.sort();
        ptrs.dedup();
        ptrs.len()
    }

    fn target(&self, s: Sample) -> Matrix {
        Matrix::column(&self.normalized[s.trajectory][s.frame + 1])
    }

    fn inputs(&self, s: Sample, noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>) -> Matrix {
        let temps = &self.normalized[s.trajectory][s.frame];
        let mut x = node_inputs(temps, &self.trajectories[s.trajectory].roles);
        if let Some((dist, rng)) = noise {
            for i in 0..x.rows() {
                x[(i, 0)] += dist.sample(rng);
            }
        }
        x
    }
}

/// `N x 4` model inputs: normalised temperature then role one-hot.
pub fn node_inputs(normalized: &[f64], roles: &[NodeRole]) -> Matrix {
    let mut x = Matrix::zeros(normalized.len(), INPUT_WIDTH);
    for (i, (&t, role)) in normalized.iter().zip(roles).enumerate() {
        let row = x.row_mut(i);
        row[0] = t;
        row[1..].copy_from_slice(&role.one_hot());
    }
    x
}

/// Independent stream per (seed, epoch, sample) so noise does not depend on
/// scheduling.
fn sample_rng(seed: u64, epoch: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) ^ sample as u64);
    rng
}

/// Loss and parameter gradients of one sample.
fn sample_gradients(
    model: &MultiStageGnn,
    store: &ParamStore,
    data: &Dataset,
    sample: Sample,
    inputs: &Matrix,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new(store);
    let pred = model.predict(&mut tape, data.graph(sample.trajectory), inputs, data.stats.residual_scale())?;
    let target = tape.constant(data.target(sample));
    let loss = tape.mse(pred, target)?;
    let value = tape.value(loss)[(0, 0)];
    let grads = tape.backward(loss)?;
    Ok((value, grads.param_grads(store)))
}

/// Model, trained parameters and per-epoch mean losses.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MultiStageGnn,
    pub params: ParamStore,
    pub stats: NormalizationStats,
    pub loss_curve: Vec<f64>,
}

/// Initialises a model from `seed` and trains it on one-step pairs.
pub fn train(
    data: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut params = ParamStore::new();
    let model = MultiStageGnn::new(model_cfg.clone(), &mut params, seed)?;
    let loss_curve = train_params(&model, &mut params, data, train_cfg, seed)?;
    Ok(TrainOutcome { model, params, stats: *data.stats(), loss_curve })
}

/// Trains existing parameters in place; returns per-epoch mean losses.
///
/// Each minibatch evaluates its samples independently (possibly in
/// parallel), then averages losses and gradients in sample order before a
/// single Adam update, so results do not depend on the execution mode.
pub fn train_params(
    model: &MultiStageGnn,
    params: &mut ParamStore,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut adam = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() }, params);
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E_ED0F_0DE5);
    let noise = (cfg.noise_std > 0.0).then(|| Normal::new(0.0, cfg.noise_std).expect("checked std"));
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let store: &ParamStore = params;
            let results = exec::map(cfg.exec, batch, |&idx| {
                let sample = data.samples[idx];
                let inputs = match &noise {
                    Some(dist) => {
                        let mut rng = sample_rng(seed, epoch, idx);
                        data.inputs(sample, Some((dist, &mut rng)))
                    }
                    None => data.inputs(sample, None),
                };
                sample_gradients(model, store, data, sample, &inputs)
            });
            let mut total: Option<Vec<Matrix>> = None;
            let mut batch_loss = 0.0;
            for (result, &idx) in results.into_iter().zip(batch) {
                let (loss, grads) = result?;
                if !loss.is_finite() {
                    let s = data.samples[idx];
                    return Err(Error::NonFinite(format!(
                        "loss at epoch {epoch}, trajectory {} frame {}",
                        s.trajectory, s.frame
                    )));
                }
                batch_loss += loss;
                match &mut total {
                    Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                    None => total = Some(grads),
                }
            }
            let mut grads = total.expect("batches are non-empty");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale_assign(inv));
            adam.step_with_lr(params, &grads, lr)?;
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / order.len().max(1) as f64;
        log::debug!("epoch {epoch}: loss {mean:e} (lr {lr:e})");
        curve.push(mean);
    }
    Ok(curve)
}

/// Mean one-step loss (normalised units, no noise) over every sample.
pub fn one_step_loss(
    model: &MultiStageGnn,
    params: &ParamStore,
    data: &Dataset,
    mode: ExecMode,
) -> Result<f64> {
    let losses = exec::map(mode, &data.samples, |&s| -> Result<f64> {
        let mut tape = Tape::new(params);
        let pred = model.predict(&mut tape, data.graph(s.trajectory), &data.inputs(s, None), data.stats.residual_scale())?;
        let target = tape.constant(data.target(s));
        let loss = tape.mse(pred, target)?;
        Ok(tape.value(loss)[(0, 0)])
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / data.samples.len().max(1) as f64)
}

/// Loss of predicting "no change" for every sample, for comparison with
/// [`one_step_loss`].
pub fn persistence_loss(data: &Dataset) -> f64 {
    let mut total = 0.0;
    for &s in &data.samples {
        let a = &data.normalized[s.trajectory][s.frame];
        let b = &data.normalized[s.trajectory][s.frame + 1];
        total += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    }
    total / data.samples.len().max(1) as f64
}

/// Trained network together with everything needed to run it.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: MultiStageGnn,
    pub params: ParamStore,
    pub stats: NormalizationStats,
}

impl Predictor {
    pub fn from_outcome(outcome: &TrainOutcome) -> Self {
        Self { model: outcome.model.clone(), params: outcome.params.clone(), stats: outcome.stats }
    }

    /// Next temperatures in kelvin, without boundary clamping.
    pub fn predict_next(&self, graph: &ModelGraph, roles: &[NodeRole], temps: &[f64]) -> Result<Vec<f64>> {
        let normalized: Vec<f64> = temps.iter().map(|&t| self.stats.normalize(t)).collect();
        let inputs = node_inputs(&normalized, roles);
        let mut tape = Tape::new(&self.params);
        let pred = self.model.predict(&mut tape, graph, &inputs, self.stats.residual_scale())?;
        let out: Vec<f64> = tape.value(pred).as_slice().iter().map(|&z| self.stats.denormalize(z)).collect();
        if let Some(k) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("prediction at node {k}")));
        }
        Ok(out)
    }

    /// Feeds predictions back as inputs for `horizon` steps from frame
    /// `start`. Isothermal nodes are reset to the reference trajectory's
    /// values after every step. Returns frames `start + 1 ..= start +
    /// horizon` in kelvin.
    pub fn rollout(&self, traj: &Trajectory, start: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        if horizon == 0 {
            return Ok(Vec::new());
        }
        if start + horizon >= traj.len() {
            return Err(Error::InvalidConfig(format!(
                "rollout from frame {start} for {horizon} steps needs {} frames, trajectory has {}",
                start + horizon + 1,
                traj.len()
            )));
        }
        let graph = ModelGraph::for_mesh(&traj.mesh, self.model.config())?;
        self.rollout_on(&graph, traj, start, horizon)
    }

    /// [`Self::rollout`] with a prebuilt graph for the trajectory's mesh.
    pub fn rollout_on(
        &self,
        graph: &ModelGraph,
        traj: &Trajectory,
        start: usize,
        horizon: usize,
    ) -> Result<Vec<Vec<f64>>> {
        if start + horizon >= traj.len() && horizon > 0 {
            return Err(Error::InvalidConfig(format!(
                "rollout from frame {start} for {horizon} steps exceeds {} frames",
                traj.len()
            )));
        }
        let walls: Vec<usize> =
            (0..traj.n_nodes()).filter(|&i| traj.roles[i] == NodeRole::Isothermal).collect();
        let mut current = traj.snapshots[start].temperatures.clone();
        let mut out = Vec::with_capacity(horizon);
        for k in 1..=horizon {
            let mut next = self.predict_next(graph, &traj.roles, &current)?;
            let reference = &traj.snapshots[start + k].temperatures;
            for &i in &walls {
                next[i] = reference[i];
            }
            out.push(next.clone());
            current = next;
        }
        Ok(out)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut metadata = String::new();
        for (k, v) in self.model.config().to_key_values().into_iter().chain(self.stats.to_key_values()) {
            metadata.push_str(&format!("{k}={v}\n"));
        }
        Checkpoint { metadata, params: self.params.clone() }
    }

    /// Rebuilds the model from checkpoint metadata and loads its weights.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        let mut stats = NormalizationStats::default();
        for line in ckpt.metadata.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("checkpoint metadata line '{line}'")))?;
            if !cfg.set(k, v)? && !stats.set(k, v)? {
                return Err(Error::Malformed(format!("unknown checkpoint metadata key '{k}'")));
            }
        }
        stats.validate()?;
        let mut params = ParamStore::new();
        let model = MultiStageGnn::new(cfg, &mut params, 0)?;
        params.load_from(&ckpt.params)?;
        Ok(Self { model, params, stats })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}
