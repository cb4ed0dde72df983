//! Multi-resolution message-passing network for next-step temperature
//! prediction.
//!
//! Data flow: encode node inputs, run a block of message-passing layers at
//! each level while pooling down, run the coarsest block, unpool back up
//! fusing with the saved latents, then refine at full resolution and
//! decode. With one level this collapses to an encode/process/decode
//! network without any pooling.

mod config;
mod graph;

pub use config::{Fusion, ModelConfig, Prediction, EDGE_INPUT_WIDTH, INPUT_WIDTH};
pub use graph::{GraphLevel, ModelGraph};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Mlp, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One message-passing layer: edge update, message transform, node update.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    pub edge: Mlp,
    pub message: Mlp,
    pub node: Mlp,
}

impl GnnLayer {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = cfg.latent_width;
        let ln = cfg.use_layer_norm;
        Self {
            edge: Mlp::new(store, &format!("{name}.edge"), &cfg.widths(3 * w, w), ln, rng),
            message: Mlp::new(store, &format!("{name}.msg"), &cfg.widths(w, w), false, rng),
            node: Mlp::new(store, &format!("{name}.node"), &cfg.widths(2 * w, w), ln, rng),
        }
    }
}

/// Parameter handles of the whole network. Values live in a separate
/// [`ParamStore`] so the optimiser can update them while this stays
/// immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStageGnn {
    config: ModelConfig,
    encoder: Mlp,
    edge_encoder: Mlp,
    /// One block per level on the way down, then the refinement block.
    blocks: Vec<Vec<GnnLayer>>,
    /// Fusion MLP per non-coarsest level (concat fusion only).
    aggregators: Vec<Mlp>,
    decoder: Mlp,
}

impl MultiStageGnn {
    /// Registers freshly initialised parameters in `store`.
    pub fn new(config: ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.latent_width;
        let ln = config.use_layer_norm;
        let encoder = Mlp::new(store, "enc", &config.widths(INPUT_WIDTH, w), ln, &mut rng);
        let edge_encoder =
            Mlp::new(store, "edge_enc", &config.widths(EDGE_INPUT_WIDTH, w), ln, &mut rng);
        let blocks = (0..=config.n_levels)
            .map(|b| {
                (0..config.layers_per_stage)
                    .map(|l| GnnLayer::new(store, &format!("block{b}.layer{l}"), &config, &mut rng))
                    .collect()
            })
            .collect();
        let aggregators = match config.fusion {
            Fusion::Concat => (0..config.n_levels - 1)
                .map(|k| Mlp::new(store, &format!("agg{k}"), &config.widths(2 * w, w), ln, &mut rng))
                .collect(),
            Fusion::Sum => Vec::new(),
        };
        let decoder = Mlp::new(store, "dec", &config.widths(w, 1), false, &mut rng);
        Ok(Self { config, encoder, edge_encoder, blocks, aggregators, decoder })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn edge_encoder(&self) -> &Mlp {
        &self.edge_encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn blocks(&self) -> &[Vec<GnnLayer>] {
        &self.blocks
    }

    pub fn aggregators(&self) -> &[Mlp] {
        &self.aggregators
    }

    fn check_latent(&self, tape: &Tape<'_>, v: Var) {
        assert_eq!(tape.value(v).cols(), self.config.latent_width, "latent width drifted");
    }

    /// Maps `N x 4` node inputs to `N x latent_width`.
    pub fn encode(&self, tape: &mut Tape<'_>, node_inputs: Var) -> Result<Var> {
        let cols = tape.value(node_inputs).cols();
        if cols != INPUT_WIDTH {
            return Err(Error::ShapeMismatch(format!(
                "node inputs have {cols} columns, expected {INPUT_WIDTH}"
            )));
        }
        let h = self.encoder.apply(tape, node_inputs)?;
        self.check_latent(tape, h);
        Ok(h)
    }

    /// Initial edge latents of one level from its edge geometry.
    pub fn encode_edges(&self, tape: &mut Tape<'_>, level: &GraphLevel) -> Result<Var> {
        let geometry = tape.constant(level.edge_geometry.clone());
        self.edge_encoder.apply(tape, geometry)
    }

    /// One round of edge update, sum aggregation over receivers and node
    /// update. Returns the new node and edge latents.
    pub fn gnn_layer(
        &self,
        tape: &mut Tape<'_>,
        layer: &GnnLayer,
        h: Var,
        e: Var,
        level: &GraphLevel,
    ) -> Result<(Var, Var)> {
        let n_edges = tape.value(e).rows();
        if n_edges != level.n_edges() || tape.value(h).rows() != level.n_nodes {
            return Err(Error::ShapeMismatch(format!(
                "layer got {} nodes / {n_edges} edges, graph has {} / {}",
                tape.value(h).rows(),
                level.n_nodes,
                level.n_edges()
            )));
        }
        let h_recv = tape.gather_rows(h, level.receivers.clone())?;
        let h_send = tape.gather_rows(h, level.senders.clone())?;
        let edge_in = tape.concat_cols(&[h_recv, h_send, e])?;
        let mut e_new = layer.edge.apply(tape, edge_in)?;
        if self.config.residual_connections {
            e_new = tape.add(e_new, e)?;
        }
        let messages = layer.message.apply(tape, e_new)?;
        let aggregated = tape.scatter_add(messages, level.receivers.clone(), level.n_nodes)?;
        let node_in = tape.concat_cols(&[h, aggregated])?;
        let mut h_new = layer.node.apply(tape, node_in)?;
        if self.config.residual_connections {
            h_new = tape.add(h_new, h)?;
        }
        self.check_latent(tape, h_new);
        self.check_latent(tape, e_new);
        Ok((h_new, e_new))
    }

    fn run_block(
        &self,
        tape: &mut Tape<'_>,
        block: &[GnnLayer],
        mut h: Var,
        mut e: Var,
        level: &GraphLevel,
    ) -> Result<(Var, Var)> {
        for layer in block {
            (h, e) = self.gnn_layer(tape, layer, h, e, level)?;
        }
        Ok((h, e))
    }

    /// Full multi-resolution pass; returns the fused `N x latent_width`
    /// latent at the finest level.
    pub fn multistage_forward(
        &self,
        tape: &mut Tape<'_>,
        graph: &ModelGraph,
        node_inputs: Var,
    ) -> Result<Var> {
        let k_levels = self.config.n_levels;
        if graph.n_levels() != k_levels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {k_levels} levels, hierarchy has {}",
                graph.n_levels()
            )));
        }
        let mut h = self.encode(tape, node_inputs)?;
        let mut skips = Vec::with_capacity(k_levels - 1);
        let mut fine_edges = None;
        for k in 0..k_levels - 1 {
            let level = graph.level(k);
            let e = self.encode_edges(tape, level)?;
            let (h_out, e_out) = self.run_block(tape, &self.blocks[k], h, e, level)?;
            if k == 0 {
                fine_edges = Some(e_out);
            }
            skips.push(h_out);
            let index = level
                .pool_index
                .clone()
                .ok_or_else(|| Error::InvalidGraph(format!("level {k} has no pooling")))?;
            h = tape.pool(h_out, index, self.config.pool_mode)?;
        }
        let coarsest = graph.level(k_levels - 1);
        let e = self.encode_edges(tape, coarsest)?;
        let (mut h_coarse, e_out) = self.run_block(tape, &self.blocks[k_levels - 1], h, e, coarsest)?;
        if k_levels == 1 {
            fine_edges = Some(e_out);
        }
        for k in (0..k_levels - 1).rev() {
            let assignment = graph
                .level(k)
                .assignment
                .clone()
                .ok_or_else(|| Error::InvalidGraph(format!("level {k} has no assignment")))?;
            let up = tape.unpool(h_coarse, assignment)?;
            h_coarse = match self.config.fusion {
                Fusion::Concat => {
                    let cat = tape.concat_cols(&[skips[k], up])?;
                    self.aggregators[k].apply(tape, cat)?
                }
                Fusion::Sum => tape.add(skips[k], up)?,
            };
            self.check_latent(tape, h_coarse);
        }
        let e = fine_edges.expect("set on the first level");
        let (h, _) = self.run_block(tape, &self.blocks[k_levels], h_coarse, e, graph.level(0))?;
        Ok(h)
    }

    /// Encoder, one block and the refinement block on the finest graph,
    /// written without any pooling code. Matches [`Self::multistage_forward`]
    /// exactly for one-level models.
    pub fn single_stage_forward(
        &self,
        tape: &mut Tape<'_>,
        level: &GraphLevel,
        node_inputs: Var,
    ) -> Result<Var> {
        let h = self.encode(tape, node_inputs)?;
        let e = self.encode_edges(tape, level)?;
        let (h, e) = self.run_block(tape, &self.blocks[0], h, e, level)?;
        let (h, _) = self.run_block(tape, self.blocks.last().unwrap(), h, e, level)?;
        Ok(h)
    }

    /// Next normalised temperature per node. In residual mode the decoder
    /// output is multiplied by `residual_scale` and added to `current`.
    pub fn decode(
        &self,
        tape: &mut Tape<'_>,
        fused: Var,
        current: Var,
        residual_scale: f64,
    ) -> Result<Var> {
        let out = self.decoder.apply(tape, fused)?;
        match self.config.prediction {
            Prediction::Absolute => Ok(out),
            Prediction::Residual => {
                let delta = tape.scale(out, residual_scale);
                tape.add(current, delta)
            }
        }
    }

    /// Records a full prediction from an `N x 4` input matrix whose first
    /// column is the current normalised temperature.
    pub fn predict(
        &self,
        tape: &mut Tape<'_>,
        graph: &ModelGraph,
        inputs: &Matrix,
        residual_scale: f64,
    ) -> Result<Var> {
        let current = tape.constant(Matrix::column(&inputs.col_values(0)));
        let x = tape.constant(inputs.clone());
        let fused = self.multistage_forward(tape, graph, x)?;
        self.decode(tape, fused, current, residual_scale)
    }
}
