use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::matrix::Matrix;

/// Affine layers with ReLU between them, optionally followed by layer
/// normalisation of the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    norm: Option<(ParamId, ParamId)>,
    widths: Vec<usize>,
}

impl Mlp {
    /// `widths` lists input, hidden and output sizes, e.g. `[4, 128, 128]`.
    /// Weights and biases are uniform in `±1/sqrt(fan_in)`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        layer_norm: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let limit = 1.0 / (w[0] as f64).sqrt();
                let weight = store.add_uniform(format!("{name}.w{k}"), w[0], w[1], limit, rng);
                let bias = store.add_uniform(format!("{name}.b{k}"), 1, w[1], limit, rng);
                (weight, bias)
            })
            .collect();
        let out = *widths.last().unwrap();
        let norm = layer_norm.then(|| {
            (
                store.add(format!("{name}.ln_gain"), Matrix::filled(1, out, 1.0)),
                store.add(format!("{name}.ln_bias"), Matrix::zeros(1, out)),
            )
        });
        Self { layers, norm, widths: widths.to_vec() }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn norm(&self) -> Option<(ParamId, ParamId)> {
        self.norm
    }

    /// Records the forward pass of this MLP on `input` (one row per item).
    pub fn apply(&self, tape: &mut Tape<'_>, input: Var) -> Result<Var> {
        let mut x = input;
        let last = self.layers.len() - 1;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (tape.param(w), tape.param(b));
            x = tape.matmul(x, w)?;
            x = tape.add_bias(x, b)?;
            if k < last {
                x = tape.relu(x);
            }
        }
        if let Some((gain, bias)) = self.norm {
            let (gain, bias) = (tape.param(gain), tape.param(bias));
            x = tape.layer_norm(x, gain, bias)?;
        }
        Ok(x)
    }
}
