use crate::error::{parse_value as parse, Error, Result};
use crate::hierarchy::PoolMode;
use crate::mesh::Neighborhood;

/// Node input width: temperature plus a three-way role one-hot.
pub const INPUT_WIDTH: usize = 4;
/// Raw edge geometry width: displacement `(dx, dy)` and its length.
pub const EDGE_INPUT_WIDTH: usize = 3;

/// How an unpooled coarse latent is merged with the skip latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fusion {
    /// Concatenate and map back to the latent width with an MLP.
    #[default]
    Concat,
    Sum,
}

/// What the decoder output means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Prediction {
    /// Decoder output is the next temperature (normalised).
    Absolute,
    /// Decoder output is a scaled increment added to the current temperature.
    #[default]
    Residual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub latent_width: usize,
    pub n_levels: usize,
    pub layers_per_stage: usize,
    pub fusion: Fusion,
    /// Hidden layers per MLP, each `latent_width` wide.
    pub mlp_hidden_layers: usize,
    pub use_layer_norm: bool,
    /// Skip connections around the edge and node updates.
    pub residual_connections: bool,
    pub prediction: Prediction,
    pub pool_mode: PoolMode,
    /// Mesh connectivity the hierarchy is built on.
    pub neighborhood: Neighborhood,
    /// Level `k` of the hierarchy is partitioned with `hierarchy_seed + k`.
    pub hierarchy_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_width: 128,
            n_levels: 3,
            layers_per_stage: 4,
            fusion: Fusion::Concat,
            mlp_hidden_layers: 1,
            use_layer_norm: true,
            residual_connections: true,
            prediction: Prediction::Residual,
            pool_mode: PoolMode::Padded,
            neighborhood: Neighborhood::Moore8,
            hierarchy_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_width == 0 {
            return Err(Error::InvalidConfig("latent_width must be positive".into()));
        }
        if self.n_levels == 0 {
            return Err(Error::InvalidConfig("n_levels must be >= 1".into()));
        }
        Ok(())
    }

    /// Input, hidden and output widths for an MLP of this model.
    pub(crate) fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(std::iter::repeat_n(self.latent_width, self.mlp_hidden_layers));
        w.push(output);
        w
    }

    /// `key=value` lines, parseable by [`ModelConfig::set`].
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("latent_width", self.latent_width.to_string()),
            ("n_levels", self.n_levels.to_string()),
            ("layers_per_stage", self.layers_per_stage.to_string()),
            ("fusion", self.fusion.to_string()),
            ("mlp_hidden_layers", self.mlp_hidden_layers.to_string()),
            ("use_layer_norm", self.use_layer_norm.to_string()),
            ("residual_connections", self.residual_connections.to_string()),
            ("prediction", self.prediction.to_string()),
            ("pool_mode", self.pool_mode.to_string()),
            ("neighborhood", self.neighborhood.to_string()),
            ("hierarchy_seed", self.hierarchy_seed.to_string()),
        ]
    }

    /// Sets one field by key. Returns `Ok(false)` for keys this struct does
    /// not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        match key {
            "latent_width" => self.latent_width = parse(key, v)?,
            "n_levels" => self.n_levels = parse(key, v)?,
            "layers_per_stage" => self.layers_per_stage = parse(key, v)?,
            "fusion" => self.fusion = v.parse()?,
            "mlp_hidden_layers" => self.mlp_hidden_layers = parse(key, v)?,
            "use_layer_norm" => self.use_layer_norm = parse(key, v)?,
            "residual_connections" => self.residual_connections = parse(key, v)?,
            "prediction" => self.prediction = v.parse()?,
            "pool_mode" => self.pool_mode = v.parse()?,
            "neighborhood" => self.neighborhood = v.parse()?,
            "hierarchy_seed" => self.hierarchy_seed = parse(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}


impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "concat" => Ok(Self::Concat),
            "sum" => Ok(Self::Sum),
            other => Err(Error::Parse(format!("unknown fusion '{other}'"))),
        }
    }
}

impl std::fmt::Display for Fusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Concat => "concat",
            Self::Sum => "sum",
        })
    }
}

impl std::str::FromStr for Prediction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "absolute" => Ok(Self::Absolute),
            "residual" => Ok(Self::Residual),
            other => Err(Error::Parse(format!("unknown prediction mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Prediction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Absolute => "absolute",
            Self::Residual => "residual",
        })
    }
}
