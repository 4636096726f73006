use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::{CoordNorm, GraphBatch};
use super::layer::EgnnLayer;
use super::nn::{Bound, Linear, Mlp, Parameterized};
use crate::error::{Error, Result};
use crate::molgraph::MolecularGraph;
use crate::numcore::{Matrix, SpectralState, Tape, Var};

/// Which linear layers carry spectral normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralScope {
    Off,
    /// Node and graph decoders only.
    Decoder,
    /// Every linear layer (ablation).
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgnnConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Atom feature width.
    pub node_features: usize,
    /// Edge feature width.
    pub edge_features: usize,
    /// Number of predicted properties.
    pub properties: usize,
    pub coord_norm: CoordNorm,
    pub spectral: SpectralScope,
}

impl Default for EgnnConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 32,
            node_features: 5,
            edge_features: 0,
            properties: 6,
            coord_norm: CoordNorm::InverseDegree,
            spectral: SpectralScope::Decoder,
        }
    }
}

impl EgnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.properties == 0 || self.node_features == 0 {
            return Err(Error::Config(format!(
                "layers, hidden, properties and node features must be positive: {self:?}"
            )));
        }
        if let CoordNorm::Fixed(c) = self.coord_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("coordinate normalization must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Equivariant property regressor: embedding, message-passing layers, a
/// per-node decoder, sum pooling over atoms, and a graph decoder to `ℝᴾ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgnnModel {
    pub config: EgnnConfig,
    pub embed: Linear,
    pub layers: Vec<EgnnLayer>,
    /// `H → H → H` (linear–SiLU–linear).
    pub node_decoder: Mlp,
    /// `H → H → P` (linear–SiLU–linear).
    pub graph_decoder: Mlp,
}

impl Parameterized for EgnnModel {
    fn linears(&self) -> Vec<&Linear> {
        let mut v = vec![&self.embed];
        for l in &self.layers {
            v.extend(l.linears());
        }
        v.extend(self.node_decoder.layers.iter());
        v.extend(self.graph_decoder.layers.iter());
        v
    }

    fn linears_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = vec![&mut self.embed];
        for l in &mut self.layers {
            v.extend(l.linears_mut());
        }
        v.extend(self.node_decoder.layers.iter_mut());
        v.extend(self.graph_decoder.layers.iter_mut());
        v
    }
}

impl EgnnModel {
    /// Random initialization. With spectral normalization enabled, the
    /// scoped layers are certified to `σ = 1` before returning.
    pub fn new<R: Rng + ?Sized>(config: EgnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut model = Self {
            embed: Linear::new(config.node_features, h, rng),
            layers: (0..config.layers).map(|_| EgnnLayer::new(h, config.edge_features, rng)).collect(),
            node_decoder: Mlp::new(&[h, h, h], false, rng),
            graph_decoder: Mlp::new(&[h, h, config.properties], false, rng),
            config,
        };
        model.attach_spectral_states(rng);
        if model.config.spectral != SpectralScope::Off {
            model.certify_spectral_norm()?;
        }
        Ok(model)
    }

    /// Every parameter zero; spectral normalization off.
    pub fn zeros(mut config: EgnnConfig) -> Result<Self> {
        config.validate()?;
        config.spectral = SpectralScope::Off;
        let h = config.hidden;
        Ok(Self {
            embed: Linear::zeros(config.node_features, h),
            layers: (0..config.layers).map(|_| EgnnLayer::zeros(h, config.edge_features)).collect(),
            node_decoder: Mlp::zeros(&[h, h, h], false),
            graph_decoder: Mlp::zeros(&[h, h, config.properties], false),
            config,
        })
    }

    fn attach_spectral_states<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let scope = self.config.spectral;
        let decoder_start = self.linears().len() - self.decoder_layer_count();
        for (k, l) in self.linears_mut().into_iter().enumerate() {
            let wanted = match scope {
                SpectralScope::Off => false,
                SpectralScope::Decoder => k >= decoder_start,
                SpectralScope::All => true,
            };
            l.spectral = wanted.then(|| SpectralState::random(l.weight.rows(), l.weight.cols(), rng));
        }
    }

    fn decoder_layer_count(&self) -> usize {
        self.node_decoder.layers.len() + self.graph_decoder.layers.len()
    }

    /// Decoder linear layers in application order.
    pub fn decoder_linears(&self) -> Vec<&Linear> {
        self.node_decoder.layers.iter().chain(self.graph_decoder.layers.iter()).collect()
    }

    /// SiLU layers on the per-atom decoder path.
    pub fn decoder_activation_count(&self) -> usize {
        self.node_decoder.activation_count() + self.graph_decoder.activation_count()
    }

    /// Refreshes the spectral estimate of each scoped layer with `steps`
    /// power iterations and rescales its weight to `σ = 1`. Layers outside
    /// the configured scope are untouched.
    pub fn apply_spectral_norm(&mut self, steps: usize) -> Result<()> {
        if self.config.spectral == SpectralScope::Off {
            return Err(Error::Config("spectral normalization is disabled for this model".into()));
        }
        for l in self.linears_mut() {
            l.renormalize(steps)?;
        }
        Ok(())
    }

    /// [`EgnnModel::apply_spectral_norm`] with converged estimates, leaving
    /// every scoped layer at `σ = 1` within the certification tolerance.
    pub fn certify_spectral_norm(&mut self) -> Result<()> {
        if self.config.spectral == SpectralScope::Off {
            return Err(Error::Config("spectral normalization is disabled for this model".into()));
        }
        for l in self.linears_mut() {
            l.certify()?;
        }
        Ok(())
    }

    /// Predictions for every graph in `batch` as a `B x P` node on `tape`.
    pub fn forward_on_tape(&self, tape: &mut Tape, params: &mut Bound, batch: &GraphBatch) -> Result<Var> {
        if batch.features.cols() != self.config.node_features {
            return Err(Error::Shape(format!(
                "graph has {} atom features, model expects {}",
                batch.features.cols(),
                self.config.node_features
            )));
        }
        if batch.n_pairs() > 0 && batch.edge_features.cols() != self.config.edge_features {
            return Err(Error::Shape(format!(
                "graph has {} edge features, model expects {}",
                batch.edge_features.cols(),
                self.config.edge_features
            )));
        }
        params.rewind();
        let (h, _) = self.trunk(tape, params, batch)?;
        let node = self.node_decoder.apply(tape, params, h)?;
        let pooled = tape.scatter_add(node, batch.node_graph.clone(), batch.n_graphs)?;
        self.graph_decoder.apply(tape, params, pooled)
    }

    /// Embedding plus message passing; returns final node features and
    /// coordinates.
    fn trunk(&self, tape: &mut Tape, params: &mut Bound, batch: &GraphBatch) -> Result<(Var, Var)> {
        let feats = tape.constant(batch.features.clone());
        let mut x = tape.constant(batch.positions.clone());
        let ef = if batch.n_pairs() == 0 {
            tape.constant(Matrix::zeros(0, self.config.edge_features))
        } else {
            tape.constant(batch.edge_features.clone())
        };
        let scale = tape.constant(batch.pair_scale.clone());
        let (w, b) = params.next();
        let mut h = tape.matmul(feats, w)?;
        h = tape.add_bias(h, b)?;
        for layer in &self.layers {
            let out = layer.apply(tape, params, batch, h, x, ef, scale)?;
            h = out.h;
            x = out.x;
        }
        Ok((h, x))
    }

    /// Prediction `ŷ ∈ ℝᴾ` for one graph.
    pub fn forward(&self, graph: &MolecularGraph) -> Result<Vec<f64>> {
        if graph.n_atoms() == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(self.predict(&[graph])?.into_vec())
    }

    /// `B x P` predictions without recording gradients for the parameters.
    pub fn predict(&self, graphs: &[&MolecularGraph]) -> Result<Matrix> {
        let batch = GraphBatch::new(graphs, self.config.coord_norm)?;
        let mut tape = Tape::new();
        let mut params = self.bind_frozen(&mut tape);
        let out = self.forward_on_tape(&mut tape, &mut params, &batch)?;
        Ok(tape.value(out).clone())
    }

    /// Per-atom decoder path `graph_decoder(node_decoder(h))` for one atom,
    /// i.e. the decoder with pooling over a single node.
    pub fn decoder_chain(&self, h: &[f64]) -> Vec<f64> {
        self.graph_decoder.eval(&self.node_decoder.eval(h))
    }

    /// Node features and coordinates after the last message-passing layer.
    pub fn node_states(&self, graph: &MolecularGraph) -> Result<(Matrix, Matrix)> {
        let batch = GraphBatch::single(graph, self.config.coord_norm)?;
        let mut tape = Tape::new();
        let mut params = self.bind_frozen(&mut tape);
        let (h, x) = self.trunk(&mut tape, &mut params, &batch)?;
        Ok((tape.value(h).clone(), tape.value(x).clone()))
    }
}

pub const CHECKPOINT_FORMAT: &str = "xmpo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile<T> {
    format: String,
    version: u32,
    kind: String,
    model: T,
}

/// Writes `model` as a versioned JSON container.
pub fn save_checkpoint<T: Serialize>(path: &Path, kind: &str, model: &T) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        model,
    };
    let text = serde_json::to_string(&file)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: for<'de> Deserialize<'de>>(path: &Path, kind: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile<T> =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported container {} v{}", file.format, file.version)));
    }
    if file.kind != kind {
        return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", file.kind)));
    }
    Ok(file.model)
}

impl EgnnModel {
    pub const CHECKPOINT_KIND: &'static str = "egnn";

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, Self::CHECKPOINT_KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = load_checkpoint(path, Self::CHECKPOINT_KIND)?;
        m.config.validate()?;
        Ok(m)
    }
}
