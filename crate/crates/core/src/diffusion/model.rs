use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DiffusionState;
use crate::egnn::{load_checkpoint, save_checkpoint, Bound, CoordNorm, EgnnLayer, GraphBatch, Linear, Mlp, Parameterized};
use crate::error::{Error, Result};
use crate::molgraph::{Atom, Edge, MolecularGraph};
use crate::numcore::{Matrix, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Atom feature width (one-hot element block).
    pub node_features: usize,
    /// Width of the conditioning property vector.
    pub properties: usize,
    /// Sinusoidal timestep features, an even number.
    pub time_features: usize,
    pub coord_norm: CoordNorm,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 32,
            node_features: 5,
            properties: 6,
            time_features: 8,
            coord_norm: CoordNorm::InverseDegree,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.node_features == 0 {
            return Err(Error::Config(format!("layers, hidden and node features must be positive: {self:?}")));
        }
        if self.time_features % 2 != 0 {
            return Err(Error::Config(format!("time features must be even, got {}", self.time_features)));
        }
        Ok(())
    }

    /// Per-node input width: noised features, condition, time embedding.
    pub fn input_width(&self) -> usize {
        self.node_features + self.properties + self.time_features
    }

    /// Width of the predicted noise: three coordinates plus features.
    pub fn noise_width(&self) -> usize {
        3 + self.node_features
    }
}

/// `[sin(2ᵏπ·t/T), cos(2ᵏπ·t/T)]` for `k = 0..width/2`.
pub fn time_embedding(t: usize, steps: usize, width: usize) -> Vec<f64> {
    let r = t as f64 / steps.max(1) as f64;
    let mut out = Vec::with_capacity(width);
    for k in 0..width / 2 {
        let a = std::f64::consts::PI * (1u64 << k) as f64 * r;
        out.push(a.sin());
        out.push(a.cos());
    }
    out
}

/// Noise predictor built from the equivariant message-passing layers with a
/// per-node output: coordinate noise is read off the displacement
/// `x_L - x_0`, feature noise from a head on the final node states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserModel {
    pub config: DenoiserConfig,
    pub embed: Linear,
    pub layers: Vec<EgnnLayer>,
    /// `H + input → H → node_features`, reading the final node state next to
    /// the raw node inputs.
    pub feature_head: Mlp,
}

impl Parameterized for DenoiserModel {
    fn linears(&self) -> Vec<&Linear> {
        let mut v = vec![&self.embed];
        for l in &self.layers {
            v.extend(l.linears());
        }
        v.extend(self.feature_head.layers.iter());
        v
    }

    fn linears_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = vec![&mut self.embed];
        for l in &mut self.layers {
            v.extend(l.linears_mut());
        }
        v.extend(self.feature_head.layers.iter_mut());
        v
    }
}

/// Noised states packed for the denoiser.
#[derive(Clone, Debug)]
pub struct DenoiserBatch {
    pub graphs: GraphBatch,
    /// `1 / n` of each node's molecule, `N x 1`.
    pub inverse_sizes: Matrix,
}

impl DenoiserModel {
    pub const CHECKPOINT_KIND: &'static str = "denoiser";

    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        Ok(Self {
            embed: Linear::new(config.input_width(), h, rng),
            layers: (0..config.layers).map(|_| EgnnLayer::new(h, 0, rng)).collect(),
            feature_head: Mlp::new(&[h + config.input_width(), h, config.node_features], false, rng),
            config,
        })
    }

    pub fn zeros(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        Ok(Self {
            embed: Linear::zeros(config.input_width(), h),
            layers: (0..config.layers).map(|_| EgnnLayer::zeros(h, 0)).collect(),
            feature_head: Mlp::zeros(&[h + config.input_width(), h, config.node_features], false),
            config,
        })
    }

    /// Packs states as complete graphs whose node inputs are the noised
    /// features, the condition and the time embedding.
    pub fn prepare(&self, states: &[&DiffusionState], steps: usize) -> Result<DenoiserBatch> {
        let cfg = &self.config;
        let mut graphs = Vec::with_capacity(states.len());
        for s in states {
            if s.condition.len() != cfg.properties {
                return Err(Error::Shape(format!(
                    "condition of length {}, denoiser expects {}",
                    s.condition.len(),
                    cfg.properties
                )));
            }
            if s.noised.feature_width() != cfg.node_features {
                return Err(Error::Shape(format!(
                    "noised features of width {}, denoiser expects {}",
                    s.noised.feature_width(),
                    cfg.node_features
                )));
            }
            let temb = time_embedding(s.t, steps, cfg.time_features);
            let atoms = s
                .noised
                .atoms
                .iter()
                .map(|a| {
                    let mut features = a.features.clone();
                    features.extend_from_slice(&s.condition);
                    features.extend_from_slice(&temb);
                    Atom { element: a.element, features, position: a.position }
                })
                .collect();
            let mut g = MolecularGraph::new(s.noised.id.clone(), atoms);
            let n = g.n_atoms();
            g.edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| Edge::new(i, j))).collect();
            graphs.push(g);
        }
        let refs: Vec<&MolecularGraph> = graphs.iter().collect();
        let batch = GraphBatch::new(&refs, cfg.coord_norm)?;
        let inverse_sizes = batch.inverse_size_per_node();
        Ok(DenoiserBatch { graphs: batch, inverse_sizes })
    }

    /// Predicted noise `N x (3 + node_features)`, coordinate block first and
    /// centered per molecule.
    pub fn forward_on_tape(&self, tape: &mut Tape, params: &mut Bound, batch: &DenoiserBatch) -> Result<Var> {
        let gb = &batch.graphs;
        params.rewind();
        let feats = tape.constant(gb.features.clone());
        let x0 = tape.constant(gb.positions.clone());
        let ef = tape.constant(Matrix::zeros(gb.n_pairs(), 0));
        let scale = tape.constant(gb.pair_scale.clone());
        let (w, b) = params.next();
        let mut h = tape.matmul(feats, w)?;
        h = tape.add_bias(h, b)?;
        let mut x = x0;
        for layer in &self.layers {
            let out = layer.apply(tape, params, gb, h, x, ef, scale)?;
            h = out.h;
            x = out.x;
        }
        let shift = tape.sub(x, x0)?;
        let per_graph = tape.scatter_add(shift, gb.node_graph.clone(), gb.n_graphs)?;
        let spread = tape.gather(per_graph, gb.node_graph.clone())?;
        let inv = tape.constant(batch.inverse_sizes.clone());
        let mean = tape.mul_col(spread, inv)?;
        let eps_x = tape.sub(shift, mean)?;
        let head_in = tape.concat_cols(&[h, feats])?;
        let eps_h = self.feature_head.apply(tape, params, head_in)?;
        tape.concat_cols(&[eps_x, eps_h])
    }

    /// Predicted noise for the given states, stacked in order.
    pub fn predict(&self, states: &[&DiffusionState], steps: usize) -> Result<Matrix> {
        let batch = self.prepare(states, steps)?;
        let mut tape = Tape::new();
        let mut params = self.bind_frozen(&mut tape);
        let out = self.forward_on_tape(&mut tape, &mut params, &batch)?;
        Ok(tape.value(out).clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, Self::CHECKPOINT_KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = load_checkpoint(path, Self::CHECKPOINT_KIND)?;
        m.config.validate()?;
        Ok(m)
    }
}
