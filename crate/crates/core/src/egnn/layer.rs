use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::GraphBatch;
use super::nn::{Bound, Linear, Mlp};
use crate::error::{Error, Result};
use crate::numcore::{Tape, Var};

/// One equivariant message-passing layer.
///
/// ```text
/// m_ij     = φ_e(h_i, h_j, ‖x_i − x_j‖², e_ij)
/// x_i'     = x_i + C Σ_{j≠i} (x_i − x_j) φ_x(m_ij)
/// h_i'     = φ_h(h_i, Σ_{j≠i} m_ij)
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgnnLayer {
    /// Message function, `2H + 1 + ef → H → H`, SiLU after both layers.
    pub edge_mlp: Mlp,
    /// Coordinate gate, `H → H → 1`.
    pub coord_mlp: Mlp,
    /// Feature update, `2H → H → H`.
    pub node_mlp: Mlp,
}

/// Node state after a layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerOutput {
    pub h: Var,
    pub x: Var,
}

impl EgnnLayer {
    pub fn new<R: Rng + ?Sized>(hidden: usize, edge_features: usize, rng: &mut R) -> Self {
        Self {
            edge_mlp: Mlp::new(&[2 * hidden + 1 + edge_features, hidden, hidden], true, rng),
            coord_mlp: Mlp::new(&[hidden, hidden, 1], false, rng),
            node_mlp: Mlp::new(&[2 * hidden, hidden, hidden], false, rng),
        }
    }

    pub fn zeros(hidden: usize, edge_features: usize) -> Self {
        Self {
            edge_mlp: Mlp::zeros(&[2 * hidden + 1 + edge_features, hidden, hidden], true),
            coord_mlp: Mlp::zeros(&[hidden, hidden, 1], false),
            node_mlp: Mlp::zeros(&[2 * hidden, hidden, hidden], false),
        }
    }

    pub fn hidden(&self) -> usize {
        self.node_mlp.output_dim()
    }

    pub fn edge_feature_width(&self) -> usize {
        self.edge_mlp.input_dim() - 2 * self.hidden() - 1
    }

    pub fn linears(&self) -> Vec<&Linear> {
        [&self.edge_mlp, &self.coord_mlp, &self.node_mlp].into_iter().flat_map(|m| m.layers.iter()).collect()
    }

    pub fn linears_mut(&mut self) -> Vec<&mut Linear> {
        [&mut self.edge_mlp, &mut self.coord_mlp, &mut self.node_mlp]
            .into_iter()
            .flat_map(|m| m.layers.iter_mut())
            .collect()
    }

    /// Runs the layer over a batch. `edge_features` is the batch's `E x ef`
    /// constant and `pair_scale` its `E x 1` column of `C` values.
    pub fn apply(
        &self,
        tape: &mut Tape,
        params: &mut Bound,
        batch: &GraphBatch,
        h: Var,
        x: Var,
        edge_features: Var,
        pair_scale: Var,
    ) -> Result<LayerOutput> {
        let hi = tape.gather(h, batch.receivers.clone())?;
        let hj = tape.gather(h, batch.senders.clone())?;
        let xi = tape.gather(x, batch.receivers.clone())?;
        let xj = tape.gather(x, batch.senders.clone())?;
        let diff = tape.sub(xi, xj)?;
        let sq = tape.square(diff)?;
        let d2 = tape.row_sum(sq)?;
        let input = if tape.value(edge_features).cols() > 0 {
            tape.concat_cols(&[hi, hj, d2, edge_features])?
        } else {
            tape.concat_cols(&[hi, hj, d2])?
        };
        let m = self.edge_mlp.apply(tape, params, input)?;

        let gate = self.coord_mlp.apply(tape, params, m)?;
        let shift = tape.mul_col(diff, gate)?;
        let shift = tape.mul_col(shift, pair_scale)?;
        let shift = tape.scatter_add(shift, batch.receivers.clone(), batch.n_nodes)?;
        let x_next = tape.add(x, shift)?;

        let agg = tape.scatter_add(m, batch.receivers.clone(), batch.n_nodes)?;
        let hin = tape.concat_cols(&[h, agg])?;
        let h_next = self.node_mlp.apply(tape, params, hin)?;
        Ok(LayerOutput { h: h_next, x: x_next })
    }

    /// `m_ij` for a single pair.
    pub fn message(&self, h_i: &[f64], h_j: &[f64], dist_sq: f64, e_ij: &[f64]) -> Result<Vec<f64>> {
        let hidden = self.hidden();
        if h_i.len() != hidden || h_j.len() != hidden || e_ij.len() != self.edge_feature_width() {
            return Err(Error::Shape(format!(
                "message inputs ({}, {}, {}) for hidden {hidden}, edge width {}",
                h_i.len(),
                h_j.len(),
                e_ij.len(),
                self.edge_feature_width()
            )));
        }
        if !(dist_sq >= 0.0) {
            return Err(Error::Shape(format!("squared distance {dist_sq} is negative")));
        }
        let mut input = Vec::with_capacity(self.edge_mlp.input_dim());
        input.extend_from_slice(h_i);
        input.extend_from_slice(h_j);
        input.push(dist_sq);
        input.extend_from_slice(e_ij);
        Ok(self.edge_mlp.eval(&input))
    }

    /// `x_i + C Σ_j (x_i − x_j) φ_x(m_ij)`.
    pub fn coord_update(
        &self,
        x_i: [f64; 3],
        neighbors: &[[f64; 3]],
        messages: &[Vec<f64>],
        c: f64,
    ) -> Result<[f64; 3]> {
        if neighbors.len() != messages.len() {
            return Err(Error::Shape(format!("{} neighbors but {} messages", neighbors.len(), messages.len())));
        }
        let mut terms: [Vec<f64>; 3] = Default::default();
        for (x_j, m) in neighbors.iter().zip(messages) {
            let gate = self.coord_mlp.eval(m)[0];
            for d in 0..3 {
                terms[d].push((x_i[d] - x_j[d]) * gate * c);
            }
        }
        let mut out = x_i;
        for d in 0..3 {
            out[d] += sorted_sum(&mut terms[d]);
        }
        Ok(out)
    }

    /// `φ_h(h_i, Σ_j m_ij)`; an isolated node aggregates the zero vector.
    pub fn feature_update(&self, h_i: &[f64], messages: &[Vec<f64>]) -> Result<Vec<f64>> {
        let hidden = self.hidden();
        if h_i.len() != hidden || messages.iter().any(|m| m.len() != hidden) {
            return Err(Error::Shape("feature update dimensions".into()));
        }
        let mut input = h_i.to_vec();
        let mut column = Vec::with_capacity(messages.len());
        for c in 0..hidden {
            column.clear();
            column.extend(messages.iter().map(|m| m[c]));
            input.push(sorted_sum(&mut column));
        }
        Ok(self.node_mlp.eval(&input))
    }
}

fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}
