//! Shapley attributions with molecular edges as players.

mod coalition;
mod export;
mod fidelity;

pub use coalition::{
    binomial, default_samples, enumerate_coalitions, kernel_weight, sample_coalitions, Coalitions,
    DEFAULT_MAX_SAMPLES, SENTINEL_WEIGHT,
};
pub use export::{
    export_explanation, parse_csv, render_csv, render_dot, render_svg, CsvRow, ExportPaths, CSV_HEADER,
};
pub use fidelity::{fidelity_after_removal, fidelity_loss, least_important_edges, Accuracy, DEFAULT_DROP_FRACTION};

use std::collections::HashSet;

use crate::egnn::EgnnModel;
use crate::error::{Error, Result};
use crate::molgraph::MolecularGraph;
use crate::numcore::{wls_solve, Matrix};

/// Largest edge count accepted by [`brute_force_shapley`].
pub const BRUTE_FORCE_MAX_EDGES: usize = 12;

/// Predictions used while masking edges.
pub trait Predictor {
    /// Number of outputs per graph.
    fn outputs(&self) -> usize;
    /// One row of outputs per graph.
    fn predict_graphs(&self, graphs: &[&MolecularGraph]) -> Result<Matrix>;
}

impl Predictor for EgnnModel {
    fn outputs(&self) -> usize {
        self.config.properties
    }

    fn predict_graphs(&self, graphs: &[&MolecularGraph]) -> Result<Matrix> {
        self.predict(graphs)
    }
}

/// Indices of the edges kept as players.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneReport {
    pub active: Vec<usize>,
    /// Duplicate edges and self-loops.
    pub pruned: Vec<usize>,
}

/// Drops edges that cannot affect a pooled prediction. With graph-level
/// sum pooling every edge lies in the receptive field of the readout for
/// any depth ≥ 1, so only repeated edges and self-loops are removed.
pub fn prune_edges(graph: &MolecularGraph, model_depth: usize) -> PruneReport {
    let mut seen = HashSet::new();
    let mut active = Vec::new();
    let mut pruned = Vec::new();
    for (k, e) in graph.edges.iter().enumerate() {
        if model_depth == 0 || e.i == e.j || !seen.insert(e.key()) {
            pruned.push(k);
        } else {
            active.push(k);
        }
    }
    PruneReport { active, pruned }
}

/// Coalitions with a prediction row for each mask.
#[derive(Clone, Debug, PartialEq)]
pub struct CoalitionBatch {
    pub coalitions: Coalitions,
    /// `samples x P`.
    pub predictions: Matrix,
}

/// Copy of `graph` keeping only the active edges selected by `mask`.
pub fn masked_graph(graph: &MolecularGraph, active: &[usize], mask: &[bool]) -> MolecularGraph {
    let mut g = graph.clone();
    g.edges = active.iter().zip(mask).filter(|(_, &on)| on).map(|(&k, _)| graph.edges[k].clone()).collect();
    g
}

/// Predictions on `graph` restricted to each coalition of active edges.
pub fn evaluate_coalitions<P: Predictor + ?Sized>(
    model: &P,
    graph: &MolecularGraph,
    active: &[usize],
    coalitions: Coalitions,
) -> Result<CoalitionBatch> {
    if coalitions.n_players != active.len() {
        return Err(Error::ExplanationMismatch(format!(
            "{} players but {} active edges",
            coalitions.n_players,
            active.len()
        )));
    }
    const CHUNK: usize = 64;
    let p = model.outputs();
    let mut data = Vec::with_capacity(coalitions.len() * p);
    for chunk in coalitions.masks.chunks(CHUNK) {
        let graphs: Vec<MolecularGraph> = chunk.iter().map(|m| masked_graph(graph, active, m)).collect();
        let refs: Vec<&MolecularGraph> = graphs.iter().collect();
        data.extend(model.predict_graphs(&refs)?.into_vec());
    }
    let predictions = Matrix::from_vec(coalitions.len(), p, data)?;
    Ok(CoalitionBatch { coalitions, predictions })
}

/// Per-edge, per-property attributions.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapleyExplanation {
    /// Endpoints of each explained edge, in player order.
    pub edges: Vec<(usize, usize)>,
    /// `edges x P`.
    pub phi: Matrix,
    /// Prediction with no edges.
    pub base_value: Vec<f64>,
    /// Prediction with every edge.
    pub target: Vec<f64>,
    pub ridge_applied: bool,
}

impl ShapleyExplanation {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_properties(&self) -> usize {
        self.base_value.len()
    }

    /// `Σ_i |φ_i[e]|` for every edge.
    pub fn importance(&self) -> Vec<f64> {
        (0..self.phi.rows()).map(|e| self.phi.row(e).iter().map(|v| v.abs()).sum()).collect()
    }
}

/// Weighted least squares solve `φ = (MᵀWM)⁻¹MᵀW(ŷ − ŷ(∅))`, one property
/// at a time. `edges` labels the players.
pub fn shapley_values(batch: &CoalitionBatch, edges: &[(usize, usize)]) -> Result<ShapleyExplanation> {
    let c = &batch.coalitions;
    let n = c.n_players;
    if edges.len() != n {
        return Err(Error::ExplanationMismatch(format!("{} edge labels for {n} players", edges.len())));
    }
    if batch.predictions.rows() != c.len() {
        return Err(Error::Shape(format!("{} predictions for {} coalitions", batch.predictions.rows(), c.len())));
    }
    let empty = c.masks.iter().position(|m| m.iter().all(|b| !b));
    let full = c.masks.iter().position(|m| m.iter().all(|&b| b));
    let (Some(empty), Some(full)) = (empty, full) else {
        return Err(Error::ExplanationMismatch("coalitions lack the empty or full mask".into()));
    };
    let design = Matrix::from_rows(
        &c.masks.iter().map(|m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).collect::<Vec<_>>(),
    )?;
    let p = batch.predictions.cols();
    let base_value = batch.predictions.row(empty).to_vec();
    let target = batch.predictions.row(full).to_vec();
    let mut phi = Matrix::zeros(n, p);
    let mut ridge_applied = false;
    for prop in 0..p {
        let y: Vec<f64> = (0..c.len()).map(|k| batch.predictions.get(k, prop) - base_value[prop]).collect();
        let sol = wls_solve(&design, &c.weights, &y)?;
        ridge_applied |= sol.ridge_applied;
        for (e, v) in sol.coefficients.iter().enumerate() {
            phi.set(e, prop, *v);
        }
    }
    Ok(ShapleyExplanation { edges: edges.to_vec(), phi, base_value, target, ridge_applied })
}

/// End to end: prune, draw `n_samples` coalitions (default
/// `min(2ⁿ, 2048)`), evaluate, solve.
pub fn explain_graph<P: Predictor + ?Sized, R: rand::Rng + ?Sized>(
    model: &P,
    graph: &MolecularGraph,
    model_depth: usize,
    n_samples: Option<usize>,
    rng: &mut R,
) -> Result<ShapleyExplanation> {
    let report = prune_edges(graph, model_depth);
    let n = report.active.len();
    if n == 0 {
        return Err(Error::NothingToExplain);
    }
    let coalitions = sample_coalitions(n, n_samples.unwrap_or_else(|| default_samples(n)), rng)?;
    let batch = evaluate_coalitions(model, graph, &report.active, coalitions)?;
    shapley_values(&batch, &edge_labels(graph, &report.active))
}

pub fn edge_labels(graph: &MolecularGraph, active: &[usize]) -> Vec<(usize, usize)> {
    active.iter().map(|&k| (graph.edges[k].i, graph.edges[k].j)).collect()
}

/// Exact Shapley values over the active edges from the factorial formula,
/// `φ_e = Σ_{S ⊆ E∖{e}} |S|!(n−|S|−1)!/n! · (v(S∪{e}) − v(S))`.
pub fn brute_force_shapley<P: Predictor + ?Sized>(model: &P, graph: &MolecularGraph, model_depth: usize) -> Result<Matrix> {
    let report = prune_edges(graph, model_depth);
    let n = report.active.len();
    if n == 0 {
        return Err(Error::NothingToExplain);
    }
    if n > BRUTE_FORCE_MAX_EDGES {
        return Err(Error::TooManyPlayers { max: BRUTE_FORCE_MAX_EDGES, got: n });
    }
    let all = enumerate_coalitions(n)?;
    let batch = evaluate_coalitions(model, graph, &report.active, all)?;
    Ok(shapley_from_game(n, &batch.predictions))
}

/// Factorial-formula Shapley values of a game given as one value row per
/// coalition in binary counting order.
pub fn shapley_from_game(n: usize, values: &Matrix) -> Matrix {
    let p = values.cols();
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let mut phi = Matrix::zeros(n, p);
    for e in 0..n {
        let bit = 1usize << e;
        for code in 0..(1usize << n) {
            if code & bit != 0 {
                continue;
            }
            let s = code.count_ones() as usize;
            let w = fact[s] * fact[n - s - 1] / fact[n];
            for prop in 0..p {
                let gain = values.get(code | bit, prop) - values.get(code, prop);
                phi.set(e, prop, phi.get(e, prop) + w * gain);
            }
        }
    }
    phi
}
