use serde::{Deserialize, Serialize};

use super::{edge_labels, prune_edges, Predictor, ShapleyExplanation};
use crate::error::{Error, Result};
use crate::molgraph::{perturb_remove_edges, MolecularGraph};

pub const DEFAULT_DROP_FRACTION: f64 = 0.2;

/// Per-property accuracy score of a prediction against its target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accuracy {
    /// `1 / (1 + |ŷ − y|)`.
    #[default]
    Reciprocal,
    /// `−|ŷ − y|`.
    NegativeAbsError,
}

impl Accuracy {
    pub fn score(self, prediction: f64, target: f64) -> f64 {
        let err = (prediction - target).abs();
        match self {
            Accuracy::Reciprocal => 1.0 / (1.0 + err),
            Accuracy::NegativeAbsError => -err,
        }
    }
}

/// The `max(1, ⌈fraction·n⌉)` explained edges with the smallest
/// `Σ_i |φ_i|`, ties broken by lower player index. Returned as player
/// indices in ranking order.
pub fn least_important_edges(explanation: &ShapleyExplanation, drop_fraction: f64) -> Result<Vec<usize>> {
    if !(drop_fraction > 0.0 && drop_fraction < 1.0) {
        return Err(Error::Config(format!("drop fraction must lie in (0, 1), got {drop_fraction}")));
    }
    let n = explanation.n_edges();
    let k = ((drop_fraction * n as f64).ceil() as usize).clamp(1, n.max(1));
    let importance = explanation.importance();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(a.cmp(&b)));
    order.truncate(k.min(n));
    Ok(order)
}

/// `Σ_i (A(ŷ_i) − A(ŷ′_i))` where `ŷ′` is predicted after removing the
/// listed graph edges and `y` is the graph's property vector.
pub fn fidelity_after_removal<P: Predictor + ?Sized>(
    model: &P,
    graph: &MolecularGraph,
    removed_edges: &[usize],
    accuracy: Accuracy,
) -> Result<f64> {
    let p = model.outputs();
    if graph.properties.len() != p {
        return Err(Error::ExplanationMismatch(format!(
            "graph has {} target properties, model predicts {p}",
            graph.properties.len()
        )));
    }
    let reduced = perturb_remove_edges(graph, removed_edges)?.graph;
    let preds = model.predict_graphs(&[graph, &reduced])?;
    Ok((0..p)
        .map(|i| {
            let y = graph.properties[i];
            accuracy.score(preds.get(0, i), y) - accuracy.score(preds.get(1, i), y)
        })
        .sum())
}

/// Fidelity of `explanation` for `graph`: removes the least important
/// edges (see [`least_important_edges`]) and scores the change in accuracy.
pub fn fidelity_loss<P: Predictor + ?Sized>(
    model: &P,
    graph: &MolecularGraph,
    model_depth: usize,
    explanation: &ShapleyExplanation,
    drop_fraction: f64,
    accuracy: Accuracy,
) -> Result<f64> {
    let report = prune_edges(graph, model_depth);
    if edge_labels(graph, &report.active) != explanation.edges {
        return Err(Error::ExplanationMismatch("explanation edges differ from the graph's active edges".into()));
    }
    if explanation.n_properties() != model.outputs() {
        return Err(Error::ExplanationMismatch(format!(
            "explanation covers {} properties, model predicts {}",
            explanation.n_properties(),
            model.outputs()
        )));
    }
    let players = least_important_edges(explanation, drop_fraction)?;
    let removed: Vec<usize> = players.iter().map(|&k| report.active[k]).collect();
    fidelity_after_removal(model, graph, &removed, accuracy)
}
