use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::molgraph::MolecularGraph;
use crate::numcore::Matrix;

/// Coordinate-update normalization `C`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum CoordNorm {
    /// `1 / (n - 1)` for an `n`-atom molecule (1 for a single atom).
    InverseDegree,
    Fixed(f64),
}

impl CoordNorm {
    pub fn value(self, n_atoms: usize) -> f64 {
        match self {
            CoordNorm::InverseDegree if n_atoms > 1 => 1.0 / (n_atoms - 1) as f64,
            CoordNorm::InverseDegree => 1.0,
            CoordNorm::Fixed(c) => c,
        }
    }
}

/// Several graphs packed as one disjoint union with directed message pairs.
///
/// Every undirected edge `{i, j}` yields the pairs `i ← j` and `j ← i`;
/// repeated edges are collapsed to their first occurrence.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub n_graphs: usize,
    pub n_nodes: usize,
    pub features: Matrix,
    pub positions: Matrix,
    /// Graph of each node.
    pub node_graph: Arc<[usize]>,
    /// Receiving node of each directed pair.
    pub receivers: Arc<[usize]>,
    /// Sending node of each directed pair.
    pub senders: Arc<[usize]>,
    pub edge_features: Matrix,
    /// `C` for the graph of each directed pair, as an `E x 1` column.
    pub pair_scale: Matrix,
    /// Atom count of each graph.
    pub graph_sizes: Vec<usize>,
}

impl GraphBatch {
    pub fn single(graph: &MolecularGraph, norm: CoordNorm) -> Result<Self> {
        Self::new(&[graph], norm)
    }

    pub fn new(graphs: &[&MolecularGraph], norm: CoordNorm) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let nf = graphs[0].feature_width();
        let ef = graphs.iter().map(|g| g.edge_feature_width()).find(|&w| w > 0).unwrap_or(0);
        let n_nodes: usize = graphs.iter().map(|g| g.n_atoms()).sum();
        let mut features = Vec::with_capacity(n_nodes * nf);
        let mut positions = Vec::with_capacity(n_nodes * 3);
        let mut node_graph = Vec::with_capacity(n_nodes);
        let mut receivers = Vec::new();
        let mut senders = Vec::new();
        let mut edge_features = Vec::new();
        let mut pair_scale = Vec::new();
        let mut graph_sizes = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            let n = g.n_atoms();
            if n == 0 {
                return Err(Error::EmptyGraph);
            }
            for a in &g.atoms {
                if a.features.len() != nf {
                    return Err(Error::Shape(format!("atom feature width {} != {nf}", a.features.len())));
                }
                features.extend_from_slice(&a.features);
                positions.extend_from_slice(&a.position);
                node_graph.push(gi);
            }
            let c = norm.value(n);
            let mut seen = HashSet::new();
            for e in &g.edges {
                if e.i == e.j || e.i >= n || e.j >= n {
                    return Err(Error::InvalidGraph(format!("edge ({}, {}) for {n} atoms", e.i, e.j)));
                }
                if !seen.insert(e.key()) {
                    continue;
                }
                let feats = if e.features.is_empty() { vec![0.0; ef] } else { e.features.clone() };
                if feats.len() != ef {
                    return Err(Error::Shape(format!("edge feature width {} != {ef}", feats.len())));
                }
                for (r, s) in [(e.i, e.j), (e.j, e.i)] {
                    receivers.push(offset + r);
                    senders.push(offset + s);
                    edge_features.extend_from_slice(&feats);
                    pair_scale.push(c);
                }
            }
            graph_sizes.push(n);
            offset += n;
        }
        let n_pairs = receivers.len();
        Ok(Self {
            n_graphs: graphs.len(),
            n_nodes,
            features: Matrix::from_vec(n_nodes, nf, features)?,
            positions: Matrix::from_vec(n_nodes, 3, positions)?,
            node_graph: node_graph.into(),
            receivers: receivers.into(),
            senders: senders.into(),
            edge_features: Matrix::from_vec(n_pairs, ef, edge_features)?,
            pair_scale: Matrix::column_vector(&pair_scale),
            graph_sizes,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.receivers.len()
    }

    /// `1 / n_g` for the graph of every node, as an `N x 1` column.
    pub fn inverse_size_per_node(&self) -> Matrix {
        let v: Vec<f64> = self.node_graph.iter().map(|&g| 1.0 / self.graph_sizes[g] as f64).collect();
        Matrix::column_vector(&v)
    }
}
