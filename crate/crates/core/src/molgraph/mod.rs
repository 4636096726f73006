//! Molecular graphs: atoms with features and 3-D positions, featured edges,
//! and a per-molecule property vector.

mod dataset;
mod qm9;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{Dataset, DatasetHeader, PropertyScaler, Split, SplitFractions, CACHE_FORMAT, CACHE_VERSION};
pub use qm9::{
    load_qm9_path, normalize_fortran_exponent, parse_qm9_file, parse_qm9_record, to_qm9_record, ParseOptions,
    Qm9Load, Reject, HARTREE_TO_MEV, QM9_PROPERTY_COLUMNS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    H,
    C,
    N,
    O,
    F,
}

impl Element {
    pub const ALL: [Element; 5] = [Element::H, Element::C, Element::N, Element::O, Element::F];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "H" => Element::H,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "F" => Element::F,
            _ => return None,
        })
    }

    pub fn atomic_number(self) -> u32 {
        match self {
            Element::H => 1,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
        }
    }

    /// Position in the one-hot encoding.
    pub fn index(self) -> usize {
        Element::ALL.iter().position(|&e| e == self).expect("listed")
    }

    /// Single-bond covalent radius in Å.
    pub fn covalent_radius(self) -> f64 {
        match self {
            Element::H => 0.32,
            Element::C => 0.75,
            Element::N => 0.71,
            Element::O => 0.63,
            Element::F => 0.64,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// How atom feature vectors are laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureLayout {
    /// Append `Z / 9` after the one-hot block.
    pub charge_channel: bool,
}

impl FeatureLayout {
    pub fn width(self) -> usize {
        Element::ALL.len() + usize::from(self.charge_channel)
    }

    pub fn encode(self, element: Element) -> Vec<f64> {
        let mut f = vec![0.0; self.width()];
        f[element.index()] = 1.0;
        if self.charge_channel {
            f[Element::ALL.len()] = element.atomic_number() as f64 / 9.0;
        }
        f
    }

    /// Element whose one-hot slot is largest.
    pub fn decode(self, features: &[f64]) -> Element {
        let best = features[..Element::ALL.len()]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        Element::ALL[best]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub features: Vec<f64>,
    /// Cartesian position in Å.
    pub position: [f64; 3],
}

impl Atom {
    pub fn new(element: Element, position: [f64; 3], layout: FeatureLayout) -> Self {
        Self { element, features: layout.encode(element), position }
    }
}

/// Undirected edge stored once with `i < j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub features: Vec<f64>,
}

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        Self { i: a.min(b), j: a.max(b), features: Vec::new() }
    }

    pub fn with_features(a: usize, b: usize, features: Vec<f64>) -> Self {
        Self { i: a.min(b), j: a.max(b), features }
    }

    pub fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

/// The six QM9 targets, in the order used throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    Alpha,
    Gap,
    Homo,
    Lumo,
    Mu,
    Cv,
}

impl Property {
    pub const ALL: [Property; 6] =
        [Property::Alpha, Property::Gap, Property::Homo, Property::Lumo, Property::Mu, Property::Cv];

    pub fn name(self) -> &'static str {
        match self {
            Property::Alpha => "alpha",
            Property::Gap => "gap",
            Property::Homo => "homo",
            Property::Lumo => "lumo",
            Property::Mu => "mu",
            Property::Cv => "cv",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Property::Alpha => "Bohr^3",
            Property::Gap | Property::Homo | Property::Lumo => "meV",
            Property::Mu => "D",
            Property::Cv => "cal/(mol K)",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Property::ALL.iter().copied().find(|p| p.name() == s)
    }

    pub fn index(self) -> usize {
        Property::ALL.iter().position(|&p| p == self).expect("listed")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolecularGraph {
    pub id: String,
    pub atoms: Vec<Atom>,
    pub edges: Vec<Edge>,
    /// Property vector; raw units straight out of the parser, standardized
    /// once placed in a [`Dataset`].
    pub properties: Vec<f64>,
}

impl MolecularGraph {
    pub fn new(id: impl Into<String>, atoms: Vec<Atom>) -> Self {
        Self { id: id.into(), atoms, edges: Vec::new(), properties: Vec::new() }
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_width(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.features.len())
    }

    pub fn edge_feature_width(&self) -> usize {
        self.edges.first().map_or(0, |e| e.features.len())
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        distance(&self.atoms[a].position, &self.atoms[b].position)
    }

    pub fn center_of_mass(&self) -> [f64; 3] {
        mean_position(&self.positions())
    }

    /// Checks index ranges, feature widths, finiteness and duplicate edges.
    pub fn validate(&self) -> Result<()> {
        let n = self.atoms.len();
        let nf = self.feature_width();
        for (k, a) in self.atoms.iter().enumerate() {
            if a.features.len() != nf {
                return Err(Error::InvalidGraph(format!("atom {k} has {} features, expected {nf}", a.features.len())));
            }
            if a.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGraph(format!("atom {k} has a non-finite position")));
            }
        }
        let ef = self.edge_feature_width();
        let mut seen = std::collections::HashSet::new();
        for (k, e) in self.edges.iter().enumerate() {
            if e.i == e.j || e.i >= n || e.j >= n {
                return Err(Error::InvalidGraph(format!("edge {k} ({}, {}) invalid for {n} atoms", e.i, e.j)));
            }
            if e.features.len() != ef {
                return Err(Error::InvalidGraph(format!("edge {k} has {} features, expected {ef}", e.features.len())));
            }
            if !seen.insert(e.key()) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let n = self.atoms.len();
        if n <= 1 {
            return true;
        }
        let mut uf = UnionFind::new(n);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        uf.components() == 1
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn mean_position(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len().max(1) as f64;
    let mut m = [0.0; 3];
    for p in points {
        for d in 0..3 {
            m[d] += p[d];
        }
    }
    m.map(|v| v / n)
}

/// Edge construction rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum EdgeMode {
    /// Every pair of atoms.
    Complete,
    /// Pairs within the cutoff (Å), patched to be connected.
    Radius(f64),
    /// Complete up to [`EdgeMode::AUTO_COMPLETE_MAX_ATOMS`] atoms, radius 5 Å above.
    #[default]
    Auto,
}

impl EdgeMode {
    pub const AUTO_COMPLETE_MAX_ATOMS: usize = 12;
    pub const AUTO_RADIUS: f64 = 5.0;

    fn resolve(self, n_atoms: usize) -> EdgeMode {
        match self {
            EdgeMode::Auto if n_atoms <= Self::AUTO_COMPLETE_MAX_ATOMS => EdgeMode::Complete,
            EdgeMode::Auto => EdgeMode::Radius(Self::AUTO_RADIUS),
            other => other,
        }
    }
}

/// Replaces the edge list according to `mode`. Edges get empty feature
/// vectors. In radius mode, disconnected components are joined by repeatedly
/// adding the shortest missing inter-component link.
pub fn build_edges(graph: &MolecularGraph, mode: EdgeMode) -> MolecularGraph {
    let n = graph.atoms.len();
    let mut out = graph.clone();
    out.edges.clear();
    match mode.resolve(n) {
        EdgeMode::Complete | EdgeMode::Auto => {
            for i in 0..n {
                for j in i + 1..n {
                    out.edges.push(Edge::new(i, j));
                }
            }
        }
        EdgeMode::Radius(cutoff) => {
            let mut uf = UnionFind::new(n);
            for i in 0..n {
                for j in i + 1..n {
                    if graph.distance(i, j) <= cutoff {
                        out.edges.push(Edge::new(i, j));
                        uf.union(i, j);
                    }
                }
            }
            while uf.components() > 1 {
                let mut best: Option<(f64, usize, usize)> = None;
                for i in 0..n {
                    for j in i + 1..n {
                        if uf.find(i) == uf.find(j) {
                            continue;
                        }
                        let d = graph.distance(i, j);
                        if best.map_or(true, |(bd, _, _)| d < bd) {
                            best = Some((d, i, j));
                        }
                    }
                }
                let (_, i, j) = best.expect("more than one component");
                out.edges.push(Edge::new(i, j));
                uf.union(i, j);
            }
            out.edges.sort_by_key(Edge::key);
        }
    }
    out
}

/// Translates the graph so its mean position is the origin.
pub fn canonicalize_com(graph: &MolecularGraph) -> MolecularGraph {
    let com = graph.center_of_mass();
    let mut out = graph.clone();
    for a in &mut out.atoms {
        for d in 0..3 {
            a.position[d] -= com[d];
        }
    }
    out
}

/// Result of [`perturb_remove_edges`].
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRemoval {
    pub graph: MolecularGraph,
    /// The removed edges, in their original order.
    pub removed: Vec<Edge>,
    /// True when no edges remain (downstream models see isolated atoms).
    pub all_removed: bool,
}

/// Copy of `graph` without the listed edges. The input is untouched.
pub fn perturb_remove_edges(graph: &MolecularGraph, edge_indices: &[usize]) -> Result<EdgeRemoval> {
    let m = graph.edges.len();
    if let Some(&bad) = edge_indices.iter().find(|&&k| k >= m) {
        return Err(Error::InvalidGraph(format!("edge index {bad} out of range for {m} edges")));
    }
    let mut drop = vec![false; m];
    for &k in edge_indices {
        drop[k] = true;
    }
    let mut out = graph.clone();
    out.edges.clear();
    let mut removed = Vec::new();
    for (k, e) in graph.edges.iter().enumerate() {
        if drop[k] {
            removed.push(e.clone());
        } else {
            out.edges.push(e.clone());
        }
    }
    let all_removed = out.edges.is_empty() && m > 0;
    Ok(EdgeRemoval { graph: out, removed, all_removed })
}

/// Appends `edges` back onto a copy of `graph`.
pub fn restore_edges(graph: &MolecularGraph, edges: &[Edge]) -> MolecularGraph {
    let mut out = graph.clone();
    out.edges.extend_from_slice(edges);
    out
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    count: usize,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), count: n }
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        self.count -= 1;
        true
    }

    pub(crate) fn components(&self) -> usize {
        self.count
    }
}
