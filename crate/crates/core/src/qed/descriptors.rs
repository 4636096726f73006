//! Descriptor computation from 3D graphs.
//!
//! Bonds are the graph edges whose length is within `bond_tolerance` of the
//! summed covalent radii. A bond is single when it is longer than the
//! summed radii minus `single_bond_margin`.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molgraph::{Element, MolecularGraph};

const BUNDLED_TABLES: &str = include_str!("../../data/descriptor_tables.txt");

/// The eight descriptors behind QED.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Descriptors {
    /// Molecular weight, g/mol.
    pub mw: f64,
    pub logp: f64,
    /// Hydrogen-bond donors.
    pub hbd: usize,
    /// Hydrogen-bond acceptors.
    pub hba: usize,
    /// Polar surface area, Å².
    pub psa: f64,
    /// Rotatable bonds.
    pub rotb: usize,
    /// Aromatic rings.
    pub arom: usize,
    /// Structural alerts. Always zero: no alert library is shipped.
    pub alerts: usize,
}

impl Descriptors {
    /// Values in the order `mw, logp, hbd, hba, psa, rotb, arom, alerts`.
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.mw,
            self.logp,
            self.hbd as f64,
            self.hba as f64,
            self.psa,
            self.rotb as f64,
            self.arom as f64,
            self.alerts as f64,
        ]
    }
}

/// Contribution tables for [`compute_descriptors_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorTables {
    pub mass: [f64; 5],
    pub logp: [f64; 5],
    pub logp_polar_h: f64,
    /// Keyed by element, heavy-atom degree and attached hydrogens.
    pub psa: HashMap<(Element, usize, usize), f64>,
    pub bond_tolerance: f64,
    pub single_bond_margin: f64,
}

impl Default for DescriptorTables {
    fn default() -> Self {
        Self::parse(BUNDLED_TABLES).expect("bundled descriptor tables parse")
    }
}

impl DescriptorTables {
    pub fn bundled_text() -> &'static str {
        BUNDLED_TABLES
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut mass = [f64::NAN; 5];
        let mut logp = [f64::NAN; 5];
        let mut logp_polar_h = None;
        let mut psa = HashMap::new();
        let mut bond_tolerance = None;
        let mut single_bond_margin = None;
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::parse(line_no, format!("bad number {s:?}")))
            };
            let count = |s: &str| -> Result<usize> {
                s.parse::<usize>().map_err(|_| Error::parse(line_no, format!("bad count {s:?}")))
            };
            let element = |s: &str| -> Result<Element> {
                Element::from_symbol(s).ok_or_else(|| Error::parse(line_no, format!("unknown element {s:?}")))
            };
            let arity = |n: usize| -> Result<()> {
                if tok.len() == n {
                    Ok(())
                } else {
                    Err(Error::parse(line_no, format!("{} expects {} fields", tok[0], n - 1)))
                }
            };
            match tok[0] {
                "mass" => {
                    arity(3)?;
                    mass[element(tok[1])?.index()] = num(tok[2])?;
                }
                "logp" => {
                    arity(3)?;
                    logp[element(tok[1])?.index()] = num(tok[2])?;
                }
                "logp_polar_h" => {
                    arity(2)?;
                    logp_polar_h = Some(num(tok[1])?);
                }
                "psa" => {
                    arity(5)?;
                    psa.insert((element(tok[1])?, count(tok[2])?, count(tok[3])?), num(tok[4])?);
                }
                "bond_tolerance" => {
                    arity(2)?;
                    bond_tolerance = Some(num(tok[1])?);
                }
                "single_bond_margin" => {
                    arity(2)?;
                    single_bond_margin = Some(num(tok[1])?);
                }
                other => return Err(Error::parse(line_no, format!("unknown entry {other:?}"))),
            }
        }
        for e in Element::ALL {
            if mass[e.index()].is_nan() || logp[e.index()].is_nan() {
                return Err(Error::parse(0, format!("missing mass or logp for {}", e.symbol())));
            }
        }
        let missing = |what: &str| Error::parse(0, format!("missing {what}"));
        Ok(Self {
            mass,
            logp,
            logp_polar_h: logp_polar_h.ok_or_else(|| missing("logp_polar_h"))?,
            psa,
            bond_tolerance: bond_tolerance.ok_or_else(|| missing("bond_tolerance"))?,
            single_bond_margin: single_bond_margin.ok_or_else(|| missing("single_bond_margin"))?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Bond {
    a: usize,
    b: usize,
    single: bool,
}

/// Descriptors with the bundled tables.
pub fn compute_descriptors(graph: &MolecularGraph) -> Result<Descriptors> {
    compute_descriptors_with(graph, &DescriptorTables::default())
}

pub fn compute_descriptors_with(graph: &MolecularGraph, tables: &DescriptorTables) -> Result<Descriptors> {
    let n = graph.n_atoms();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let elements: Vec<Element> = graph.atoms.iter().map(|a| a.element).collect();
    let bonds = perceive_bonds(graph, tables);
    let mut adjacency = vec![Vec::new(); n];
    for (k, b) in bonds.iter().enumerate() {
        adjacency[b.a].push(k);
        adjacency[b.b].push(k);
    }
    let other = |k: usize, i: usize| if bonds[k].a == i { bonds[k].b } else { bonds[k].a };
    let h_count: Vec<usize> =
        (0..n).map(|i| adjacency[i].iter().filter(|&&k| elements[other(k, i)] == Element::H).count()).collect();
    let heavy_degree: Vec<usize> = (0..n).map(|i| adjacency[i].len() - h_count[i]).collect();
    let polar = |e: Element| matches!(e, Element::N | Element::O);

    let mut d = Descriptors::default();
    for (i, &e) in elements.iter().enumerate() {
        d.mw += tables.mass[e.index()];
        d.logp += if e == Element::H && adjacency[i].iter().any(|&k| polar(elements[other(k, i)])) {
            tables.logp_polar_h
        } else {
            tables.logp[e.index()]
        };
        if polar(e) {
            d.hba += 1;
            if h_count[i] > 0 {
                d.hbd += 1;
            }
            d.psa += tables.psa.get(&(e, heavy_degree[i], h_count[i])).copied().unwrap_or(0.0);
        }
    }

    let in_ring: Vec<bool> = (0..bonds.len()).map(|k| is_ring_bond(n, &bonds, k)).collect();
    d.rotb = bonds
        .iter()
        .zip(&in_ring)
        .filter(|(b, &ring)| {
            b.single
                && !ring
                && elements[b.a] != Element::H
                && elements[b.b] != Element::H
                && heavy_degree[b.a] >= 2
                && heavy_degree[b.b] >= 2
        })
        .count();

    d.arom = smallest_rings(n, &bonds)
        .iter()
        .filter(|ring| {
            (ring.len() == 5 || ring.len() == 6)
                && ring.iter().all(|&k| {
                    let b = bonds[k];
                    !b.single && [b.a, b.b].iter().all(|&i| matches!(elements[i], Element::C | Element::N))
                })
        })
        .count();
    Ok(d)
}

fn perceive_bonds(graph: &MolecularGraph, tables: &DescriptorTables) -> Vec<Bond> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for e in &graph.edges {
        if e.i == e.j || !seen.insert(e.key()) {
            continue;
        }
        let ri = graph.atoms[e.i].element.covalent_radius();
        let rj = graph.atoms[e.j].element.covalent_radius();
        let d = graph.distance(e.i, e.j);
        if d <= tables.bond_tolerance * (ri + rj) {
            out.push(Bond { a: e.i, b: e.j, single: d > ri + rj - tables.single_bond_margin });
        }
    }
    out
}

/// Breadth-first path from `from` to `to` avoiding bond `skip`, as bond
/// indices.
fn shortest_path(n: usize, bonds: &[Bond], skip: usize, from: usize, to: usize) -> Option<Vec<usize>> {
    let mut adjacency = vec![Vec::new(); n];
    for (k, b) in bonds.iter().enumerate() {
        if k != skip {
            adjacency[b.a].push((b.b, k));
            adjacency[b.b].push((b.a, k));
        }
    }
    let mut via = vec![None; n];
    let mut visited = vec![false; n];
    visited[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = Vec::new();
            let mut cur = to;
            while let Some((prev, k)) = via[cur] {
                path.push(k);
                cur = prev;
            }
            return Some(path);
        }
        for &(v, k) in &adjacency[u] {
            if !visited[v] {
                visited[v] = true;
                via[v] = Some((u, k));
                queue.push_back(v);
            }
        }
    }
    None
}

fn is_ring_bond(n: usize, bonds: &[Bond], k: usize) -> bool {
    shortest_path(n, bonds, k, bonds[k].a, bonds[k].b).is_some()
}

/// A cycle basis of smallest rings: each bond outside a spanning forest
/// closes the shortest cycle through it. Rings are lists of bond indices.
fn smallest_rings(n: usize, bonds: &[Bond]) -> Vec<Vec<usize>> {
    let mut uf = crate::molgraph::UnionFind::new(n);
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for (k, b) in bonds.iter().enumerate() {
        if uf.union(b.a, b.b) {
            continue;
        }
        if let Some(mut path) = shortest_path(n, bonds, k, b.a, b.b) {
            path.push(k);
            path.sort_unstable();
            if !rings.contains(&path) {
                rings.push(path);
            }
        }
    }
    rings
}
