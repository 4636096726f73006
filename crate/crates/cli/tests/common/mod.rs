//! Independent reference implementations and fixtures for the integration
//! tests. Nothing here calls the routine it is used to check.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use xmpo::explain::Predictor;
use xmpo::molgraph::{
    build_edges, load_qm9_path, Atom, Edge, EdgeMode, Element, FeatureLayout, MolecularGraph, ParseOptions,
};
use xmpo::numcore::Matrix;

/// Largest singular value by one-sided Jacobi rotations on the columns.
pub fn jacobi_sigma_max(w: &Matrix) -> f64 {
    let (m, n) = w.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| w.column(c)).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = (0..m).map(|i| cols[p][i] * cols[q][i]).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let a = cols[p][i];
                    let b = cols[q][i];
                    cols[p][i] = c * a - s * b;
                    cols[q][i] = s * a + c * b;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Exact Shapley values of the edge game `v(S) = model(graph with edges S)`
/// from the factorial formula. Players are `graph.edges` in order.
pub fn factorial_shapley<P: Predictor>(model: &P, graph: &MolecularGraph) -> (Matrix, Vec<f64>, Vec<f64>) {
    let n = graph.edges.len();
    let p = model.outputs();
    let subsets = 1usize << n;
    let mut values = vec![vec![0.0; p]; subsets];
    for (code, slot) in values.iter_mut().enumerate() {
        let mut g = graph.clone();
        g.edges = graph.edges.iter().enumerate().filter(|(k, _)| code >> k & 1 == 1).map(|(_, e)| e.clone()).collect();
        let pred = model.predict_graphs(&[&g]).unwrap();
        slot.copy_from_slice(pred.row(0));
    }
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let mut phi = Matrix::zeros(n, p);
    for e in 0..n {
        for code in 0..subsets {
            if code >> e & 1 == 1 {
                continue;
            }
            let s = code.count_ones() as usize;
            let w = fact(s) * fact(n - s - 1) / fact(n);
            for k in 0..p {
                phi.set(e, k, phi.get(e, k) + w * (values[code | 1 << e][k] - values[code][k]));
            }
        }
    }
    (phi, values[0].clone(), values[subsets - 1].clone())
}

/// Five-point central difference of `f` at `theta` along coordinate `k`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, theta: &[f64], k: usize, eps: f64) -> f64 {
    let mut t = theta.to_vec();
    let mut at = |h: f64| {
        t[k] = theta[k] + h;
        f(&t)
    };
    let (p2, p1, m1, m2) = (at(2.0 * eps), at(eps), at(-eps), at(-2.0 * eps));
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Uniform random rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let q: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rotate(r: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2])
}

/// Rigid motion applied to every atom; edges are kept.
pub fn transform(graph: &MolecularGraph, r: &[[f64; 3]; 3], t: [f64; 3]) -> MolecularGraph {
    let mut g = graph.clone();
    for a in &mut g.atoms {
        let p = rotate(r, a.position);
        a.position = [p[0] + t[0], p[1] + t[1], p[2] + t[2]];
    }
    g
}

/// Random molecule-like graph: `n` atoms of random elements spread over a
/// few ångström, complete edges.
pub fn random_graph<R: Rng + ?Sized>(n: usize, rng: &mut R) -> MolecularGraph {
    let atoms = (0..n)
        .map(|_| {
            let e = Element::ALL[rng.random_range(0..Element::ALL.len())];
            let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            Atom::new(e, p, FeatureLayout::default())
        })
        .collect();
    build_edges(&MolecularGraph::new("random", atoms), EdgeMode::Complete)
}

/// Random graph with exactly `edges` distinct edges over `n` atoms.
pub fn random_sparse_graph<R: Rng + ?Sized>(n: usize, edges: usize, rng: &mut R) -> MolecularGraph {
    let mut g = random_graph(n, rng);
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    assert!(edges <= pairs.len(), "{edges} edges do not fit {n} atoms");
    for k in (1..pairs.len()).rev() {
        pairs.swap(k, rng.random_range(0..=k));
    }
    pairs.truncate(edges);
    pairs.sort();
    g.edges = pairs.into_iter().map(|(i, j)| Edge::new(i, j)).collect();
    g
}

/// The bundled QM9-format subset, or the directory named by `QM9_DIR`.
pub fn qm9_source() -> PathBuf {
    match std::env::var_os("QM9_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/qm9_subset.xyz"),
    }
}

pub fn load_qm9(limit: usize) -> Vec<MolecularGraph> {
    let load = load_qm9_path(&qm9_source(), &ParseOptions::default(), Some(limit)).expect("QM9 source readable");
    load.graphs.iter().map(|g| build_edges(g, EdgeMode::Auto)).collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
