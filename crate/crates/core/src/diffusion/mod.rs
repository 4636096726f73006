//! Conditional denoising diffusion over atom coordinates and element
//! features.

mod model;
mod schedule;

pub use model::{time_embedding, DenoiserBatch, DenoiserConfig, DenoiserModel};
pub use schedule::{NoiseSchedule, MAX_BETA, SCHEDULE_OFFSET};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::molgraph::{build_edges, mean_position, Atom, EdgeMode, Element, FeatureLayout, MolecularGraph};
use crate::numcore::{Matrix, Tape, Var};

/// Largest center-of-mass offset accepted by [`noise_sample`].
pub const CENTER_TOLERANCE: f64 = 1e-9;

/// Bound on the implied clean coordinates during sampling, Å.
pub const CLEAN_COORD_LIMIT: f64 = 10.0;

/// Bound on the implied clean features during sampling.
pub const CLEAN_FEATURE_LIMIT: f64 = 2.0;

/// A noised molecule with the noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionState {
    /// Noised coordinates and features; edges are carried over unchanged.
    pub noised: MolecularGraph,
    pub t: usize,
    /// Injected noise, `N x (3 + features)`, coordinate block first.
    pub epsilon: Matrix,
    pub condition: Vec<f64>,
}

/// Standard normal matrix.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

/// Subtracts the column means of the first three columns.
pub fn center_coordinates(m: &mut Matrix) {
    let n = m.rows();
    if n == 0 {
        return;
    }
    for c in 0..3 {
        let mean = m.column(c).iter().sum::<f64>() / n as f64;
        for r in 0..n {
            m.set(r, c, m.get(r, c) - mean);
        }
    }
}

/// Draws `ε` (coordinate block projected to zero mean) and returns
/// `√ᾱ_t·z₀ + σ_t·ε`. The condition is the graph's property vector.
pub fn noise_sample<R: Rng + ?Sized>(
    graph: &MolecularGraph,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<DiffusionState> {
    schedule.check_step(t)?;
    let n = graph.n_atoms();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let com = graph.center_of_mass();
    let offset = com.iter().map(|c| c.abs()).fold(0.0, f64::max);
    if offset > CENTER_TOLERANCE {
        return Err(Error::NotCentered(offset));
    }
    let nf = graph.feature_width();
    let mut epsilon = standard_normal(n, 3 + nf, rng);
    center_coordinates(&mut epsilon);
    let a = schedule.signal_scale(t);
    let s = schedule.sigma[t];
    let mut noised = graph.clone();
    for (i, atom) in noised.atoms.iter_mut().enumerate() {
        let eps = epsilon.row(i);
        for d in 0..3 {
            atom.position[d] = a * atom.position[d] + s * eps[d];
        }
        for (k, f) in atom.features.iter_mut().enumerate() {
            *f = a * *f + s * eps[3 + k];
        }
    }
    Ok(DiffusionState { noised, t, epsilon, condition: graph.properties.clone() })
}

/// Predicted noise for one state.
pub fn denoise_predict(denoiser: &DenoiserModel, state: &DiffusionState, steps: usize) -> Result<Matrix> {
    denoiser.predict(&[state], steps)
}

/// `½·mean((ε - ε̂)²)` over every noise entry.
pub fn l_dm(epsilon: &Matrix, epsilon_hat: &Matrix) -> Result<f64> {
    if epsilon.shape() != epsilon_hat.shape() {
        return Err(Error::Shape(format!("noise {:?} vs prediction {:?}", epsilon.shape(), epsilon_hat.shape())));
    }
    if epsilon.is_empty() {
        return Ok(0.0);
    }
    let sq: f64 = epsilon.as_slice().iter().zip(epsilon_hat.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(0.5 * sq / epsilon.len() as f64)
}

/// [`l_dm`] as a tape node.
pub fn l_dm_on_tape(tape: &mut Tape, prediction: Var, epsilon: &Matrix) -> Result<Var> {
    let target = tape.constant(epsilon.clone());
    let diff = tape.sub(prediction, target)?;
    let sq = tape.square(diff)?;
    let mean = tape.mean(sq)?;
    tape.scale(mean, 0.5)
}

/// Ancestral sampling of one molecule with `n_atoms` atoms conditioned on
/// `condition`. Each step forms the clean estimate implied by the predicted
/// noise, clips it to [`CLEAN_COORD_LIMIT`] / [`CLEAN_FEATURE_LIMIT`], and
/// draws from the Gaussian posterior around it. Elements are decoded by
/// argmax and edges rebuilt with [`EdgeMode::Auto`]; the returned graph
/// carries `condition` as its properties.
pub fn sample<R: Rng + ?Sized>(
    denoiser: &DenoiserModel,
    n_atoms: usize,
    condition: &[f64],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<MolecularGraph> {
    if n_atoms == 0 {
        return Err(Error::EmptyGraph);
    }
    let nf = denoiser.config.node_features;
    let layout = FeatureLayout { charge_channel: nf == Element::ALL.len() + 1 };
    if layout.width() != nf {
        return Err(Error::Shape(format!("denoiser feature width {nf} matches no atom layout")));
    }
    let mut z = standard_normal(n_atoms, 3 + nf, rng);
    center_coordinates(&mut z);
    for t in (1..=schedule.steps).rev() {
        let state = DiffusionState {
            noised: state_graph(&z, nf, layout),
            t,
            epsilon: Matrix::zeros(n_atoms, 3 + nf),
            condition: condition.to_vec(),
        };
        let eps_hat = denoiser.predict(&[&state], schedule.steps)?;
        if !eps_hat.is_finite() {
            return Err(Error::NonFinite(format!("denoiser output at step {t}")));
        }
        let beta = schedule.beta(t);
        let ab = schedule.alpha_bar[t];
        let ab_prev = schedule.alpha_bar[t - 1];
        let c_clean = ab_prev.sqrt() * beta / (1.0 - ab);
        let c_noisy = (1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let std = schedule.posterior_variance(t).sqrt();
        let fresh = if t > 1 {
            let mut f = standard_normal(n_atoms, 3 + nf, rng);
            center_coordinates(&mut f);
            Some(f)
        } else {
            None
        };
        let width = 3 + nf;
        for (k, v) in z.as_mut_slice().iter_mut().enumerate() {
            let limit = if k % width < 3 { CLEAN_COORD_LIMIT } else { CLEAN_FEATURE_LIMIT };
            let clean = ((*v - schedule.sigma[t] * eps_hat.as_slice()[k]) / ab.sqrt()).clamp(-limit, limit);
            *v = c_clean * clean + c_noisy * *v;
            if let Some(f) = &fresh {
                *v += std * f.as_slice()[k];
            }
        }
        center_coordinates(&mut z);
    }
    let mut g = state_graph(&z, nf, layout);
    for a in &mut g.atoms {
        a.element = layout.decode(&a.features);
        a.features = layout.encode(a.element);
    }
    let com = mean_position(&g.positions());
    for a in &mut g.atoms {
        for d in 0..3 {
            a.position[d] -= com[d];
        }
    }
    let mut g = build_edges(&g, EdgeMode::Auto);
    g.id = "sample".into();
    g.properties = condition.to_vec();
    Ok(g)
}

fn state_graph(z: &Matrix, nf: usize, layout: FeatureLayout) -> MolecularGraph {
    let atoms = (0..z.rows())
        .map(|i| {
            let row = z.row(i);
            let features = row[3..3 + nf].to_vec();
            Atom { element: layout.decode(&features), features, position: [row[0], row[1], row[2]] }
        })
        .collect();
    MolecularGraph::new("state", atoms)
}

/// Extended-XYZ text whose comment line carries the condition and seed.
pub fn to_xyz(graph: &MolecularGraph, property_names: &[&str], seed: u64) -> String {
    let cond: Vec<String> = graph.properties.iter().map(|v| format!("{v:?}")).collect();
    let mut out = format!(
        "{}\nproperties={} condition={} seed={}\n",
        graph.n_atoms(),
        property_names.join(","),
        cond.join(","),
        seed
    );
    for a in &graph.atoms {
        let [x, y, z] = a.position;
        out.push_str(&format!("{} {x:.10} {y:.10} {z:.10}\n", a.element.symbol()));
    }
    out
}

/// Reads the first frame of an XYZ file. Columns past the coordinates are
/// ignored; a `condition=` entry on the comment line becomes the property
/// vector. Edges are built with [`EdgeMode::Auto`].
pub fn from_xyz(text: &str, layout: FeatureLayout) -> Result<MolecularGraph> {
    let mut lines = text.lines();
    let count_line = lines.next().ok_or(Error::EmptyRecord)?;
    let n: usize = count_line.trim().parse().map_err(|_| Error::parse(1, format!("bad atom count {count_line:?}")))?;
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let comment = lines.next().ok_or_else(|| Error::parse(2, "missing comment line"))?;
    let mut properties = Vec::new();
    for token in comment.split_whitespace() {
        if let Some(values) = token.strip_prefix("condition=") {
            properties = values
                .split(',')
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<f64>().map_err(|_| Error::parse(2, format!("bad condition value {v:?}"))))
                .collect::<Result<_>>()?;
        }
    }
    let mut atoms = Vec::with_capacity(n);
    for k in 0..n {
        let line_no = k + 3;
        let line = lines.next().ok_or_else(|| Error::parse(line_no, format!("expected {n} atom lines")))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 4 {
            return Err(Error::parse(line_no, format!("atom line needs 4 fields: {line:?}")));
        }
        let element =
            Element::from_symbol(f[0]).ok_or_else(|| Error::parse(line_no, format!("unknown element {:?}", f[0])))?;
        let mut pos = [0.0; 3];
        for d in 0..3 {
            let tok = crate::molgraph::normalize_fortran_exponent(f[d + 1]);
            pos[d] = tok.parse().map_err(|_| Error::parse(line_no, format!("bad coordinate {:?}", f[d + 1])))?;
        }
        atoms.push(Atom::new(element, pos, layout));
    }
    let mut g = MolecularGraph::new("xyz", atoms);
    g.properties = properties;
    Ok(build_edges(&g, EdgeMode::Auto))
}
