//! Power iteration and spectral normalization of weight matrices.
//!
//! For a weight `W` (rows × cols) the state keeps estimates of the leading
//! left and right singular vectors. Each step applies
//!
//! ```text
//! v ← Wᵀu / ‖Wᵀu‖,   u ← Wv / ‖Wv‖,   σ ← ‖Wv‖
//! ```
//!
//! which is power iteration on `WᵀW`; the Rayleigh quotient it reports never
//! decreases on a fixed `W` and approaches the largest singular value from
//! below.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::matrix::{norm2, Matrix};
use crate::error::{Error, Result};

/// Steps per training update; `u` and `v` persist between updates.
pub const TRAINING_STEPS: usize = 1;
/// Minimum steps when certifying a weight from a cold or warm start.
pub const CERTIFY_STEPS: usize = 50;
/// Certification stops once a step raises the estimate by less than this,
/// relative.
pub const CERTIFY_TOLERANCE: f64 = 1e-14;
/// Hard cap on certification steps.
pub const CERTIFY_MAX_STEPS: usize = 100_000;
/// Below this the matrix is treated as zero.
pub const DEGENERATE_SIGMA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: f64,
    /// Set when the last iteration met a zero matrix.
    #[serde(default)]
    pub degenerate: bool,
}

impl SpectralState {
    /// Random unit vectors for a `rows x cols` weight.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut draw = |n: usize| {
            let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            normalize_or_basis(&mut x);
            x
        };
        let u = draw(rows);
        let v = draw(cols);
        Self { u, v, sigma: 0.0, degenerate: false }
    }

    /// Deterministic start: both vectors uniform.
    pub fn uniform(rows: usize, cols: usize) -> Self {
        let mut u = vec![1.0; rows];
        let mut v = vec![1.0; cols];
        normalize_or_basis(&mut u);
        normalize_or_basis(&mut v);
        Self { u, v, sigma: 0.0, degenerate: false }
    }

    fn fits(&self, w: &Matrix) -> bool {
        self.u.len() == w.rows() && self.v.len() == w.cols()
    }
}

fn normalize_or_basis(x: &mut [f64]) {
    let n = norm2(x);
    if n > 0.0 && n.is_finite() {
        x.iter_mut().for_each(|v| *v /= n);
    } else if let Some(first) = x.first_mut() {
        *first = 1.0;
        x.iter_mut().skip(1).for_each(|v| *v = 0.0);
    }
}

/// Runs `steps` rounds of power iteration on `w` starting from `state`.
///
/// A zero matrix yields `sigma = 0` with `degenerate` set instead of dividing
/// by zero.
pub fn power_iteration(w: &Matrix, state: &SpectralState, steps: usize) -> SpectralState {
    let mut s = if state.fits(w) { state.clone() } else { SpectralState::uniform(w.rows(), w.cols()) };
    if w.frobenius_norm() == 0.0 {
        s.sigma = 0.0;
        s.degenerate = true;
        return s;
    }
    s.degenerate = false;
    for _ in 0..steps.max(1) {
        let mut v = w.tr_matvec(&s.u).expect("state fits");
        if norm2(&v) == 0.0 {
            // u is orthogonal to the column space; restart from the largest row.
            let best = (0..w.rows())
                .max_by(|&a, &b| norm2(w.row(a)).total_cmp(&norm2(w.row(b))))
                .unwrap_or(0);
            v = w.row(best).to_vec();
        }
        normalize_or_basis(&mut v);
        let mut u = w.matvec(&v).expect("state fits");
        let sigma = norm2(&u);
        normalize_or_basis(&mut u);
        s.u = u;
        s.v = v;
        s.sigma = sigma;
    }
    s
}

/// Power iteration for at least [`CERTIFY_STEPS`] steps and then until the
/// estimate settles (see [`CERTIFY_TOLERANCE`]). A fixed budget is not
/// enough when the two leading singular values are close.
pub fn certify(w: &Matrix, state: &SpectralState) -> SpectralState {
    let mut s = power_iteration(w, state, CERTIFY_STEPS);
    let mut steps = CERTIFY_STEPS;
    while !s.degenerate && steps < CERTIFY_MAX_STEPS {
        let next = power_iteration(w, &s, 1);
        let gain = (next.sigma - s.sigma).abs() / next.sigma;
        s = next;
        steps += 1;
        if gain <= CERTIFY_TOLERANCE {
            break;
        }
    }
    s
}

/// `w / sigma` using the estimate in `state`.
pub fn spectral_normalize(w: &Matrix, state: &SpectralState) -> Result<Matrix> {
    if !(state.sigma >= DEGENERATE_SIGMA) || state.degenerate {
        return Err(Error::DegenerateWeight { sigma: state.sigma });
    }
    Ok(w.scale(1.0 / state.sigma))
}
