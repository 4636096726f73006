//! Linear layers, perceptrons, parameter binding and the optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{certify, power_iteration, spectral_normalize, Gradients, Matrix, SpectralState, Tape, Var};

/// Affine map `x ↦ x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
    /// Present when this layer is spectrally normalized.
    pub spectral: Option<SpectralState>,
}

impl Linear {
    /// Uniform fan-in initialization, `U(-1/√in, 1/√in)` for weights and bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            weight: Matrix::random_uniform(input, output, bound, rng),
            bias: Matrix::random_uniform(1, output, bound, rng),
            spectral: None,
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Matrix::zeros(input, output), bias: Matrix::zeros(1, output), spectral: None }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Straight evaluation on one input row.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.weight.tr_matvec(x).expect("input width");
        out.iter_mut().zip(self.bias.as_slice()).for_each(|(o, b)| *o += b);
        out
    }

    /// Refreshes the spectral state with `steps` power iterations and
    /// divides the weight by the estimate. Layers without a state are left
    /// alone.
    pub fn renormalize(&mut self, steps: usize) -> Result<()> {
        let Some(state) = self.spectral.as_ref() else { return Ok(()) };
        let next = power_iteration(&self.weight, state, steps);
        self.rescale(next)
    }

    /// Like [`Linear::renormalize`] with a converged estimate from
    /// [`certify`].
    pub fn certify(&mut self) -> Result<()> {
        let Some(state) = self.spectral.as_ref() else { return Ok(()) };
        let next = certify(&self.weight, state);
        self.rescale(next)
    }

    fn rescale(&mut self, next: SpectralState) -> Result<()> {
        self.weight = spectral_normalize(&self.weight, &next)?;
        self.spectral = Some(SpectralState { sigma: 1.0, ..next });
        Ok(())
    }
}

/// Perceptron with SiLU between layers and optionally after the last one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub final_activation: bool,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(dims: &[usize], final_activation: bool, rng: &mut R) -> Self {
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self { layers, final_activation }
    }

    pub fn zeros(dims: &[usize], final_activation: bool) -> Self {
        let layers = dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Self { layers, final_activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Linear::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::output_dim)
    }

    /// Number of SiLU applications.
    pub fn activation_count(&self) -> usize {
        self.layers.len().saturating_sub(1) + usize::from(self.final_activation)
    }

    pub fn apply(&self, tape: &mut Tape, params: &mut Bound, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (k, _) in self.layers.iter().enumerate() {
            let (w, b) = params.next();
            h = tape.matmul(h, w)?;
            h = tape.add_bias(h, b)?;
            if k < last || self.final_activation {
                h = tape.silu(h)?;
            }
        }
        Ok(h)
    }

    /// Straight evaluation on one input row.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len().saturating_sub(1);
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.eval(&h);
            if k < last || self.final_activation {
                h.iter_mut().for_each(|v| *v = crate::numcore::silu(*v));
            }
        }
        h
    }
}

/// Tape variables for every `(weight, bias)` pair of a model, consumed in
/// [`Parameterized::linears`] order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<(Var, Var)>,
    cursor: usize,
}

impl Bound {
    pub fn next(&mut self) -> (Var, Var) {
        let v = self.vars[self.cursor];
        self.cursor += 1;
        v
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }

    pub fn vars(&self) -> &[(Var, Var)] {
        &self.vars
    }

    /// Gradients for each bound pair.
    pub fn collect(&self, grads: &Gradients) -> Vec<(Matrix, Matrix)> {
        self.vars.iter().map(|&(w, b)| (grads.wrt(w), grads.wrt(b))).collect()
    }
}

/// Anything made of [`Linear`] layers in a fixed order.
pub trait Parameterized {
    fn linears(&self) -> Vec<&Linear>;
    fn linears_mut(&mut self) -> Vec<&mut Linear>;

    fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .linears()
            .into_iter()
            .map(|l| (tape.param(l.weight.clone()), tape.param(l.bias.clone())))
            .collect();
        Bound { vars, cursor: 0 }
    }

    /// Binds every parameter as a constant (inference only).
    fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .linears()
            .into_iter()
            .map(|l| (tape.constant(l.weight.clone()), tape.constant(l.bias.clone())))
            .collect();
        Bound { vars, cursor: 0 }
    }

    fn param_count(&self) -> usize {
        self.linears().iter().map(|l| l.param_count()).sum()
    }

    /// Weights then bias of each layer, concatenated.
    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.linears() {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!("{} parameters expected, got {}", self.param_count(), values.len())));
        }
        let mut offset = 0;
        for l in self.linears_mut() {
            let nw = l.weight.len();
            l.weight.as_mut_slice().copy_from_slice(&values[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&values[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }
}

/// Flattens per-layer gradients in [`Parameterized::flat_params`] order.
pub fn flatten_grads(grads: &[(Matrix, Matrix)]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in grads {
        out.extend_from_slice(w.as_slice());
        out.extend_from_slice(b.as_slice());
    }
    out
}

/// Gradient descent with heavy-ball momentum.
#[derive(Clone, Debug)]
pub struct Momentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<(Matrix, Matrix)>,
}

impl Momentum {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, velocity: Vec::new() }
    }

    /// `v ← μ·v + g`, `θ ← θ − lr·v`.
    pub fn step<P: Parameterized + ?Sized>(&mut self, model: &mut P, grads: &[(Matrix, Matrix)]) -> Result<()> {
        let mut linears = model.linears_mut();
        if grads.len() != linears.len() {
            return Err(Error::Shape(format!("{} gradient pairs for {} layers", grads.len(), linears.len())));
        }
        if self.velocity.is_empty() {
            self.velocity = grads
                .iter()
                .map(|(w, b)| (Matrix::zeros(w.rows(), w.cols()), Matrix::zeros(b.rows(), b.cols())))
                .collect();
        }
        for ((layer, (gw, gb)), (vw, vb)) in linears.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            update(&mut layer.weight, vw, gw, self.lr, self.momentum);
            update(&mut layer.bias, vb, gb, self.lr, self.momentum);
        }
        Ok(())
    }
}

fn update(param: &mut Matrix, vel: &mut Matrix, grad: &Matrix, lr: f64, mu: f64) {
    for ((p, v), g) in param.as_mut_slice().iter_mut().zip(vel.as_mut_slice()).zip(grad.as_slice()) {
        *v = mu * *v + g;
        *p -= lr * *v;
    }
}
