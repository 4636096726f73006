//! Quantitative estimate of drug-likeness: descriptors, asymmetric double
//! sigmoid desirabilities, their geometric mean, and a hinge penalty.

mod descriptors;

pub use descriptors::{compute_descriptors, compute_descriptors_with, DescriptorTables, Descriptors};

use serde::{Deserialize, Serialize};

/// Floor for desirabilities so that `ln d` stays finite.
pub const DESIRABILITY_FLOOR: f64 = 1e-6;

/// Default hinge threshold.
pub const DEFAULT_TAU: f64 = 0.5;

/// Asymmetric double sigmoid
/// `(a + b / (1 + e^{-(x - c + d/2)/e}) · (1 - 1 / (1 + e^{-(x - c - d/2)/f}))) / dmax`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesirabilityParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub dmax: f64,
}

impl DesirabilityParams {
    const fn new(p: [f64; 7]) -> Self {
        Self { a: p[0], b: p[1], c: p[2], d: p[3], e: p[4], f: p[5], dmax: p[6] }
    }

    /// Unclamped curve value.
    pub fn raw(&self, x: f64) -> f64 {
        let rise = 1.0 + (-(x - self.c + self.d / 2.0) / self.e).exp();
        let fall = 1.0 - 1.0 / (1.0 + (-(x - self.c - self.d / 2.0) / self.f).exp());
        (self.a + self.b / rise * fall) / self.dmax
    }

    pub fn is_valid(&self) -> bool {
        [self.a, self.b, self.c, self.d, self.e, self.f, self.dmax].iter().all(|v| v.is_finite())
            && self.e > 0.0
            && self.f > 0.0
            && self.dmax > 0.0
    }
}

/// Parameters from Bickerton et al. (2012), as distributed with RDKit's QED
/// module, in descriptor order `mw, logp, hbd, hba, psa, rotb, arom, alerts`.
pub const ADS_PARAMS: [DesirabilityParams; 8] = [
    DesirabilityParams::new([2.817065973, 392.5754953, 290.7489764, 2.419764353, 49.22325677, 65.37051707, 104.9805561]),
    DesirabilityParams::new([3.172690585, 137.8624751, 2.534937431, 4.581497897, 0.822739154, 0.576295591, 131.3186604]),
    DesirabilityParams::new([1.618662227, 1010.051101, 0.985094388, 0.000000001, 0.713820843, 0.920922555, 258.1632616]),
    DesirabilityParams::new([2.948620388, 160.4605972, 3.615294657, 4.435986202, 0.290141953, 1.300669958, 148.7763046]),
    DesirabilityParams::new([1.876861559, 125.2232657, 62.90773554, 87.83366614, 12.01999824, 28.51324732, 104.5686167]),
    DesirabilityParams::new([0.010000000, 272.4121427, 2.558379970, 1.565547684, 1.271567166, 2.758063707, 105.4420403]),
    DesirabilityParams::new([3.217788970, 957.7374108, 2.274627939, 0.000000001, 1.317690384, 0.375760881, 312.3372610]),
    DesirabilityParams::new([0.010000000, 1199.094025, -0.09002883, 0.000000001, 0.185904477, 0.875193782, 417.7253140]),
];

/// `d(x)` clamped to `[DESIRABILITY_FLOOR, 1]`. Non-finite curve values
/// fall to the floor.
pub fn desirability(params: &DesirabilityParams, value: f64) -> f64 {
    let d = params.raw(value);
    if d.is_nan() {
        DESIRABILITY_FLOOR
    } else {
        d.clamp(DESIRABILITY_FLOOR, 1.0)
    }
}

/// The eight desirabilities of `d`.
pub fn desirabilities(d: &Descriptors, params: &[DesirabilityParams; 8]) -> [f64; 8] {
    let x = d.to_array();
    std::array::from_fn(|k| desirability(&params[k], x[k]))
}

/// `exp(mean(ln dᵢ))`.
pub fn geometric_mean(ds: &[f64]) -> f64 {
    if ds.is_empty() {
        return 1.0;
    }
    (ds.iter().map(|d| d.ln()).sum::<f64>() / ds.len() as f64).exp()
}

pub fn qed_value(d: &Descriptors, params: &[DesirabilityParams; 8]) -> f64 {
    geometric_mean(&desirabilities(d, params))
}

/// Zero when `qed >= tau`, otherwise `(qed - tau)²`.
pub fn qed_loss(qed: f64, tau: f64) -> f64 {
    if qed >= tau {
        0.0
    } else {
        (qed - tau).powi(2)
    }
}

/// Derivative of [`qed_loss`] in `qed`, zero at the threshold.
pub fn qed_loss_grad(qed: f64, tau: f64) -> f64 {
    if qed >= tau {
        0.0
    } else {
        2.0 * (qed - tau)
    }
}
