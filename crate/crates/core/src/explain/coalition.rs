use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::error::{Error, Result};

/// Weight given to the empty and the full coalition.
pub const SENTINEL_WEIGHT: f64 = 1e6;

/// Cap on the default number of coalitions.
pub const DEFAULT_MAX_SAMPLES: usize = 2048;

/// Coalition masks over the players and their kernel weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Coalitions {
    pub n_players: usize,
    pub masks: Vec<Vec<bool>>,
    pub weights: Vec<f64>,
}

impl Coalitions {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// `(n − 1) / (C(n, s) · s · (n − s))` for `0 < s < n`.
pub fn kernel_weight(n: usize, s: usize) -> f64 {
    assert!(s > 0 && s < n, "kernel weight needs 0 < s < n");
    (n - 1) as f64 / (binomial(n, s) * s as f64 * (n - s) as f64)
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `min(2ⁿ, DEFAULT_MAX_SAMPLES)`.
pub fn default_samples(n_players: usize) -> usize {
    enumeration_size(n_players).map_or(DEFAULT_MAX_SAMPLES, |total| total.min(DEFAULT_MAX_SAMPLES))
}

fn enumeration_size(n: usize) -> Option<usize> {
    1usize.checked_shl(n as u32).filter(|_| n < usize::BITS as usize)
}

/// Every coalition with the exact kernel weights, in binary counting order
/// (player 0 is the least significant bit).
pub fn enumerate_coalitions(n_players: usize) -> Result<Coalitions> {
    if n_players == 0 {
        return Err(Error::NothingToExplain);
    }
    let total = enumeration_size(n_players)
        .filter(|&t| t <= 1 << 24)
        .ok_or(Error::TooManyPlayers { max: 24, got: n_players })?;
    let mut masks = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for code in 0..total {
        let mask: Vec<bool> = (0..n_players).map(|i| code >> i & 1 == 1).collect();
        let s = mask.iter().filter(|&&b| b).count();
        weights.push(if s == 0 || s == n_players { SENTINEL_WEIGHT } else { kernel_weight(n_players, s) });
        masks.push(mask);
    }
    Ok(Coalitions { n_players, masks, weights })
}

/// Coalitions for a KernelSHAP solve.
///
/// With `n_samples ≥ 2ⁿ` every coalition is enumerated. Otherwise the empty
/// and full coalitions are always included, and the remaining
/// `n_samples − 2` draws pick a size with probability proportional to its
/// total kernel mass and then a uniform subset of that size. Repeated
/// subsets are merged; each distinct subset is weighted by its draw count
/// times `mass / draws`, which equals the exact kernel weight in
/// expectation.
pub fn sample_coalitions<R: Rng + ?Sized>(n_players: usize, n_samples: usize, rng: &mut R) -> Result<Coalitions> {
    if n_players == 0 {
        return Err(Error::NothingToExplain);
    }
    if n_samples < 2 {
        return Err(Error::Config(format!("at least 2 coalitions are needed, got {n_samples}")));
    }
    if enumeration_size(n_players).is_some_and(|t| n_samples >= t) {
        return enumerate_coalitions(n_players);
    }
    let n = n_players;
    let size_mass: Vec<f64> = (1..n).map(|s| (n - 1) as f64 / (s * (n - s)) as f64).collect();
    let total_mass: f64 = size_mass.iter().sum();
    let draws = n_samples - 2;
    let mut counts: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
    for _ in 0..draws {
        let mut u = rng.random::<f64>() * total_mass;
        let mut s = n - 1;
        for (k, m) in size_mass.iter().enumerate() {
            if u < *m {
                s = k + 1;
                break;
            }
            u -= m;
        }
        let mut mask = vec![false; n];
        for i in sample_indices(rng, n, s) {
            mask[i] = true;
        }
        *counts.entry(mask).or_insert(0) += 1;
    }
    let mut masks = vec![vec![false; n], vec![true; n]];
    let mut weights = vec![SENTINEL_WEIGHT, SENTINEL_WEIGHT];
    let per_draw = if draws > 0 { total_mass / draws as f64 } else { 0.0 };
    for (mask, count) in counts {
        masks.push(mask);
        weights.push(count as f64 * per_draw);
    }
    Ok(Coalitions { n_players, masks, weights })
}
