//! Loss assembly, training loops and evaluation.

mod history;

pub use history::{History, HistoryRow, HISTORY_HEADER};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{l_dm_on_tape, noise_sample, sample, DenoiserConfig, DenoiserModel, NoiseSchedule};
use crate::egnn::{EgnnConfig, EgnnModel, GraphBatch, Momentum, Parameterized, SpectralScope};
use crate::error::{Error, Result};
use crate::explain::{explain_graph, fidelity_loss, Accuracy};
use crate::molgraph::{canonicalize_com, Dataset, MolecularGraph, Property, Split};
use crate::numcore::{Matrix, Tape, Var, TRAINING_STEPS};
use crate::qed::{compute_descriptors, qed_loss, qed_value, ADS_PARAMS};

/// How the sample-based terms influence the denoiser update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerMode {
    /// Reported in the history and the total only.
    #[default]
    LogOnly,
    /// The `L_DM` gradient is multiplied by
    /// `1 + qed_loss + l_egnn + max(l_fidelity, 0)` using the most recent
    /// values.
    LossScaling,
}

/// Preset switching the periodic terms of diffusion training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// `L_DM` with the sample `L_EGNN`; no QED, no fidelity.
    Ours,
    /// Adds the QED hinge.
    OursQed,
    /// QED and fidelity.
    Full,
    /// `Full` with a single target property.
    FullSingle,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Ours, Ablation::OursQed, Ablation::Full, Ablation::FullSingle];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Ours => "ours",
            Ablation::OursQed => "ours-qed",
            Ablation::Full => "full",
            Ablation::FullSingle => "full-single",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Properties to model, in output order.
    pub properties: Vec<Property>,
    /// Weights of the per-property errors; uniform when `None`.
    pub property_weights: Option<Vec<f64>>,
    /// QED hinge threshold.
    pub tau: f64,
    pub lr: f64,
    pub momentum: f64,
    /// Passes over the training split (property model).
    pub epochs: usize,
    /// Optimizer steps (denoiser).
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Steps between sample-based `L_EGNN` refreshes; `None` disables.
    pub egnn_period: Option<usize>,
    /// Steps between QED refreshes; `None` disables.
    pub qed_period: Option<usize>,
    /// Steps between fidelity refreshes; `None` disables.
    pub fidelity_period: Option<usize>,
    /// Molecules drawn per refresh of the sample-based terms.
    pub sample_batch: usize,
    pub regularizer_mode: RegularizerMode,
    pub drop_fraction: f64,
    pub accuracy: Accuracy,
    /// Coalitions per explanation; `min(2ⁿ, 2048)` when `None`.
    pub shapley_samples: Option<usize>,
    /// Split the denoiser trains on.
    pub diffusion_split: Split,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            properties: Property::ALL.to_vec(),
            property_weights: None,
            tau: crate::qed::DEFAULT_TAU,
            lr: 1e-3,
            momentum: 0.9,
            epochs: 200,
            steps: 300,
            batch_size: 16,
            seed: 0,
            egnn_period: Some(10),
            qed_period: Some(10),
            fidelity_period: Some(10),
            sample_batch: 2,
            regularizer_mode: RegularizerMode::LogOnly,
            drop_fraction: crate::explain::DEFAULT_DROP_FRACTION,
            accuracy: Accuracy::Reciprocal,
            shapley_samples: Some(256),
            diffusion_split: Split::Val,
        }
    }
}

impl TrainingConfig {
    /// Learning rate and batch size used by [`TrainingConfig::for_egnn`].
    pub const EGNN_LR: f64 = 1e-2;
    pub const EGNN_BATCH: usize = 4;
    /// Learning rate and batch size used by [`TrainingConfig::for_diffusion`].
    pub const DIFFUSION_LR: f64 = 2e-2;
    pub const DIFFUSION_BATCH: usize = 8;

    /// Defaults with the optimizer settings of the property model loop.
    pub fn for_egnn() -> Self {
        Self { lr: Self::EGNN_LR, batch_size: Self::EGNN_BATCH, ..Self::default() }
    }

    /// Defaults with the optimizer settings of the denoiser loop.
    pub fn for_diffusion() -> Self {
        Self { lr: Self::DIFFUSION_LR, batch_size: Self::DIFFUSION_BATCH, ..Self::default() }
    }

    /// Applies an ablation preset to the periodic terms and, for
    /// [`Ablation::FullSingle`], keeps only the first property.
    pub fn with_ablation(mut self, ablation: Ablation, period: usize) -> Self {
        self.egnn_period = Some(period);
        self.qed_period = None;
        self.fidelity_period = None;
        match ablation {
            Ablation::Ours => {}
            Ablation::OursQed => self.qed_period = Some(period),
            Ablation::Full | Ablation::FullSingle => {
                self.qed_period = Some(period);
                self.fidelity_period = Some(period);
            }
        }
        if ablation == Ablation::FullSingle {
            self.properties.truncate(1);
            self.property_weights = None;
        }
        self
    }

    /// Normalized property weights.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let p = self.properties.len();
        match &self.property_weights {
            None => Ok(vec![1.0 / p as f64; p]),
            Some(w) => {
                if w.len() != p {
                    return Err(Error::Config(format!("{} weights for {p} properties", w.len())));
                }
                let total: f64 = w.iter().sum();
                if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(total > 0.0) {
                    return Err(Error::Config(format!("weights must be non-negative with a positive sum: {w:?}")));
                }
                Ok(w.iter().map(|x| x / total).collect())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.properties.is_empty() {
            return Err(Error::Config("at least one property is required".into()));
        }
        self.weights()?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("learning rate must be ≥ 0 and momentum in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.sample_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        for (name, p) in [("egnn", self.egnn_period), ("qed", self.qed_period), ("fidelity", self.fidelity_period)] {
            if p == Some(0) {
                return Err(Error::Config(format!("{name} period must be ≥ 1")));
            }
        }
        if !(self.drop_fraction > 0.0 && self.drop_fraction < 1.0) {
            return Err(Error::Config(format!("drop fraction must lie in (0, 1), got {}", self.drop_fraction)));
        }
        Ok(())
    }

    pub fn property_columns(&self) -> Vec<usize> {
        self.properties.iter().map(|p| p.index()).collect()
    }
}

/// `Σ_i w_i · mean_b |ŷ_bi − y_bi|` for `B x P` matrices.
pub fn l_egnn(y: &Matrix, y_hat: &Matrix, weights: &[f64]) -> Result<f64> {
    if y.shape() != y_hat.shape() || weights.len() != y.cols() {
        return Err(Error::Shape(format!(
            "targets {:?}, predictions {:?}, {} weights",
            y.shape(),
            y_hat.shape(),
            weights.len()
        )));
    }
    let b = y.rows().max(1) as f64;
    Ok((0..y.cols())
        .map(|i| {
            let mae: f64 = (0..y.rows()).map(|r| (y_hat.get(r, i) - y.get(r, i)).abs()).sum::<f64>() / b;
            weights[i] * mae
        })
        .sum())
}

/// [`l_egnn`] as a tape node.
pub fn l_egnn_on_tape(tape: &mut Tape, prediction: Var, targets: &Matrix, weights: &[f64]) -> Result<Var> {
    let b = targets.rows().max(1) as f64;
    let y = tape.constant(targets.clone());
    let diff = tape.sub(prediction, y)?;
    let abs = tape.abs(diff)?;
    let w: Vec<f64> = weights.iter().map(|w| w / b).collect();
    let wcol = tape.constant(Matrix::column_vector(&w));
    let per_row = tape.matmul(abs, wcol)?;
    tape.sum(per_row)
}

/// `l_dm + l_egnn + l_fidelity`, refusing non-finite terms.
pub fn total_loss(l_dm: f64, l_egnn: f64, l_fidelity: f64) -> Result<f64> {
    for (name, v) in [("l_dm", l_dm), ("l_egnn", l_egnn), ("l_fidelity", l_fidelity)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} = {v}")));
        }
    }
    Ok(l_dm + l_egnn + l_fidelity)
}

/// Property-target matrix of `graphs` for the selected columns.
pub fn target_matrix(graphs: &[&MolecularGraph], columns: &[usize]) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = graphs
        .iter()
        .map(|g| {
            columns
                .iter()
                .map(|&c| {
                    g.properties
                        .get(c)
                        .copied()
                        .ok_or_else(|| Error::Shape(format!("graph {} lacks property column {c}", g.id)))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Matrix::from_rows(&rows)
}

/// Copy of `graph` whose properties are restricted to `columns`.
pub fn select_properties(graph: &MolecularGraph, columns: &[usize]) -> MolecularGraph {
    let mut g = graph.clone();
    g.properties = columns.iter().map(|&c| graph.properties[c]).collect();
    g
}

fn rng_pair(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let train = ChaCha8Rng::seed_from_u64(seed);
    let mut sampling = ChaCha8Rng::seed_from_u64(seed);
    sampling.set_stream(1);
    (train, sampling)
}

/// Trains a property model on the training split with standardized
/// targets. Row 0 of the history is the loss before any update; row `e` is
/// the mean minibatch loss of epoch `e`.
pub fn train_egnn(dataset: &Dataset, model_config: EgnnConfig, config: &TrainingConfig) -> Result<(EgnnModel, History)> {
    config.validate()?;
    let columns = config.property_columns();
    if model_config.properties != columns.len() {
        return Err(Error::Config(format!(
            "model predicts {} properties, training selects {}",
            model_config.properties,
            columns.len()
        )));
    }
    let weights = config.weights()?;
    let train = dataset.split(Split::Train);
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut rng, _) = rng_pair(config.seed);
    let mut model = EgnnModel::new(model_config, &mut rng)?;
    let mut opt = Momentum::new(config.lr, config.momentum);
    let mut history = History::default();

    let all_targets = target_matrix(&train, &columns)?;
    let initial = l_egnn(&all_targets, &model.predict(&train)?, &weights)?;
    history.push(HistoryRow { step: 0, l_dm: None, l_egnn: Some(initial), qed_loss: None, l_fidelity: None, total: initial });

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let graphs: Vec<&MolecularGraph> = chunk.iter().map(|&k| train[k]).collect();
            let targets = target_matrix(&graphs, &columns)?;
            let batch = GraphBatch::new(&graphs, model.config.coord_norm)?;
            let mut tape = Tape::new();
            let mut params = model.bind(&mut tape);
            let pred = model.forward_on_tape(&mut tape, &mut params, &batch)?;
            let loss = l_egnn_on_tape(&mut tape, pred, &targets, &weights)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("l_egnn = {value} at epoch {epoch}")));
            }
            let grads = params.collect(&tape.backward(loss)?);
            opt.step(&mut model, &grads)?;
            if model.config.spectral != SpectralScope::Off {
                model.apply_spectral_norm(TRAINING_STEPS)?;
            }
            sum += value;
            batches += 1;
        }
        let mean = sum / batches as f64;
        history.push(HistoryRow { step: epoch, l_dm: None, l_egnn: Some(mean), qed_loss: None, l_fidelity: None, total: mean });
    }
    Ok((model, history))
}

/// Most recent values of the sample-based terms.
#[derive(Clone, Copy, Debug, Default)]
struct Regularizers {
    l_egnn: Option<f64>,
    qed: Option<f64>,
    fidelity: Option<f64>,
}

fn due(period: Option<usize>, step: usize) -> bool {
    period.is_some_and(|p| (step - 1) % p == 0)
}

/// Trains a conditional denoiser. Each step draws a minibatch, a timestep
/// per molecule and fresh noise, and takes one momentum step on `L_DM`.
/// Every `egnn_period` / `qed_period` / `fidelity_period` steps a few
/// molecules are sampled from the current denoiser on a separate random
/// stream to refresh the corresponding terms; `egnn` scores the samples.
pub fn train_diffusion(
    dataset: &Dataset,
    egnn: Option<&EgnnModel>,
    model_config: DenoiserConfig,
    schedule: &NoiseSchedule,
    config: &TrainingConfig,
) -> Result<(DenoiserModel, History)> {
    config.validate()?;
    let columns = config.property_columns();
    if model_config.properties != columns.len() {
        return Err(Error::Config(format!(
            "denoiser conditions on {} properties, training selects {}",
            model_config.properties,
            columns.len()
        )));
    }
    let needs_egnn = config.egnn_period.is_some() || config.fidelity_period.is_some();
    if needs_egnn {
        let m = egnn.ok_or_else(|| Error::Config("sample L_EGNN and fidelity need a property model".into()))?;
        if m.config.properties != columns.len() {
            return Err(Error::Config(format!(
                "property model predicts {}, training selects {}",
                m.config.properties,
                columns.len()
            )));
        }
    }
    let weights = config.weights()?;
    let mut pool: Vec<MolecularGraph> = dataset
        .split(config.diffusion_split)
        .into_iter()
        .map(|g| select_properties(&canonicalize_com(g), &columns))
        .collect();
    if pool.is_empty() {
        pool = dataset.graphs.iter().map(|g| select_properties(&canonicalize_com(g), &columns)).collect();
    }
    if pool.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut rng, mut sample_rng) = rng_pair(config.seed);
    let mut model = DenoiserModel::new(model_config, &mut rng)?;
    let mut opt = Momentum::new(config.lr, config.momentum);
    let mut history = History::default();
    let mut regs = Regularizers::default();

    for step in 1..=config.steps {
        if due(config.egnn_period, step) || due(config.qed_period, step) || due(config.fidelity_period, step) {
            refresh_regularizers(&mut regs, step, &model, egnn, schedule, config, &pool, &weights, &mut sample_rng)?;
        }
        let mut states = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let g = &pool[rng.random_range(0..pool.len())];
            let t = rng.random_range(1..=schedule.steps);
            states.push(noise_sample(g, t, schedule, &mut rng)?);
        }
        let refs: Vec<_> = states.iter().collect();
        let batch = model.prepare(&refs, schedule.steps)?;
        let epsilon = stack_rows(states.iter().map(|s| &s.epsilon))?;
        let mut tape = Tape::new();
        let mut params = model.bind(&mut tape);
        let pred = model.forward_on_tape(&mut tape, &mut params, &batch)?;
        let loss = l_dm_on_tape(&mut tape, pred, &epsilon)?;
        let l_dm = tape.scalar(loss);
        let q = regs.qed.unwrap_or(0.0);
        let total = total_loss(l_dm + q, regs.l_egnn.unwrap_or(0.0), regs.fidelity.unwrap_or(0.0))?;
        let mut grads = params.collect(&tape.backward(loss)?);
        if config.regularizer_mode == RegularizerMode::LossScaling {
            let factor = 1.0 + q + regs.l_egnn.unwrap_or(0.0) + regs.fidelity.unwrap_or(0.0).max(0.0);
            for (w, b) in &mut grads {
                *w = w.scale(factor);
                *b = b.scale(factor);
            }
        }
        opt.step(&mut model, &grads)?;
        history.push(HistoryRow {
            step,
            l_dm: Some(l_dm),
            l_egnn: regs.l_egnn,
            qed_loss: regs.qed,
            l_fidelity: regs.fidelity,
            total,
        });
    }
    Ok((model, history))
}

#[allow(clippy::too_many_arguments)]
fn refresh_regularizers(
    regs: &mut Regularizers,
    step: usize,
    model: &DenoiserModel,
    egnn: Option<&EgnnModel>,
    schedule: &NoiseSchedule,
    config: &TrainingConfig,
    pool: &[MolecularGraph],
    weights: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut samples = Vec::with_capacity(config.sample_batch);
    for _ in 0..config.sample_batch {
        let template = &pool[rng.random_range(0..pool.len())];
        samples.push(sample(model, template.n_atoms(), &template.properties, schedule, rng)?);
    }
    if due(config.qed_period, step) {
        let mut total = 0.0;
        for s in &samples {
            total += qed_loss(qed_value(&compute_descriptors(s)?, &ADS_PARAMS), config.tau);
        }
        regs.qed = Some(total / samples.len() as f64);
    }
    if let Some(egnn) = egnn {
        let refs: Vec<&MolecularGraph> = samples.iter().collect();
        if due(config.egnn_period, step) {
            let all: Vec<usize> = (0..weights.len()).collect();
            let targets = target_matrix(&refs, &all)?;
            regs.l_egnn = Some(l_egnn(&targets, &egnn.predict(&refs)?, weights)?);
        }
        if due(config.fidelity_period, step) {
            let g = &samples[0];
            let depth = egnn.config.layers;
            regs.fidelity = Some(match explain_graph(egnn, g, depth, config.shapley_samples, rng) {
                Ok(expl) => fidelity_loss(egnn, g, depth, &expl, config.drop_fraction, config.accuracy)?,
                Err(Error::NothingToExplain) => 0.0,
                Err(e) => return Err(e),
            });
        }
    }
    Ok(())
}

fn stack_rows<'a>(parts: impl Iterator<Item = &'a Matrix>) -> Result<Matrix> {
    let mut cols = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for m in parts {
        if *cols.get_or_insert(m.cols()) != m.cols() {
            return Err(Error::Shape("noise blocks of different widths".into()));
        }
        rows += m.rows();
        data.extend_from_slice(m.as_slice());
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data)
}

/// Mean absolute error per selected property in raw units.
pub fn evaluate_mae(dataset: &Dataset, split: Option<Split>, model: &EgnnModel, properties: &[Property]) -> Result<Vec<f64>> {
    let idx: Vec<usize> = match split {
        Some(s) => dataset.split_indices(s),
        None => (0..dataset.len()).collect(),
    };
    if idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let columns: Vec<usize> = properties.iter().map(|p| p.index()).collect();
    if model.config.properties != columns.len() {
        return Err(Error::Config(format!(
            "model predicts {} properties, {} requested",
            model.config.properties,
            columns.len()
        )));
    }
    let scaler = dataset.scaler.select(&columns);
    let mut sums = vec![0.0; columns.len()];
    for chunk in idx.chunks(64) {
        let graphs: Vec<&MolecularGraph> = chunk.iter().map(|&k| &dataset.graphs[k]).collect();
        let pred = model.predict(&graphs)?;
        for (r, &k) in chunk.iter().enumerate() {
            let raw_pred = scaler.inverse(pred.row(r));
            for (i, &c) in columns.iter().enumerate() {
                sums[i] += (raw_pred[i] - dataset.raw[k][c]).abs();
            }
        }
    }
    Ok(sums.iter().map(|s| s / idx.len() as f64).collect())
}
