use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use xmpo::diffusion::{from_xyz, sample, to_xyz, DenoiserConfig, DenoiserModel, NoiseSchedule};
use xmpo::egnn::{EgnnConfig, EgnnModel, SpectralScope};
use xmpo::explain::{
    explain_graph, export_explanation, fidelity_loss, Accuracy, Predictor, ShapleyExplanation,
};
use xmpo::molgraph::{
    build_edges, load_qm9_path, Dataset, EdgeMode, FeatureLayout, MolecularGraph, ParseOptions, Property, Split,
    SplitFractions,
};
use xmpo::training::{
    evaluate_mae, select_properties, train_diffusion, train_egnn, Ablation, History, RegularizerMode, TrainingConfig,
};

use crate::args::*;
use crate::error::CliError;
use crate::manifest::Manifest;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const EGNN_FILE: &str = "egnn.json";
pub const DENOISER_FILE: &str = "denoiser.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const SAMPLES_FILE: &str = "samples.xyz";
pub const METRICS_FILE: &str = "metrics.json";
pub const EXPLANATION_STEM: &str = "explanation";

/// Runs `command`, writing artifacts and the manifest under its out dir.
pub fn run(command: &Command, argv: &[String]) -> Result<Manifest, CliError> {
    let mut manifest = Manifest::new(command.name(), argv);
    let out_dir = match command {
        Command::Ingest(a) => &a.out.out_dir,
        Command::TrainEgnn(a) => &a.out.out_dir,
        Command::TrainDiffusion(a) => &a.out.out_dir,
        Command::Sample(a) => &a.out.out_dir,
        Command::Eval(a) => &a.out.out_dir,
        Command::Explain(a) => &a.out.out_dir,
    };
    check_inputs(command)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    match command {
        Command::Ingest(a) => ingest(a, &mut manifest)?,
        Command::TrainEgnn(a) => cmd_train_egnn(a, &mut manifest)?,
        Command::TrainDiffusion(a) => cmd_train_diffusion(a, &mut manifest)?,
        Command::Sample(a) => cmd_sample(a, &mut manifest)?,
        Command::Eval(a) => cmd_eval(a, &mut manifest)?,
        Command::Explain(a) => cmd_explain(a, &mut manifest)?,
    }
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Fails before any work when an input path is missing.
fn check_inputs(command: &Command) -> Result<(), CliError> {
    let paths: Vec<&PathBuf> = match command {
        Command::Ingest(a) => vec![&a.input],
        Command::TrainEgnn(a) => vec![&a.data],
        Command::TrainDiffusion(a) => std::iter::once(&a.data).chain(a.egnn.as_ref()).collect(),
        Command::Sample(a) => vec![&a.denoiser],
        Command::Eval(a) => vec![&a.data, &a.egnn],
        Command::Explain(a) => std::iter::once(&a.egnn).chain(a.molecule.as_ref()).chain(a.data.as_ref()).collect(),
    };
    for p in paths {
        if !p.exists() {
            return Err(CliError::Data(format!("{}: no such file or directory", p.display())));
        }
    }
    Ok(())
}

fn parse_edge_mode(s: &str) -> Result<EdgeMode, CliError> {
    match s {
        "auto" => Ok(EdgeMode::Auto),
        "complete" => Ok(EdgeMode::Complete),
        _ => s
            .strip_prefix("radius:")
            .and_then(|r| r.parse::<f64>().ok())
            .filter(|r| *r > 0.0 && r.is_finite())
            .map(EdgeMode::Radius)
            .ok_or_else(|| CliError::Usage(format!("edge mode must be auto, complete or radius:<angstrom>, got {s:?}"))),
    }
}

fn parse_properties(s: &str) -> Result<Vec<Property>, CliError> {
    let props = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Property::from_name(t).ok_or_else(|| CliError::Usage(format!("unknown property {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if props.is_empty() {
        return Err(CliError::Usage("at least one property is required".into()));
    }
    Ok(props)
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| CliError::Usage(format!("bad {what} value {t:?}"))))
        .collect()
}

fn names(props: &[Property]) -> Vec<&'static str> {
    props.iter().map(|p| p.name()).collect()
}

fn split_of(s: SplitArg) -> Option<Split> {
    match s {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Val => Some(Split::Val),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    }
}

fn accuracy_of(a: AccuracyArg) -> Accuracy {
    match a {
        AccuracyArg::Reciprocal => Accuracy::Reciprocal,
        AccuracyArg::NegativeAbsError => Accuracy::NegativeAbsError,
    }
}

fn training_config(optim: &OptimArgs, defaults: TrainingConfig) -> Result<TrainingConfig, CliError> {
    Ok(TrainingConfig {
        properties: parse_properties(&optim.properties)?,
        property_weights: optim.weights.as_deref().map(|w| parse_floats(w, "weight")).transpose()?,
        lr: optim.lr.unwrap_or(defaults.lr),
        momentum: optim.momentum,
        batch_size: optim.batch_size.unwrap_or(defaults.batch_size),
        seed: optim.seed,
        ..defaults
    })
}

fn write_history(history: &History, dir: &Path, manifest: &mut Manifest) -> Result<(), CliError> {
    let path = dir.join(HISTORY_FILE);
    history.write_csv(&path)?;
    manifest.output(dir, &path);
    Ok(())
}

fn history_summary(history: &History, column: &str) -> serde_json::Value {
    let values = history.column(column);
    json!({
        "rows": history.len(),
        "terms": history.active_terms(),
        format!("initial_{column}"): values.first(),
        format!("final_{column}"): values.last(),
    })
}

fn ingest(a: &IngestArgs, manifest: &mut Manifest) -> Result<(), CliError> {
    let mode = parse_edge_mode(&a.edge_mode)?;
    let layout = FeatureLayout { charge_channel: a.charge_channel };
    let opts = ParseOptions { drop_hydrogens: a.drop_hydrogens, layout };
    let load = load_qm9_path(&a.input, &opts, a.limit)?;
    for r in &load.rejects {
        eprintln!("skipped {} line {}: {}", r.source, r.line, r.message);
    }
    if load.graphs.is_empty() {
        return Err(CliError::Data(format!(
            "no valid records in {} ({} rejected)",
            a.input.display(),
            load.rejects.len()
        )));
    }
    let graphs: Vec<MolecularGraph> = load.graphs.iter().map(|g| build_edges(g, mode)).collect();
    let dataset = Dataset::build(graphs, a.seed, SplitFractions::default(), layout)?;
    let path = a.output.clone().unwrap_or_else(|| a.out.out_dir.join(DATASET_FILE));
    dataset.write_cache(&path)?;
    manifest.seed = Some(a.seed);
    manifest.output(&a.out.out_dir, &path);
    let count = |s| dataset.split_indices(s).len();
    manifest.summary = json!({
        "records": dataset.len(),
        "train": count(Split::Train),
        "val": count(Split::Val),
        "test": count(Split::Test),
        "rejects": load.rejects.iter().map(|r| json!({"source": r.source, "line": r.line, "message": r.message})).collect::<Vec<_>>(),
    });
    eprintln!("wrote {} records to {} ({} rejected)", dataset.len(), path.display(), load.rejects.len());
    Ok(())
}

fn cmd_train_egnn(a: &TrainEgnnArgs, manifest: &mut Manifest) -> Result<(), CliError> {
    let dataset = Dataset::read_cache(&a.data)?;
    let mut config = training_config(&a.optim, TrainingConfig::for_egnn())?;
    config.epochs = a.epochs;
    let model_config = EgnnConfig {
        layers: a.model.layers,
        hidden: a.model.hidden,
        node_features: dataset.layout.width(),
        edge_features: dataset.graphs.first().map_or(0, |g| g.edge_feature_width()),
        properties: config.properties.len(),
        spectral: match a.spectral {
            SpectralArg::Off => SpectralScope::Off,
            SpectralArg::Decoder => SpectralScope::Decoder,
            SpectralArg::All => SpectralScope::All,
        },
        ..EgnnConfig::default()
    };
    let (model, history) = train_egnn(&dataset, model_config, &config)?;
    let dir = &a.out.out_dir;
    let path = dir.join(EGNN_FILE);
    model.save(&path)?;
    manifest.output(dir, &path);
    write_history(&history, dir, manifest)?;
    manifest.seed = Some(config.seed);
    manifest.summary = history_summary(&history, "l_egnn");
    Ok(())
}

fn cmd_train_diffusion(a: &TrainDiffusionArgs, manifest: &mut Manifest) -> Result<(), CliError> {
    let dataset = Dataset::read_cache(&a.data)?;
    let ablation = match a.ablation {
        AblationArg::Ours => Ablation::Ours,
        AblationArg::OursQed => Ablation::OursQed,
        AblationArg::Full => Ablation::Full,
        AblationArg::FullSingle => Ablation::FullSingle,
    };
    let mut config = training_config(&a.optim, TrainingConfig::for_diffusion())?.with_ablation(ablation, a.period);
    config.steps = a.steps;
    config.tau = a.tau;
    config.regularizer_mode = match a.regularizer_mode {
        RegularizerArg::LogOnly => RegularizerMode::LogOnly,
        RegularizerArg::LossScaling => RegularizerMode::LossScaling,
    };
    config.sample_batch = a.sample_batch;
    config.drop_fraction = a.drop_fraction;
    config.accuracy = accuracy_of(a.accuracy);
    config.shapley_samples = Some(a.shapley_samples);
    config.diffusion_split = match split_of(a.split) {
        Some(s) => s,
        None => return Err(CliError::Usage("diffusion trains on one split: train, val or test".into())),
    };
    let egnn = a.egnn.as_deref().map(EgnnModel::load).transpose()?;
    let model_config = DenoiserConfig {
        layers: a.model.layers,
        hidden: a.model.hidden,
        node_features: dataset.layout.width(),
        properties: config.properties.len(),
        ..DenoiserConfig::default()
    };
    let schedule = NoiseSchedule::polynomial(a.timesteps)?;
    let (model, history) = train_diffusion(&dataset, egnn.as_ref(), model_config, &schedule, &config)?;
    let dir = &a.out.out_dir;
    let path = dir.join(DENOISER_FILE);
    model.save(&path)?;
    manifest.output(dir, &path);
    write_history(&history, dir, manifest)?;
    manifest.seed = Some(config.seed);
    let mut summary = history_summary(&history, "l_dm");
    summary["ablation"] = json!(ablation.name());
    summary["properties"] = json!(names(&config.properties));
    summary["timesteps"] = json!(a.timesteps);
    manifest.summary = summary;
    Ok(())
}

fn cmd_sample(a: &SampleArgs, manifest: &mut Manifest) -> Result<(), CliError> {
    let denoiser = DenoiserModel::load(&a.denoiser)?;
    let condition = parse_floats(&a.condition, "condition")?;
    if condition.len() != denoiser.config.properties {
        return Err(CliError::Usage(format!(
            "denoiser conditions on {} properties, {} given",
            denoiser.config.properties,
            condition.len()
        )));
    }
    let property_names: Vec<String> = match &a.properties {
        Some(p) => parse_properties(p)?.iter().map(|p| p.name().to_string()).collect(),
        None => Property::ALL.iter().take(condition.len()).map(|p| p.name().to_string()).collect(),
    };
    if property_names.len() != condition.len() {
        return Err(CliError::Usage(format!("{} property names for {} condition values", property_names.len(), condition.len())));
    }
    let name_refs: Vec<&str> = property_names.iter().map(String::as_str).collect();
    let schedule = NoiseSchedule::polynomial(a.timesteps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    rng.set_stream(1);
    let mut text = String::new();
    for _ in 0..a.count {
        let g = sample(&denoiser, a.n_atoms, &condition, &schedule, &mut rng)?;
        text.push_str(&to_xyz(&g, &name_refs, a.seed));
    }
    let dir = &a.out.out_dir;
    let path = dir.join(SAMPLES_FILE);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    manifest.output(dir, &path);
    manifest.seed = Some(a.seed);
    manifest.summary = json!({ "count": a.count, "atoms": a.n_atoms });
    Ok(())
}

fn cmd_eval(a: &EvalArgs, manifest: &mut Manifest) -> Result<(), CliError> {
    let dataset = Dataset::read_cache(&a.data)?;
    let model = EgnnModel::load(&a.egnn)?;
    let props = parse_properties(&a.properties)?;
    let split = split_of(a.split);
    let mae = evaluate_mae(&dataset, split, &model, &props)?;
    let count = split.map_or(dataset.len(), |s| dataset.split_indices(s).len());
    let metrics = json!({
        "split": format!("{:?}", a.split).to_lowercase(),
        "molecules": count,
        "mae": props.iter().zip(&mae).map(|(p, m)| json!({"property": p.name(), "unit": p.unit(), "mae": m})).collect::<Vec<_>>(),
    });
    let dir = &a.out.out_dir;
    let path = dir.join(METRICS_FILE);
    let mut text = serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Core(e.into()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    manifest.output(dir, &path);
    for (p, m) in props.iter().zip(&mae) {
        println!("{:<6} {m:.6} {}", p.name(), p.unit());
    }
    manifest.summary = metrics;
    Ok(())
}

fn explain_target(a: &ExplainArgs, model: &EgnnModel, props: &[Property]) -> Result<MolecularGraph, CliError> {
    let columns: Vec<usize> = props.iter().map(|p| p.index()).collect();
    if let Some(path) = &a.molecule {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let layout = FeatureLayout { charge_channel: model.config.node_features > FeatureLayout::default().width() };
        return Ok(from_xyz(&text, layout)?);
    }
    let Some(path) = &a.data else {
        return Err(CliError::Usage("explain needs --molecule or --data".into()));
    };
    let dataset = Dataset::read_cache(path)?;
    let g = dataset.graphs.get(a.index).ok_or_else(|| {
        CliError::Usage(format!("index {} out of range for {} molecules", a.index, dataset.len()))
    })?;
    Ok(select_properties(g, &columns))
}

fn cmd_explain(a: &ExplainArgs, manifest: &mut Manifest) -> Result<(), CliError> {
    let model = EgnnModel::load(&a.egnn)?;
    let props = parse_properties(&a.properties)?;
    if props.len() != model.outputs() {
        return Err(CliError::Usage(format!("model predicts {} properties, {} named", model.outputs(), props.len())));
    }
    let graph = explain_target(a, &model, &props)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let depth = model.config.layers;
    let explanation: ShapleyExplanation = explain_graph(&model, &graph, depth, a.samples, &mut rng)?;
    let dir = &a.out.out_dir;
    let name_refs = names(&props);
    let paths = export_explanation(&graph, &explanation, &name_refs, dir, EXPLANATION_STEM)?;
    for p in [&paths.dot, &paths.csv, &paths.svg] {
        manifest.output(dir, p);
    }
    let fidelity = if graph.properties.len() == props.len() {
        Some(fidelity_loss(&model, &graph, depth, &explanation, a.drop_fraction, accuracy_of(a.accuracy))?)
    } else {
        None
    };
    manifest.seed = Some(a.seed);
    manifest.summary = json!({
        "molecule": graph.id,
        "edges": explanation.n_edges(),
        "base_value": explanation.base_value,
        "prediction": explanation.target,
        "ridge_applied": explanation.ridge_applied,
        "fidelity": fidelity,
    });
    Ok(())
}
