use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xmpo::egnn::{EgnnConfig, EgnnModel};
use xmpo::explain::parse_csv;
use xmpo::molgraph::{to_qm9_record, Atom, Element, FeatureLayout, MolecularGraph};
use xmpo::training::History;

fn xmpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmpo")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn molecule(k: usize, properties: Vec<f64>) -> MolecularGraph {
    let shift = 0.05 * k as f64;
    let atoms = vec![
        Atom::new(Element::C, [0.0, 0.0, shift], FeatureLayout::default()),
        Atom::new(Element::O, [1.21, 0.0, 0.0], FeatureLayout::default()),
        Atom::new(Element::H, [-0.55, 0.94, 0.0], FeatureLayout::default()),
        Atom::new(Element::H, [-0.55, -0.94, 0.1 * shift], FeatureLayout::default()),
    ];
    let mut g = MolecularGraph::new(format!("m{k}"), atoms);
    g.properties = properties;
    g
}

/// QM9-format file of `n` four-atom molecules. With `constant`, every
/// molecule carries the same property vector.
fn write_qm9(dir: &Path, n: usize, constant: bool) -> PathBuf {
    let mut text = String::new();
    for k in 0..n {
        let v = if constant { 0.0 } else { k as f64 };
        text.push_str(&to_qm9_record(&molecule(k, vec![10.0 + v, 7000.0 + v, -7000.0, 0.0 + v, 1.5, 6.0 + 0.1 * v])));
    }
    let path = dir.join("records.xyz");
    fs::write(&path, text).unwrap();
    path
}

fn ingest(dir: &Path, input: &Path) -> PathBuf {
    let out = dir.join("ds");
    let o = xmpo(&["ingest", "--input", s(input), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("dataset.jsonl")
}

#[test]
fn ingest_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_qm9(dir.path(), 12, false);
    let a = ingest(dir.path(), &input);
    let first = fs::read(&a).unwrap();
    let b = ingest(dir.path(), &input);
    assert_eq!(first, fs::read(b).unwrap());
}

#[test]
fn ingest_limit_and_corrupt_records() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_qm9(dir.path(), 8, false);
    let mut text = fs::read_to_string(&input).unwrap();
    text.push_str("3\ngdb 99 broken\nC 0 0 0\n");
    fs::write(&input, text).unwrap();
    let out = dir.path().join("lim");
    let o = xmpo(&["ingest", "--input", s(&input), "--limit", "5", "--out-dir", s(&out)]);
    assert!(o.status.success());
    let cache = fs::read_to_string(out.join("dataset.jsonl")).unwrap();
    assert_eq!(cache.lines().count(), 6);

    let out = dir.path().join("all");
    let o = xmpo(&["ingest", "--input", s(&input), "--out-dir", s(&out)]);
    assert!(o.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["summary"]["records"], 8);
    assert_eq!(manifest["summary"]["rejects"].as_array().unwrap().len(), 1);
}

#[test]
fn ingest_without_valid_records_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.xyz");
    fs::write(&input, "2\nnot a property line\nC 0 0 0\n").unwrap();
    let o = xmpo(&["ingest", "--input", s(&input), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_and_missing_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = xmpo(&["eval", "--config", s(&cfg), "--data", "d", "--egnn", "e"]);
    assert_eq!(o.status.code(), Some(1));
    let o = xmpo(&["train-egnn", "--epochs", "nope", "--data", "d"]);
    assert_eq!(o.status.code(), Some(1));
    let o = xmpo(&["eval", "--data", s(&dir.path().join("missing")), "--egnn", "e", "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_on_perfect_data_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingest(dir.path(), &write_qm9(dir.path(), 10, true));
    let model = EgnnModel::zeros(EgnnConfig { hidden: 4, layers: 1, ..EgnnConfig::default() }).unwrap();
    let ckpt = dir.path().join("zero.json");
    model.save(&ckpt).unwrap();
    let out = dir.path().join("eval");
    let o = xmpo(&["eval", "--data", s(&data), "--egnn", s(&ckpt), "--split", "all", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for row in metrics["mae"].as_array().unwrap() {
        assert_eq!(row["mae"].as_f64().unwrap(), 0.0, "{row}");
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingest(dir.path(), &write_qm9(dir.path(), 10, false));
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nepochs = 5\nhidden = 4\nlayers = 1\nbatch_size = 4\n").unwrap();
    let out = dir.path().join("egnn");
    let o = xmpo(&["train-egnn", "--config", s(&cfg), "--data", s(&data), "--epochs", "2", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let history = History::parse_csv(&fs::read_to_string(out.join("history.csv")).unwrap()).unwrap();
    assert_eq!(history.len(), 3);
    let model = EgnnModel::load(&out.join("egnn.json")).unwrap();
    assert_eq!(model.config.hidden, 4);
}

#[test]
fn train_sample_explain_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingest(dir.path(), &write_qm9(dir.path(), 10, false));
    let egnn_dir = dir.path().join("egnn");
    let o = xmpo(&[
        "train-egnn", "--data", s(&data), "--epochs", "2", "--hidden", "4", "--layers", "1", "--properties", "alpha,gap",
        "--out-dir", s(&egnn_dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let egnn = egnn_dir.join("egnn.json");

    let diff_dir = dir.path().join("diff");
    let o = xmpo(&[
        "train-diffusion", "--data", s(&data), "--egnn", s(&egnn), "--steps", "2", "--timesteps", "10", "--hidden", "4",
        "--layers", "1", "--properties", "alpha,gap", "--ablation", "ours", "--split", "train", "--out-dir", s(&diff_dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let history = History::parse_csv(&fs::read_to_string(diff_dir.join("history.csv")).unwrap()).unwrap();
    assert_eq!(history.active_terms(), vec!["l_dm", "l_egnn"]);

    let denoiser = diff_dir.join("denoiser.json");
    let run = |out: &Path| {
        let o = xmpo(&[
            "sample", "--denoiser", s(&denoiser), "--n-atoms", "4", "--condition", "0.5,-0.5", "--count", "2",
            "--timesteps", "10", "--seed", "11", "--out-dir", s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("samples.xyz")).unwrap()
    };
    let first = run(&dir.path().join("s1"));
    assert_eq!(first, run(&dir.path().join("s2")));
    assert!(String::from_utf8(first).unwrap().contains("condition=0.5,-0.5 seed=11"));

    let ex = dir.path().join("explain");
    let o = xmpo(&[
        "explain", "--egnn", s(&egnn), "--molecule", s(&dir.path().join("s1/samples.xyz")), "--properties", "alpha,gap",
        "--out-dir", s(&ex),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["explanation.dot", "explanation.csv", "explanation.svg", "manifest.json"] {
        assert!(ex.join(name).is_file(), "{name}");
    }
    let rows = parse_csv(&fs::read_to_string(ex.join("explanation.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 6 * 2);
}

#[test]
fn explain_needs_matching_property_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingest(dir.path(), &write_qm9(dir.path(), 6, false));
    let model = EgnnModel::zeros(EgnnConfig { hidden: 4, layers: 1, properties: 2, ..EgnnConfig::default() }).unwrap();
    let ckpt = dir.path().join("m.json");
    model.save(&ckpt).unwrap();
    let o = xmpo(&["explain", "--egnn", s(&ckpt), "--data", s(&data), "--out-dir", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
}
