use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use pqvae::eval::mean_distortion;
use pqvae::model::{reconstruct_all, CodecParams};
use pqvae::store::load_dataset;

fn pqvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqvae")).args(args).env_remove("PQVAE_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pqvae(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TRAIN: &[&str] = &["-s", "h=1", "-s", "w=1", "-s", "c=8", "-s", "d=2", "-s", "k=8", "-s", "hidden=16", "-s", "epochs=4", "-s", "batch_size=16"];

fn synth_and_split(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let raw = dir.join("raw");
    ok(&["synth", "--dim", "16", "--classes", "4", "--per-class", "30", "--seed", "3", "--out", s(&raw)]);
    let split = dir.join("split");
    ok(&["split", "--data", s(&raw.join("data.emb")), "--mode", "stratified", "--seed", "1", "--out", s(&split)]);
    (split.join("train.emb"), split.join("test.emb"), raw.join("text.txe"))
}

fn train_model(train: &Path, out: &Path) {
    let mut args = vec!["train", "--data", s(train), "--out", s(out), "--seed", "5"];
    args.extend_from_slice(TRAIN);
    ok(&args);
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--dim", "8", "--classes", "2", "--seed", "1", "--out", s(&a)]);
    ok(&["synth", "--dim", "8", "--classes", "2", "--seed", "1", "--out", s(&b)]);
    for f in ["data.emb", "text.txe"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn seed_comes_from_environment_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = Command::new(env!("CARGO_BIN_EXE_pqvae"))
        .args(["synth", "--dim", "8", "--classes", "2", "--out", s(&a)])
        .env("PQVAE_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    ok(&["synth", "--dim", "8", "--classes", "2", "--seed", "9", "--out", s(&b)]);
    assert_eq!(std::fs::read(a.join("data.emb")).unwrap(), std::fs::read(b.join("data.emb")).unwrap());
}

#[test]
fn compress_decompress_eval_matches_memory() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, text) = synth_and_split(dir.path());
    let model = dir.path().join("model");
    train_model(&train, &model);
    let (params, dict) = (model.join("model.pqm"), model.join("dictionary.pqd"));

    let comp = dir.path().join("comp");
    ok(&["compress", "--params", s(&params), "--dictionary", s(&dict), "--codebook", s(&model.join("codebook.pqc")), "--data", s(&test), "--out", s(&comp)]);
    let dec = dir.path().join("dec");
    ok(&["decompress", "--params", s(&params), "--dictionary", s(&dict), "--streams", s(&comp), "--data", s(&test), "--out", s(&dec)]);
    let recon = dec.join("reconstructed.emb");
    let ev = dir.path().join("ev");
    ok(&["eval", "--data", s(&recon), "--against", s(&test), "--manifest", s(&comp.join("manifest.csv")), "--text", s(&text), "--out", s(&ev)]);

    // in-memory pipeline, written at the same f32 precision as the reconstruction file
    let p = CodecParams::load(&params).unwrap();
    let x = load_dataset(&test).unwrap().to_array();
    let mem = reconstruct_all(x.view(), &p).unwrap().mapv(|v| f64::from(v as f32));
    let expected = mean_distortion(x.view(), mem.view()).unwrap();
    let file: Array2<f64> = load_dataset(&recon).unwrap().to_array();
    assert_eq!(file, mem);

    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("eval.json")).unwrap()).unwrap();
    assert_eq!(json["points"][0]["distortion"].as_f64().unwrap(), expected);
    assert!(json["points"][0]["payload_bits"].as_f64().unwrap() > 0.0);
    assert!(json["timestamp"].is_null());
    let csv = std::fs::read_to_string(ev.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "scheme,bpd,payload_bits,overhead_bits,distortion,accuracy,config_hash");
}

#[test]
fn training_is_reproducible_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _, _) = synth_and_split(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_model(&train, &a);
    train_model(&train, &b);
    assert_eq!(std::fs::read(a.join("model.pqm")).unwrap(), std::fs::read(b.join("model.pqm")).unwrap());
    let log = std::fs::read_to_string(a.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(first["loss"]["cosine_term"].is_number());
    assert_eq!(first["usage"].as_array().unwrap().len(), 8);
}

#[test]
fn sweep_reports_cells_and_winner() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, text) = synth_and_split(dir.path());
    let sweep = dir.path().join("grid.txt");
    std::fs::write(&sweep, "h = 1\nw = 1\nc = 8\nd = 2\nhidden = 16\nepochs = 3\nd_max = 1.5\ncell k=4\ncell scheme=scalar_q sq_bits=1\n").unwrap();
    let out = dir.path().join("sweep");
    let stdout = ok(&["sweep", "--sweep", s(&sweep), "--data", s(&train), "--test", s(&test), "--text", s(&text), "--out", s(&out)]);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(stdout.contains("winner: cell 0"), "{stdout}");
}

#[test]
fn invalid_config_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let r = pqvae(&["train", "--data", "missing.emb", "--out", s(&out), "-s", "d=3"]);
    assert_eq!(r.status.code(), Some(2));
    let r = pqvae(&["train", "--data", "missing.emb", "--out", s(&out), "-s", "nonsense=1"]);
    assert_eq!(r.status.code(), Some(2));
    let r = pqvae(&["train", "--data", "missing.emb", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn codebook_mismatch_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, _) = synth_and_split(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_model(&train, &a);
    let mut args = vec!["train", "--data", s(&train), "--out", s(&b), "--seed", "6"];
    args.extend_from_slice(TRAIN);
    ok(&args);
    let out = dir.path().join("comp");
    let r = pqvae(&[
        "compress", "--params", s(&a.join("model.pqm")), "--dictionary", s(&a.join("dictionary.pqd")),
        "--codebook", s(&b.join("codebook.pqc")), "--data", s(&test), "--out", s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("codebook mismatch"));
    assert!(!out.exists());
}

#[test]
fn inspect_every_format() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, text) = synth_and_split(dir.path());
    let model = dir.path().join("model");
    train_model(&train, &model);
    let comp = dir.path().join("comp");
    ok(&["compress", "--params", s(&model.join("model.pqm")), "--dictionary", s(&model.join("dictionary.pqd")), "--data", s(&test), "--out", s(&comp)]);
    let sq = dir.path().join("sq");
    ok(&["train", "--data", s(&train), "--out", s(&sq), "-s", "scheme=scalar_q", "-s", "sq_bits=2"]);

    let files = [
        train.clone(),
        text,
        model.join("model.pqm"),
        model.join("codebook.pqc"),
        model.join("dictionary.pqd"),
        comp.join("streams/000000.pqb"),
        sq.join("quantizer.sqz"),
    ];
    let args: Vec<&str> = std::iter::once("inspect").chain(files.iter().map(|f| s(f))).collect();
    let stdout = ok(&args);
    for magic in ["EMB1", "TXE1", "PQM1", "PQC1", "PQD1", "PQB1", "SQZ1"] {
        assert!(stdout.contains(magic), "{magic} missing from\n{stdout}");
    }
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"XXXX1234").unwrap();
    assert_eq!(pqvae(&["inspect", s(&junk)]).status.code(), Some(3));
}
