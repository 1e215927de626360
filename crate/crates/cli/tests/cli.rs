use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lmpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmpt")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, count: usize, extra: &[&str]) {
    let count = count.to_string();
    let mut args = vec!["synth", "--out", dir.to_str().unwrap(), "--count", &count, "--seed", "7"];
    args.extend_from_slice(extra);
    ok(&lmpt(&args));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 32, &["--species", "both", "--points", "128"]);
    let shapes = std::fs::read_dir(dir.path().join("shapes")).unwrap().count();
    assert_eq!(shapes, 32);
    let manifest = read_json(&dir.path().join("manifest.json"));
    let samples = manifest["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 32);
    assert_eq!(samples.iter().filter(|s| s["split"] == "test").count(), 6);
    assert_eq!(manifest["seed"], 7);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 8);
    let registry = lmpt::dataio::LabelRegistry::read(&dir.path().join("registry.json")).unwrap();
    assert_eq!(registry.num_conditions(), 2);
    lmpt::dataio::load_manifest(&dir.path().join("manifest.json"), &registry).unwrap();
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), 4, &["--points", "64"]);
    synth(b.path(), 4, &["--points", "64"]);
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn unknown_species_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lmpt(&["synth", "--out", dir.path().to_str().unwrap(), "--species", "cat"]);
    assert_eq!(out.status.code(), Some(2));
}

fn train(dir: &Path, overrides: &[&str]) -> Output {
    let config = dir.join("run.json");
    let mut args = vec!["train", "--config", config.to_str().unwrap()];
    for o in overrides {
        args.push("--set");
        args.push(o);
    }
    lmpt(&args)
}

const QUICK: &[&str] = &["train.epochs=1", "train.batch_size=2"];

#[test]
fn one_epoch_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 5, &["--points", "256"]);
    let start = std::time::Instant::now();
    ok(&train(dir.path(), QUICK));
    assert!(start.elapsed().as_secs() < 60);
    let run = dir.path().join("run");
    let first = std::fs::read(run.join("checkpoint.lmpt")).unwrap();
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("# seed=7\n# config_hash="));
    assert_eq!(metrics.lines().filter(|l| !l.starts_with('#')).count(), 2);
    let resolved = read_json(&run.join("resolved_config.json"));
    assert_eq!(resolved["seed"], 7);
    ok(&train(dir.path(), QUICK));
    assert_eq!(std::fs::read(run.join("checkpoint.lmpt")).unwrap(), first);
    let ck = lmpt::training::load_checkpoint(&run.join("checkpoint.lmpt")).unwrap();
    assert_eq!(ck.train.epochs, 1);
    assert_eq!(ck.model.channels, vec![8, 16]);
}

#[test]
fn missing_manifest_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 3, &["--points", "64"]);
    let out = train(dir.path(), &["manifest=nowhere.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("manifest"), "{}", stderr(&out));
}

#[test]
fn misspelled_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 3, &["--points", "64"]);
    let out = train(dir.path(), &["train.epoch=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("epoch"), "{}", stderr(&out));
    let out = train(dir.path(), &["train.epochs=0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("epochs"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_lmpt")).args(["gradcheck", "--seeds", "1"]).env("LMPT_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn trained(dir: &Path) -> PathBuf {
    synth(dir, 5, &["--points", "256", "--species", "both", "--test-count", "2"]);
    ok(&train(dir, QUICK));
    dir.join("run").join("checkpoint.lmpt")
}

fn first_shape(dir: &Path, species: &str) -> PathBuf {
    let manifest = read_json(&dir.join("manifest.json"));
    let s = manifest["samples"].as_array().unwrap().iter().find(|s| s["species"] == species).unwrap().clone();
    dir.join(s["shape"].as_str().unwrap())
}

#[test]
fn predict_writes_reloadable_landmarks() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let shape = first_shape(dir.path(), "dog");
    let out_path = dir.path().join("pred.json");
    ok(&lmpt(&["predict", "--checkpoint", ck.to_str().unwrap(), "--shape", shape.to_str().unwrap(), "--species", "dog", "--out", out_path.to_str().unwrap()]));
    let set = lmpt::dataio::LandmarkSet::<f64>::read(&out_path).unwrap();
    assert_eq!(set.len(), lmpt::dataio::SpeciesPreset::dog().landmarks.len());
    let raw = read_json(&out_path);
    assert_eq!(raw["seed"], 7);
    assert!(raw["config_hash"].is_string());

    let out = lmpt(&["predict", "--checkpoint", ck.to_str().unwrap(), "--shape", shape.to_str().unwrap(), "--species", "cat", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

fn csv_sections(text: &str) -> Vec<Vec<(String, f64)>> {
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    body.split(|l| l.is_empty())
        .map(|sec| {
            sec[1..]
                .iter()
                .map(|l| {
                    let (a, b) = l.split_once(',').unwrap();
                    (a.to_string(), b.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn eval_reports_mae_and_ten_pck_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let manifest = dir.path().join("manifest.json");
    let report = dir.path().join("report.csv");
    ok(&lmpt(&["eval", "--checkpoint", ck.to_str().unwrap(), "--manifest", manifest.to_str().unwrap(), "--report", report.to_str().unwrap()]));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("# seed=7\n"));
    let sections = csv_sections(&text);
    assert_eq!(sections[1].len(), 10);
    let (mean_row, rows) = sections[0].split_last().unwrap();
    assert_eq!(mean_row.0, "Mean");
    let hand = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    assert!((hand - mean_row.1).abs() < 1e-9);

    let stub = dir.path().join("stub.csv");
    ok(&lmpt(&["eval", "--checkpoint", ck.to_str().unwrap(), "--manifest", manifest.to_str().unwrap(), "--report", stub.to_str().unwrap(), "--ground-truth"]));
    let sections = csv_sections(&std::fs::read_to_string(&stub).unwrap());
    assert!(sections[0].iter().all(|r| r.1.abs() < 1e-9));
    assert!(sections[1].iter().all(|r| r.1 == 100.0));

    let md = dir.path().join("report.md");
    ok(&lmpt(&["eval", "--checkpoint", ck.to_str().unwrap(), "--manifest", manifest.to_str().unwrap(), "--report", md.to_str().unwrap(), "--split", "train"]));
    assert!(std::fs::read_to_string(&md).unwrap().contains("| Landmark | MAE (mm) |"));
}

#[test]
fn medoid_of_one_round_copies_it() {
    let dir = tempfile::tempdir().unwrap();
    let rounds = dir.path().join("rounds");
    std::fs::create_dir(&rounds).unwrap();
    let out = dir.path().join("merged.json");
    let empty = lmpt(&["medoid", "--rounds", rounds.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!empty.status.success());
    std::fs::write(rounds.join("r01.json"), r#"{"MEC": [1.0, 2.0, 3.0], "LEC": [-1.5, 0.0, 2.25]}"#).unwrap();
    ok(&lmpt(&["medoid", "--rounds", rounds.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let merged = lmpt::dataio::LandmarkSet::<f64>::read(&out).unwrap();
    let round = lmpt::dataio::LandmarkSet::<f64>::read(&rounds.join("r01.json")).unwrap();
    assert_eq!(merged, round);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.find("LEC").unwrap() < text.find("MEC").unwrap());
}

#[test]
fn medoid_matches_brute_force_over_twenty_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let rounds = dir.path().join("rounds");
    std::fs::create_dir(&rounds).unwrap();
    let mut pts = Vec::new();
    for r in 0..20u32 {
        let p = [(r * 7 % 11) as f64 * 0.3, (r * 3 % 5) as f64, (r % 4) as f64 * 1.5];
        pts.push(p);
        std::fs::write(rounds.join(format!("r{r:02}.json")), format!(r#"{{"SGT": [{}, {}, {}]}}"#, p[0], p[1], p[2])).unwrap();
    }
    let out = dir.path().join("m.json");
    ok(&lmpt(&["medoid", "--rounds", rounds.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let cost = |a: &[f64; 3]| pts.iter().map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()).sum::<f64>();
    let best = (0..20).fold(0, |bi, i| if cost(&pts[i]) < cost(&pts[bi]) { i } else { bi });
    let merged = lmpt::dataio::LandmarkSet::<f64>::read(&out).unwrap();
    assert_eq!(merged.get("SGT").unwrap(), &pts[best]);
}

#[test]
fn gradcheck_passes_and_catches_injected_faults() {
    let good = lmpt(&["gradcheck", "--seeds", "2"]);
    ok(&good);
    assert!(String::from_utf8_lossy(&good.stdout).contains("0 failed"));
    let bad = lmpt(&["gradcheck", "--seeds", "1", "--inject-fault", "1.01"]);
    assert_eq!(bad.status.code(), Some(4));
}

#[test]
fn overfit_shape_predictions_land_near_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 2, &["--points", "512", "--test-count", "0"]);
    let overrides = [
        "train.epochs=300",
        "train.batch_size=2",
        "train.peak_lr=0.01",
        "train.augment.full_turn=false",
        "train.augment.tilt_deg=0",
        "train.augment.scale_min=1",
        "train.augment.scale_max=1",
        "train.augment.flip_prob=0",
    ];
    ok(&train(dir.path(), &overrides));
    let ck = dir.path().join("run").join("checkpoint.lmpt");
    let shape = first_shape(dir.path(), "human");
    let pred = dir.path().join("p.json");
    ok(&lmpt(&["predict", "--checkpoint", ck.to_str().unwrap(), "--shape", shape.to_str().unwrap(), "--species", "human", "--out", pred.to_str().unwrap()]));
    let manifest = read_json(&dir.path().join("manifest.json"));
    let entry = manifest["samples"].as_array().unwrap().iter().find(|s| dir.path().join(s["shape"].as_str().unwrap()) == shape).unwrap().clone();
    let gt = lmpt::dataio::LandmarkSet::<f64>::from_json(&entry["landmarks"]).unwrap();
    let got = lmpt::dataio::LandmarkSet::<f64>::read(&pred).unwrap();
    let cloud = match lmpt::dataio::load_shape::<f64>(&shape).unwrap() {
        lmpt::dataio::Shape::Cloud(c) => c,
        _ => unreachable!(),
    };
    let errors = lmpt::eval::landmark_errors(&got, &gt).unwrap();
    let mae = errors.values().sum::<f64>() / errors.len() as f64;
    assert!(mae <= 2.0 * cloud.mean_spacing(), "MAE {mae} vs spacing {}", cloud.mean_spacing());
}
