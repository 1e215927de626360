use std::path::{Path, PathBuf};

use lmpt::dataio::{
    build_registry, consolidate_annotations, load_manifest, load_samples, load_shape, read_rounds, split_dataset,
    synth_generate, synth_mirror_pairs, write_ply, DatasetManifest, LabelRegistry, LandmarkSet, ManifestEntry, Sample,
    Shape, SpeciesPreset, Split, SynthParams,
};
use lmpt::eval::{emit_report, evaluate_model, evaluate_with, EvalConfig, ReportFormat};
use lmpt::geometry::{normalize_cloud, sample_surface, subsample_cloud, Strategy};
use lmpt::gradsuite::{run_suite, SuiteConfig};
use lmpt::model::{predict_landmarks, LmptModel};
use lmpt::training::{load_checkpoint, metrics_csv, prepare_samples, save_checkpoint, train_with_progress, Checkpoint};
use lmpt::{LmptError, Result};
use serde_json::{json, Value};

use crate::config::{config_hash, RunConfig};

fn write_json(path: &Path, value: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| LmptError::Config(format!("cannot create {}: {e}", dir.display())))
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub species: String,
    pub points: usize,
    pub test_count: Option<usize>,
}

fn presets(species: &str) -> Result<Vec<SpeciesPreset>> {
    match species {
        "human" => Ok(vec![SpeciesPreset::human()]),
        "dog" => Ok(vec![SpeciesPreset::dog()]),
        "both" => Ok(vec![SpeciesPreset::human(), SpeciesPreset::dog()]),
        other => Err(LmptError::Config(format!("species must be human, dog or both, got {other:?}"))),
    }
}

/// Writes binary PLY clouds, a registry, a split manifest and a starter run
/// config.
pub fn synth(args: &SynthArgs) -> Result<()> {
    let presets = presets(&args.species)?;
    let schemas: Vec<(String, Vec<String>)> = presets.iter().map(|p| (p.name.clone(), p.landmarks.clone())).collect();
    let registry = build_registry(&schemas, &synth_mirror_pairs())?;
    let params = SynthParams::new(presets, args.points, args.seed);
    let samples: Vec<Sample<f64>> = synth_generate(&params, args.count, args.seed)?;
    let test_count = args.test_count.unwrap_or(args.count / 5);
    if test_count > args.count {
        return Err(LmptError::Config(format!("test-count {test_count} exceeds count {}", args.count)));
    }
    let hash = config_hash(&serde_json::to_string(&params)?);

    let shapes = args.out.join("shapes");
    create_dir(&shapes)?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let rel = PathBuf::from("shapes").join(format!("{}.ply", s.id));
        write_ply(&args.out.join(&rel), s.cloud.points(), &[], true)?;
        entries.push(ManifestEntry {
            shape: rel,
            species: s.species.clone(),
            side: s.side,
            split: Split::Train,
            landmarks: s.landmarks.clone(),
        });
    }
    split_dataset(&mut entries, args.count - test_count, test_count, args.seed)?;
    let mut manifest = DatasetManifest { samples: entries }.to_json();
    manifest["seed"] = json!(args.seed);
    manifest["config_hash"] = json!(hash);
    write_json(&args.out.join("manifest.json"), &manifest)?;
    registry.write(&args.out.join("registry.json"))?;
    let run = json!({
        "manifest": "manifest.json",
        "registry": "registry.json",
        "output_dir": "run",
        "seed": args.seed,
        "model": { "preset": "tiny" },
        "train": { "epochs": 50, "num_points": args.points },
    });
    write_json(&args.out.join("run.json"), &run)?;

    // the manifest must load with the registry it was written with
    load_manifest(&args.out.join("manifest.json"), &registry)?;
    println!("wrote {} shapes ({} test) to {}", samples.len(), test_count, args.out.display());
    Ok(())
}

fn split_samples(samples: Vec<Sample<f64>>, split: Split) -> Vec<Sample<f64>> {
    samples.into_iter().filter(|s| s.split == split).collect()
}

pub fn train(config_path: &Path, overrides: &[String]) -> Result<()> {
    let cfg = RunConfig::load(config_path, overrides)?;
    let hash = cfg.hash();
    let registry = LabelRegistry::read(&cfg.registry)?;
    let model_config = cfg.model.resolve(&registry)?;
    let manifest = load_manifest(&cfg.manifest, &registry)?;
    let samples = load_samples::<f64>(&manifest, cfg.train.num_points, cfg.seed)?;
    let train_set = prepare_samples(&split_samples(samples, Split::Train))?;
    if train_set.is_empty() {
        return Err(LmptError::Config(format!("manifest {} has no train samples", cfg.manifest.display())));
    }
    eprintln!("training on {} samples, seed {}, config {hash}", train_set.len(), cfg.seed);
    let epochs = cfg.train.epochs;
    let outcome = train_with_progress(&cfg.train, &model_config, &train_set, &registry, |m| {
        eprintln!("epoch {}/{epochs} loss {:.5} lr {:.3e}", m.epoch, m.mean_loss, m.lr);
    })?;
    create_dir(&cfg.output_dir)?;
    let ck_path = cfg.output_dir.join("checkpoint.lmpt");
    save_checkpoint(&outcome.checkpoint, &ck_path)?;
    let header = format!("# seed={}\n# config_hash={hash}\n", cfg.seed);
    std::fs::write(cfg.output_dir.join("metrics.csv"), header + &metrics_csv(&outcome.metrics))?;
    let mut resolved = serde_json::to_value(&cfg)?;
    resolved["config_hash"] = json!(hash);
    resolved["checkpoint_crc32"] = json!(format!("{:08x}", outcome.checkpoint.checksum()));
    write_json(&cfg.output_dir.join("resolved_config.json"), &resolved)?;
    println!("checkpoint {} crc32 {:08x}", ck_path.display(), outcome.checkpoint.checksum());
    Ok(())
}

fn checkpoint_hash(ck: &Checkpoint) -> Result<String> {
    Ok(config_hash(&format!("{}{}", serde_json::to_string(&ck.model)?, serde_json::to_string(&ck.train)?)))
}

pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub shape: PathBuf,
    pub species: String,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let condition = ck.registry.condition_of(&args.species)?;
    let model: LmptModel<f64> = ck.load_model()?;
    let seed = args.seed.unwrap_or(ck.train.seed);
    let n = ck.train.num_points;
    let cloud = match load_shape::<f64>(&args.shape)? {
        Shape::Mesh(m) => sample_surface(&m, n, seed)?,
        Shape::Cloud(c) if c.len() > n => subsample_cloud(&c, n, seed, Strategy::Random)?,
        Shape::Cloud(c) => c,
    };
    let (normalized, transform) = normalize_cloud(&cloud)?;
    let logits = model.forward(&normalized, condition)?;
    let landmarks = predict_landmarks(&logits, &normalized, &transform, &ck.registry, &args.species)?;
    let out = json!({
        "species": args.species,
        "seed": seed,
        "config_hash": checkpoint_hash(&ck)?,
        "landmarks": landmarks.to_json(),
    });
    write_json(&args.out, &out)?;
    println!("wrote {} landmarks to {}", landmarks.len(), args.out.display());
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub split: Split,
    pub report: PathBuf,
    pub format: Option<ReportFormat>,
    pub ground_truth: bool,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let registry = &ck.registry;
    let manifest = load_manifest(&args.manifest, registry)?;
    let seed = ck.train.seed;
    let samples = split_samples(load_samples::<f64>(&manifest, ck.train.num_points, seed)?, args.split);
    if samples.is_empty() {
        return Err(LmptError::EmptyEval);
    }
    let config = EvalConfig::default();
    let report = if args.ground_truth {
        evaluate_with(&samples, registry, &config, |s, t| {
            Ok(s.landmarks.map_positions(|p| lmpt::geometry::denormalize_point(p, t)))
        })?
    } else {
        let model: LmptModel<f64> = ck.load_model()?;
        evaluate_model(&model, &samples, registry, &config)?
    };
    let format = args.format.unwrap_or(match args.report.extension().and_then(|e| e.to_str()) {
        Some("md") => ReportFormat::Markdown,
        _ => ReportFormat::Csv,
    });
    let comments = vec![
        format!("seed={seed}"),
        format!("config_hash={}", checkpoint_hash(&ck)?),
        format!("checkpoint_crc32={:08x}", ck.checksum()),
        format!("samples={}", samples.len()),
    ];
    emit_report(&report, &args.report, format, &comments)?;
    println!("mean MAE {:.3} mm over {} samples; report {}", report.mean_mae, samples.len(), args.report.display());
    Ok(())
}

pub fn medoid(rounds: &Path, out: &Path) -> Result<()> {
    let sets: Vec<LandmarkSet<f64>> = read_rounds(rounds)?;
    let merged = consolidate_annotations(&sets)?;
    write_json(out, &json!({ "rounds": sets.len(), "landmarks": merged.to_json() }))?;
    println!("consolidated {} landmarks from {} rounds", merged.len(), sets.len());
    Ok(())
}

/// Returns whether every check passed.
pub fn gradcheck(seeds: u64, fault: Option<f64>) -> Result<bool> {
    let cfg = SuiteConfig { seeds, analytic_scale: fault.unwrap_or(1.0), ..SuiteConfig::default() };
    let start = std::time::Instant::now();
    let results = run_suite(&cfg)?;
    for r in &results {
        println!("{} {:<16} cases {:>3} max rel err {:.3e}", if r.passed { "ok  " } else { "FAIL" }, r.name, r.cases, r.max_rel_error);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed, {:.1}s", results.len(), start.elapsed().as_secs_f64());
    Ok(failed == 0)
}
