use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate_mae, landmark_errors, pck_curve, pck_curve_per_landmark, EvalConfig, ErrorMap};
use crate::dataio::{LabelRegistry, LandmarkSet, Sample};
use crate::error::{LmptError, Result};
use crate::geometry::{dist, NormTransform};
use crate::model::{predict_landmarks, LmptModel};
use crate::scalar::Scalar;
use crate::training::{nearest_point, TrainSample};

/// Errors of one evaluated sample, in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEval {
    pub id: String,
    pub species: String,
    pub errors: ErrorMap,
    /// Distance from each ground-truth landmark to its nearest sampled point.
    pub quantization: ErrorMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Registry order.
    pub per_landmark: Vec<(String, f64)>,
    pub mean_mae: f64,
    pub thresholds: Vec<f64>,
    pub pck: Vec<f64>,
    pub quantization: Vec<(String, f64)>,
    pub mean_quantization: f64,
    pub samples: Vec<SampleEval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

fn registry_order(map: &BTreeMap<String, f64>, registry: &LabelRegistry) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> =
        registry.classes().iter().filter_map(|c| map.get(c).map(|&v| (c.clone(), v))).collect();
    out.extend(map.iter().filter(|(k, _)| registry.class_index(k).is_none()).map(|(k, &v)| (k.clone(), v)));
    out
}

/// Aggregates per-sample errors into MAE, PCK and quantization summaries.
pub fn build_report(samples: Vec<SampleEval>, registry: &LabelRegistry, config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let errors: Vec<ErrorMap> = samples.iter().map(|s| s.errors.clone()).collect();
    let mae = aggregate_mae(&errors)?;
    let pck = if config.pck_per_landmark {
        pck_curve_per_landmark(&errors, &config.thresholds)?
    } else {
        pck_curve(&errors, &config.thresholds)?
    };
    let quant: Vec<ErrorMap> = samples.iter().map(|s| s.quantization.clone()).collect();
    let quant = aggregate_mae(&quant)?;
    Ok(EvalReport {
        per_landmark: registry_order(&mae.per_landmark, registry),
        mean_mae: mae.mean,
        thresholds: config.thresholds.clone(),
        pck,
        quantization: registry_order(&quant.per_landmark, registry),
        mean_quantization: quant.mean,
        samples,
    })
}

/// Scores `predict` on every sample. The predictor sees the normalized
/// sample and the transform back to millimetres.
pub fn evaluate_with<S: Scalar>(
    samples: &[Sample<S>],
    registry: &LabelRegistry,
    config: &EvalConfig,
    predict: impl Fn(&TrainSample<S>, &NormTransform<S>) -> Result<LandmarkSet<S>>,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(LmptError::EmptyEval);
    }
    let mut evals = Vec::with_capacity(samples.len());
    for sample in samples {
        let (normalized, transform) = TrainSample::from_sample(sample)?;
        let pred = predict(&normalized, &transform)?;
        let errors = landmark_errors(&pred, &sample.landmarks)?;
        let quantization = sample
            .landmarks
            .iter()
            .map(|(name, p)| {
                let q = &sample.cloud.points()[nearest_point(&sample.cloud, p)];
                (name.to_string(), dist(p, q).to_f64_lossless())
            })
            .collect();
        evals.push(SampleEval { id: sample.id.clone(), species: sample.species.clone(), errors, quantization });
    }
    build_report(evals, registry, config)
}

/// Scores a trained model by per-class argmax prediction.
pub fn evaluate_model<S: Scalar>(
    model: &LmptModel<S>,
    samples: &[Sample<S>],
    registry: &LabelRegistry,
    config: &EvalConfig,
) -> Result<EvalReport> {
    evaluate_with(samples, registry, config, |s, t| {
        let logits = model.forward(&s.cloud, registry.condition_of(&s.species)?)?;
        predict_landmarks(&logits, &s.cloud, t, registry, &s.species)
    })
}

/// CSV sections separated by blank lines: `landmark,mae_mm` (ending with a
/// `Mean` row), `threshold_mm,pck_pct`, and `landmark,quantization_mm`.
/// `comments` become leading `# ` lines.
pub fn report_csv(report: &EvalReport, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str("landmark,mae_mm\n");
    for (name, v) in &report.per_landmark {
        out.push_str(&format!("{name},{v}\n"));
    }
    out.push_str(&format!("Mean,{}\n\nthreshold_mm,pck_pct\n", report.mean_mae));
    for (t, p) in report.thresholds.iter().zip(&report.pck) {
        out.push_str(&format!("{t},{p}\n"));
    }
    out.push_str("\nlandmark,quantization_mm\n");
    for (name, v) in &report.quantization {
        out.push_str(&format!("{name},{v}\n"));
    }
    out.push_str(&format!("Mean,{}\n", report.mean_quantization));
    out
}

/// Markdown tables: per-landmark MAE with a Mean row, then the PCK curve,
/// then the quantization floor.
pub fn report_markdown(report: &EvalReport, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("<!-- {c} -->\n"));
    }
    out.push_str("| Landmark | MAE (mm) |\n|---|---|\n");
    for (name, v) in &report.per_landmark {
        out.push_str(&format!("| {name} | {v:.2} |\n"));
    }
    out.push_str(&format!("| Mean | {:.2} |\n\n", report.mean_mae));
    out.push_str("| Threshold (mm) | PCK (%) |\n|---|---|\n");
    for (t, p) in report.thresholds.iter().zip(&report.pck) {
        out.push_str(&format!("| {t:.2} | {p:.1} |\n"));
    }
    out.push_str(&format!("\nQuantization floor (mean GT-to-nearest-point distance): {:.3} mm\n", report.mean_quantization));
    out
}

pub fn emit_report(report: &EvalReport, path: &Path, format: ReportFormat, comments: &[String]) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_csv(report, comments),
        ReportFormat::Markdown => report_markdown(report, comments),
    };
    std::fs::write(path, text)?;
    Ok(())
}
