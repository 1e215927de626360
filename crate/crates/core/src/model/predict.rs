use crate::autodiff::Tensor;
use crate::dataio::{LabelRegistry, LandmarkSet};
use crate::error::{LmptError, Result};
use crate::geometry::{denormalize_point, NormTransform, PointCloud};
use crate::scalar::Scalar;

/// Row index of the largest value in column `channel` of an `N x C` matrix;
/// ties go to the smallest index.
pub fn argmax_point<S: Scalar>(logits: &Tensor<S>, channel: usize) -> Result<usize> {
    let (n, c) = logits.dims2()?;
    if channel >= c {
        return Err(LmptError::Index(format!("channel {channel} out of range for {c} classes")));
    }
    if n == 0 {
        return Err(LmptError::EmptySet);
    }
    let data = logits.data();
    let mut best = 0;
    for i in 1..n {
        if data[i * c + channel] > data[best * c + channel] {
            best = i;
        }
    }
    Ok(best)
}

/// Per-class argmax over points for every class of `species`, mapped back to
/// the original frame. `cloud` is the normalized cloud the logits belong to.
pub fn predict_landmarks<S: Scalar>(
    logits: &Tensor<S>,
    cloud: &PointCloud<S>,
    transform: &NormTransform<S>,
    registry: &LabelRegistry,
    species: &str,
) -> Result<LandmarkSet<S>> {
    let (n, c) = logits.dims2()?;
    if n != cloud.len() {
        return Err(LmptError::Shape(format!("{n} logit rows for {} points", cloud.len())));
    }
    if c != registry.num_classes() {
        return Err(LmptError::Shape(format!("{c} logit channels for {} classes", registry.num_classes())));
    }
    let schema = &registry.species(species)?.classes;
    if schema.is_empty() {
        return Err(LmptError::Schema(format!("species {species} has an empty schema")));
    }
    let mut out = LandmarkSet::default();
    for name in schema {
        let channel = registry.class_index(name).expect("registry validates schemas");
        let i = argmax_point(logits, channel)?;
        out.insert(name.clone(), denormalize_point(&cloud.points()[i], transform))?;
    }
    Ok(out)
}
