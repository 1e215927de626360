use std::collections::BTreeMap;

use crate::dataio::{LabelRegistry, LandmarkSet};
use crate::error::{LmptError, Result};
use crate::geometry::{denormalize_point, NormTransform, Point3};
use crate::scalar::Scalar;
use crate::training::TrainSample;

/// Predicts every landmark at its mean normalized position over a training
/// set.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPositionBaseline {
    means: BTreeMap<String, Point3<f64>>,
}

/// Averages each class over the (normalized) training samples annotating it.
pub fn baseline_mean_position<S: Scalar>(train: &[TrainSample<S>], registry: &LabelRegistry) -> Result<MeanPositionBaseline> {
    let mut acc: BTreeMap<String, ([f64; 3], usize)> = BTreeMap::new();
    for s in train {
        for (name, p) in s.landmarks.iter() {
            if registry.class_index(name).is_none() {
                return Err(LmptError::Schema(format!("landmark {name} is not a registered class")));
            }
            let slot = acc.entry(name.to_string()).or_insert(([0.0; 3], 0));
            for k in 0..3 {
                slot.0[k] += p[k].to_f64_lossless();
            }
            slot.1 += 1;
        }
    }
    let means = acc.into_iter().map(|(k, (sum, n))| (k, sum.map(|v| v / n as f64))).collect();
    Ok(MeanPositionBaseline { means })
}

impl MeanPositionBaseline {
    pub fn mean(&self, name: &str) -> Option<&Point3<f64>> {
        self.means.get(name)
    }

    /// Mean positions of `species`' classes mapped into a sample's frame;
    /// classes never seen in training are omitted.
    pub fn predict<S: Scalar>(
        &self,
        transform: &NormTransform<S>,
        registry: &LabelRegistry,
        species: &str,
    ) -> Result<LandmarkSet<S>> {
        let mut out = LandmarkSet::new();
        for name in &registry.species(species)?.classes {
            if let Some(m) = self.means.get(name) {
                out.insert(name.clone(), denormalize_point(&m.map(S::lit), transform))?;
            }
        }
        Ok(out)
    }
}
