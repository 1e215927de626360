use crate::dataio::{LabelRegistry, LandmarkSet};
use crate::error::{LmptError, Result};
use crate::geometry::{dist2, PointCloud};
use crate::scalar::Scalar;

/// Per-class target point index; `None` marks an ignored class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetAssignment(pub Vec<Option<usize>>);

impl TargetAssignment {
    pub fn labeled(&self) -> usize {
        self.0.iter().flatten().count()
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.0
    }
}

/// Index of the cloud point nearest to `p`; ties go to the smallest index.
pub fn nearest_point<S: Scalar>(cloud: &PointCloud<S>, p: &[S; 3]) -> usize {
    let mut best = 0;
    let mut best_d = S::infinity();
    for (i, q) in cloud.points().iter().enumerate() {
        let d = dist2(p, q);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Snaps every annotated landmark to its nearest cloud point. Classes the
/// annotation lacks are ignored.
pub fn assign_targets<S: Scalar>(
    cloud: &PointCloud<S>,
    landmarks: &LandmarkSet<S>,
    registry: &LabelRegistry,
) -> Result<TargetAssignment> {
    let mut targets = vec![None; registry.num_classes()];
    for (name, p) in landmarks.iter() {
        let c = registry
            .class_index(name)
            .ok_or_else(|| LmptError::Schema(format!("landmark {name} is not a registered class")))?;
        targets[c] = Some(nearest_point(cloud, p));
    }
    Ok(TargetAssignment(targets))
}
