use serde::{Deserialize, Serialize};

use super::{add3, centroid, norm3, scale3, sub3, Point3, PointCloud};
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

/// Centering + unit-sphere scaling parameters of a normalized cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormTransform<S> {
    pub centroid: Point3<S>,
    pub scale: S,
}

impl<S: Scalar> NormTransform<S> {
    pub fn identity() -> Self {
        Self { centroid: [S::zero(); 3], scale: S::one() }
    }

    /// Maps a source-unit point into the normalized frame.
    pub fn apply(&self, p: &Point3<S>) -> Point3<S> {
        scale3(&sub3(p, &self.centroid), S::one() / self.scale)
    }
}

/// Centers the cloud on its centroid and scales it so the farthest point lies
/// on the unit sphere.
pub fn normalize_cloud<S: Scalar>(cloud: &PointCloud<S>) -> Result<(PointCloud<S>, NormTransform<S>)> {
    let c = centroid(cloud.points());
    let centered: Vec<Point3<S>> = cloud.points().iter().map(|p| sub3(p, &c)).collect();
    let radius = centered.iter().map(norm3).fold(S::zero(), S::max);
    if !(radius > S::zero()) {
        return Err(LmptError::DegenerateCloud);
    }
    let inv = S::one() / radius;
    let points = centered.iter().map(|p| scale3(p, inv)).collect();
    Ok((PointCloud::new(points)?, NormTransform { centroid: c, scale: radius }))
}

#[inline]
pub fn denormalize_point<S: Scalar>(p: &Point3<S>, transform: &NormTransform<S>) -> Point3<S> {
    add3(&scale3(p, transform.scale), &transform.centroid)
}

pub fn denormalize_points<S: Scalar>(points: &[Point3<S>], transform: &NormTransform<S>) -> Vec<Point3<S>> {
    points.iter().map(|p| denormalize_point(p, transform)).collect()
}
