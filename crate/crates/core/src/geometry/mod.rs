//! Geometric kernels: normalization, sampling, neighborhoods, pooling,
//! medoids and Z-order serialization.
//!
//! Everything here is a pure function of its inputs.

mod knn;
mod medoid;
mod normalize;
mod pool;
mod sampling;
mod serialize;

pub use knn::{knn, NeighborTable};
pub use medoid::{medoid, medoid_index};
pub use normalize::{denormalize_point, denormalize_points, normalize_cloud, NormTransform};
pub use pool::{grid_pool_map, PoolMap};
pub use sampling::{sample_surface, sample_surface_with_faces, subsample_cloud, subsample_indices, Strategy};
pub use serialize::{morton_code, quantize_grid, serialize_order, MAX_BITS};

use serde::{Deserialize, Serialize};

use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

pub type Point3<S> = [S; 3];

#[inline]
pub fn sub3<S: Scalar>(a: &Point3<S>, b: &Point3<S>) -> Point3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3<S: Scalar>(a: &Point3<S>, b: &Point3<S>) -> Point3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3<S: Scalar>(a: &Point3<S>, s: S) -> Point3<S> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dist2<S: Scalar>(a: &Point3<S>, b: &Point3<S>) -> S {
    let d = sub3(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[inline]
pub fn dist<S: Scalar>(a: &Point3<S>, b: &Point3<S>) -> S {
    dist2(a, b).sqrt()
}

#[inline]
pub fn norm3<S: Scalar>(a: &Point3<S>) -> S {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn cross3<S: Scalar>(a: &Point3<S>, b: &Point3<S>) -> Point3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Arithmetic mean of the points, accumulated in input order.
pub fn centroid<S: Scalar>(points: &[Point3<S>]) -> Point3<S> {
    let mut acc = [S::zero(); 3];
    for p in points {
        acc = add3(&acc, p);
    }
    scale3(&acc, S::one() / S::of_usize(points.len()))
}

/// A non-empty set of finite 3D points in source units (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud<S> {
    points: Vec<Point3<S>>,
}

impl<S: Scalar> PointCloud<S> {
    pub fn new(points: Vec<Point3<S>>) -> Result<Self> {
        if points.is_empty() {
            return Err(LmptError::EmptySet);
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(LmptError::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3<S>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3<S>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for the `len`/`is_empty` convention.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<S> {
        centroid(&self.points)
    }

    /// Applies `f` to every point. The closure must keep coordinates finite.
    pub fn map(&self, f: impl Fn(&Point3<S>) -> Point3<S>) -> Self {
        Self { points: self.points.iter().map(f).collect() }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self { points: indices.iter().map(|&i| self.points[i]).collect() }
    }

    /// Mean distance from each point to its nearest other point.
    pub fn mean_spacing(&self) -> S {
        if self.points.len() < 2 {
            return S::zero();
        }
        let table = knn(self, self, 2).expect("k = 2 <= N");
        let total: S = (0..self.len()).map(|i| table.distances_of(i)[1]).sum();
        total / S::of_usize(self.len())
    }
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh<S> {
    pub vertices: Vec<Point3<S>>,
    pub faces: Vec<[usize; 3]>,
}

impl<S: Scalar> TriangleMesh<S> {
    pub fn new(vertices: Vec<Point3<S>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(LmptError::InvalidInput("non-finite vertex".into()));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= vertices.len()) {
                return Err(LmptError::Index(format!(
                    "face {fi} references vertex {bad}, mesh has {}",
                    vertices.len()
                )));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn triangle(&self, face: usize) -> [Point3<S>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, face: usize) -> S {
        let [a, b, c] = self.triangle(face);
        norm3(&cross3(&sub3(&b, &a), &sub3(&c, &a))) * S::lit(0.5)
    }
}
