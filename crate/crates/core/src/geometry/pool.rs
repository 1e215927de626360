use std::collections::BTreeMap;

use super::{add3, scale3, Point3, PointCloud};
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

/// Assignment of every point to a grid cluster, plus cluster centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolMap<S> {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Point3<S>>,
}

impl<S: Scalar> PoolMap<S> {
    pub fn clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.centroids.len()];
        for &c in &self.assignment {
            counts[c] += 1;
        }
        counts
    }

    pub fn centroid_cloud(&self) -> PointCloud<S> {
        PointCloud::new(self.centroids.clone()).expect("pool maps are built from non-empty finite clouds")
    }
}

/// Bins points by `floor(coord / cell_size)` per axis. Non-empty bins become
/// clusters numbered in lexicographic order of their integer bin coordinates.
pub fn grid_pool_map<S: Scalar>(cloud: &PointCloud<S>, cell_size: S) -> Result<PoolMap<S>> {
    if !(cell_size > S::zero()) || !cell_size.is_finite() {
        return Err(LmptError::InvalidInput(format!("cell size must be positive, got {cell_size}")));
    }
    let keys: Vec<[i64; 3]> = cloud
        .points()
        .iter()
        .map(|p| {
            let k = |c: S| (c / cell_size).floor().to_i64().unwrap_or(i64::MAX);
            [k(p[0]), k(p[1]), k(p[2])]
        })
        .collect();
    let mut bins: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    for key in &keys {
        bins.entry(*key).or_insert(0);
    }
    for (id, slot) in bins.values_mut().enumerate() {
        *slot = id;
    }
    let assignment: Vec<usize> = keys.iter().map(|k| bins[k]).collect();
    let mut sums = vec![[S::zero(); 3]; bins.len()];
    let mut counts = vec![0usize; bins.len()];
    for (p, &c) in cloud.points().iter().zip(&assignment) {
        sums[c] = add3(&sums[c], p);
        counts[c] += 1;
    }
    let centroids = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| scale3(s, S::one() / S::of_usize(n)))
        .collect();
    Ok(PoolMap { assignment, centroids })
}
