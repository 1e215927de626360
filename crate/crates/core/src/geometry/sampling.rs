use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{add3, dist2, scale3, Point3, PointCloud, TriangleMesh};
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

/// Subsampling strategy for clouds that already exist as points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    FarthestPoint,
}

/// Area-weighted uniform surface sampling; returns the points and the face
/// each point was drawn from.
pub fn sample_surface_with_faces<S: Scalar>(
    mesh: &TriangleMesh<S>,
    n: usize,
    seed: u64,
) -> Result<(PointCloud<S>, Vec<usize>)> {
    if n == 0 {
        return Err(LmptError::InvalidInput("sample count must be at least 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0f64;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f).to_f64_lossless();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(LmptError::DegenerateMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let r1: f64 = rng.gen();
        let r2: f64 = rng.gen();
        let s = r1.sqrt();
        let (wa, wb, wc) = (S::lit(1.0 - s), S::lit(s * (1.0 - r2)), S::lit(s * r2));
        points.push(add3(&add3(&scale3(&a, wa), &scale3(&b, wb)), &scale3(&c, wc)));
        faces.push(face);
    }
    Ok((PointCloud::new(points)?, faces))
}

/// `n` points drawn uniformly over the mesh surface, deterministic per seed.
pub fn sample_surface<S: Scalar>(mesh: &TriangleMesh<S>, n: usize, seed: u64) -> Result<PointCloud<S>> {
    sample_surface_with_faces(mesh, n, seed).map(|(c, _)| c)
}

/// Indices of an `n`-subset of the cloud.
///
/// `Random` draws without replacement and returns indices in ascending order.
/// `FarthestPoint` anchors the min-distance field at the point nearest the
/// centroid, then greedily emits the point farthest from everything chosen
/// so far (ties to the smallest index). The seed only affects `Random`.
pub fn subsample_indices<S: Scalar>(cloud: &PointCloud<S>, n: usize, seed: u64, strategy: Strategy) -> Result<Vec<usize>> {
    let total = cloud.len();
    if n > total {
        return Err(LmptError::InsufficientPoints { requested: n, available: total });
    }
    if n == 0 {
        return Err(LmptError::InvalidInput("subsample count must be at least 1".into()));
    }
    match strategy {
        Strategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, total, n).into_vec();
            picked.sort_unstable();
            Ok(picked)
        }
        Strategy::FarthestPoint => Ok(farthest_point(cloud.points(), n)),
    }
}

fn farthest_point<S: Scalar>(points: &[Point3<S>], n: usize) -> Vec<usize> {
    let c = super::centroid(points);
    let mut anchor = 0;
    for (i, p) in points.iter().enumerate() {
        if dist2(p, &c) < dist2(&points[anchor], &c) {
            anchor = i;
        }
    }
    let mut min_d: Vec<S> = points.iter().map(|p| dist2(p, &points[anchor])).collect();
    let mut taken = vec![false; points.len()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for i in 0..points.len() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| min_d[i] > min_d[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("n <= N leaves a candidate");
        taken[b] = true;
        out.push(b);
        for i in 0..points.len() {
            let d = dist2(&points[i], &points[b]);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    out
}

pub fn subsample_cloud<S: Scalar>(cloud: &PointCloud<S>, n: usize, seed: u64, strategy: Strategy) -> Result<PointCloud<S>> {
    Ok(cloud.select(&subsample_indices(cloud, n, seed, strategy)?))
}
