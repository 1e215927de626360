use std::cmp::Ordering;

use super::{dist2, Point3, PointCloud};
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

/// Row-major `rows × k` neighbor indices with their Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable<S> {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<S>,
}

impl<S: Scalar> NeighborTable<S> {
    /// Builds a table from explicit neighbor rows, computing distances from
    /// `query` row points to `reference` points. Rows are sorted ascending by
    /// distance, ties by index.
    pub fn from_rows(query: &[Point3<S>], reference: &[Point3<S>], rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != query.len() {
            return Err(LmptError::Shape(format!("{} rows for {} query points", rows.len(), query.len())));
        }
        let k = rows.first().map_or(0, Vec::len);
        let mut indices = Vec::with_capacity(rows.len() * k);
        let mut distances = Vec::with_capacity(rows.len() * k);
        for (qi, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(LmptError::Shape(format!("row {qi} has {} entries, expected {k}", row.len())));
            }
            let mut scored = Vec::with_capacity(k);
            for &j in row {
                let r = reference
                    .get(j)
                    .ok_or_else(|| LmptError::Index(format!("neighbor {j} out of range {}", reference.len())))?;
                scored.push((dist2(&query[qi], r), j));
            }
            scored.sort_by(cmp_candidate);
            for (d2, j) in scored {
                indices.push(j);
                distances.push(d2.sqrt());
            }
        }
        Ok(Self { k, indices, distances })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances_of(&self, i: usize) -> &[S] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// All indices, row-major.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn distances(&self) -> &[S] {
        &self.distances
    }
}

fn cmp_candidate<S: Scalar>(a: &(S, usize), b: &(S, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Exact k-nearest neighbors of every query point among `reference`.
///
/// Rows are sorted by ascending distance with ties broken by the smaller
/// reference index, so a self-query puts each point first in its own row.
pub fn knn<S: Scalar>(query: &PointCloud<S>, reference: &PointCloud<S>, k: usize) -> Result<NeighborTable<S>> {
    let n = reference.len();
    if k > n {
        return Err(LmptError::InsufficientPoints { requested: k, available: n });
    }
    let refs = reference.points();
    let mut indices = Vec::with_capacity(query.len() * k);
    let mut distances = Vec::with_capacity(query.len() * k);
    let mut scratch: Vec<(S, usize)> = Vec::with_capacity(n);
    for q in query.points() {
        scratch.clear();
        scratch.extend(refs.iter().enumerate().map(|(j, r)| (dist2(q, r), j)));
        if k == 0 {
            continue;
        }
        if k < n {
            scratch.select_nth_unstable_by(k - 1, cmp_candidate);
            scratch.truncate(k);
        }
        scratch.sort_unstable_by(cmp_candidate);
        for &(d2, j) in &scratch {
            indices.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborTable { k, indices, distances })
}
