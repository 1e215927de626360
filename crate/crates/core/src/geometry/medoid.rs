use super::{dist, Point3};
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

/// Index of the point minimizing the sum of Euclidean distances to all
/// points; ties go to the smallest index.
pub fn medoid_index<S: Scalar>(points: &[Point3<S>]) -> Result<usize> {
    if points.is_empty() {
        return Err(LmptError::EmptySet);
    }
    let mut best = (S::infinity(), 0);
    for (i, p) in points.iter().enumerate() {
        let total: S = points.iter().map(|q| dist(p, q)).sum();
        if total < best.0 {
            best = (total, i);
        }
    }
    Ok(best.1)
}

pub fn medoid<S: Scalar>(points: &[Point3<S>]) -> Result<Point3<S>> {
    medoid_index(points).map(|i| points[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        assert_eq!(medoid(&[[4.0, 5.0, 6.0]]).unwrap(), [4.0, 5.0, 6.0]);
    }

    #[test]
    fn collinear_example() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        assert_eq!(medoid(&pts).unwrap(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn tie_goes_to_first() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(medoid_index(&pts).unwrap(), 0);
    }

    #[test]
    fn empty_fails() {
        assert!(matches!(medoid::<f64>(&[]), Err(LmptError::EmptySet)));
    }
}
