use super::PointCloud;
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

pub const MAX_BITS: u32 = 21;

/// Interleaves `bits` bits of each grid coordinate into a Z-order code. Within
/// each 3-bit group x is least significant, then y, then z.
pub fn morton_code(grid: [u32; 3], bits: u32) -> u64 {
    let mut code = 0u64;
    for b in 0..bits {
        for (axis, &g) in grid.iter().enumerate() {
            code |= (((g >> b) & 1) as u64) << (3 * b + axis as u32);
        }
    }
    code
}

/// Quantizes the cloud onto a `2^bits` grid per axis over its bounding box,
/// using one uniform scale for all axes (the largest box extent).
pub fn quantize_grid<S: Scalar>(cloud: &PointCloud<S>, bits: u32) -> Result<Vec<[u32; 3]>> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(LmptError::InvalidInput(format!("bits must be in 1..={MAX_BITS}, got {bits}")));
    }
    let pts = cloud.points();
    if pts.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(LmptError::InvalidInput("non-finite coordinate".into()));
    }
    let mut lo = [S::infinity(); 3];
    let mut hi = [S::neg_infinity(); 3];
    for p in pts {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (0..3).map(|k| hi[k] - lo[k]).fold(S::zero(), S::max);
    let cells = (1u64 << bits) as f64;
    let top = (1u32 << bits) - 1;
    Ok(pts
        .iter()
        .map(|p| {
            let mut g = [0u32; 3];
            if extent > S::zero() {
                for k in 0..3 {
                    let t = ((p[k] - lo[k]) / extent).to_f64_lossless() * cells;
                    g[k] = (t.floor().max(0.0) as u64).min(top as u64) as u32;
                }
            }
            g
        })
        .collect())
}

/// Point indices sorted by Z-order code (stable for equal codes).
pub fn serialize_order<S: Scalar>(cloud: &PointCloud<S>, bits: u32) -> Result<Vec<usize>> {
    let codes: Vec<u64> = quantize_grid(cloud, bits)?.into_iter().map(|g| morton_code(g, bits)).collect();
    let mut order: Vec<usize> = (0..codes.len()).collect();
    order.sort_by_key(|&i| codes[i]);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_code_is_zero() {
        assert_eq!(morton_code([0, 0, 0], 10), 0);
    }

    #[test]
    fn one_bit_axis_codes() {
        assert_eq!(morton_code([1, 0, 0], 1), 1);
        assert_eq!(morton_code([0, 1, 0], 1), 2);
        assert_eq!(morton_code([0, 0, 1], 1), 4);
        assert_eq!(morton_code([1, 1, 1], 2), 7);
        assert_eq!(morton_code([2, 0, 0], 2), 8);
    }

    #[test]
    fn one_bit_order() {
        let c = PointCloud::new(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(serialize_order(&c, 1).unwrap(), vec![3, 1, 2, 0]);
    }

    #[test]
    fn bits_out_of_range() {
        let c = PointCloud::new(vec![[0.0; 3]]).unwrap();
        assert!(serialize_order(&c, 0).is_err());
        assert!(serialize_order(&c, 22).is_err());
    }

    #[test]
    fn max_bits_fit_in_u64() {
        let top = (1u32 << MAX_BITS) - 1;
        assert_eq!(morton_code([top, top, top], MAX_BITS), (1u64 << 63) - 1);
    }
}
