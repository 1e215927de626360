//! Dense loops shared by forward and backward passes.

use crate::scalar::Scalar;

/// `out[n×m] += a[n×k] · b[k×m]`
pub(crate) fn matmul_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let b_row = &b[p * m..(p + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[n×k] += g[n×m] · b[k×m]ᵀ`
pub(crate) fn matmul_bt_acc<S: Scalar>(g: &[S], b: &[S], out: &mut [S], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let g_row = &g[i * m..(i + 1) * m];
        for p in 0..k {
            let b_row = &b[p * m..(p + 1) * m];
            let mut acc = S::zero();
            for (&gv, &bv) in g_row.iter().zip(b_row) {
                acc += gv * bv;
            }
            out[i * k + p] += acc;
        }
    }
}

/// `out[k×m] += a[n×k]ᵀ · g[n×m]`
pub(crate) fn matmul_at_acc<S: Scalar>(a: &[S], g: &[S], out: &mut [S], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let g_row = &g[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let out_row = &mut out[p * m..(p + 1) * m];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

const GELU_CUBIC: f64 = 0.044715;

/// tanh approximation of GELU.
#[inline]
pub(crate) fn gelu<S: Scalar>(x: S) -> S {
    let c = S::lit((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + S::lit(GELU_CUBIC) * x * x * x);
    S::lit(0.5) * x * (S::one() + u.tanh())
}

#[inline]
pub(crate) fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::lit((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + S::lit(GELU_CUBIC) * x * x * x);
    let t = u.tanh();
    let du = c * (S::one() + S::lit(3.0 * GELU_CUBIC) * x * x);
    S::lit(0.5) * (S::one() + t) + S::lit(0.5) * x * (S::one() - t * t) * du
}
