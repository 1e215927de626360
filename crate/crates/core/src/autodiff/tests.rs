use std::sync::Arc;

use super::*;
use crate::error::LmptError;

fn vec1(v: &[f64]) -> Tensor<f64> {
    Tensor::vector(v.to_vec())
}

fn mat(r: usize, c: usize, v: &[f64]) -> Tensor<f64> {
    Tensor::matrix(r, c, v.to_vec()).unwrap()
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut t = Tape::new();
    let x = t.constant(mat(1, 2, &[0.0, 0.0]));
    let y = t.softmax(x).unwrap();
    assert_eq!(t.value(y).data(), &[0.5, 0.5]);
}

#[test]
fn segment_max_example() {
    let mut t = Tape::new();
    let x = t.param(mat(3, 1, &[1.0, 5.0, 3.0]));
    let y = t.segment_max(x, Arc::from(vec![0, 0, 1]), 2).unwrap();
    assert_eq!(t.value(y).data(), &[5.0, 3.0]);
    let loss = t.sum(y);
    let g = t.backward(loss).unwrap();
    assert_eq!(g.get(x).data(), &[0.0, 1.0, 1.0]);
}

#[test]
fn segment_max_tie_routes_to_first() {
    let mut t = Tape::new();
    let x = t.param(mat(3, 1, &[2.0, 2.0, 2.0]));
    let y = t.segment_max(x, Arc::from(vec![0, 0, 0]), 1).unwrap();
    let loss = t.sum(y);
    let g = t.backward(loss).unwrap();
    assert_eq!(g.get(x).data(), &[1.0, 0.0, 0.0]);
}

#[test]
fn cross_entropy_uniform_logits() {
    let mut t = Tape::new();
    let x = t.constant(mat(1, 4, &[0.0; 4]));
    let y = t.cross_entropy(x, &[Some(2)]).unwrap();
    assert!((t.value(y).item() - 4f64.ln()).abs() < 1e-15);
    assert!((t.value(y).item() - 1.3863).abs() < 1e-4);
}

#[test]
fn cross_entropy_all_ignored_is_zero_with_zero_grad() {
    let mut t = Tape::new();
    let x = t.param(mat(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 4.0]));
    let y = t.cross_entropy(x, &[None, None]).unwrap();
    assert_eq!(t.value(y).item(), 0.0);
    let g = t.backward(y).unwrap();
    assert!(g.get(x).data().iter().all(|&v| v == 0.0));
}

#[test]
fn sum_backward_is_ones() {
    let mut t = Tape::new();
    let x = t.param(vec1(&[1.0, 2.0, 3.0]));
    let loss = t.sum(x);
    assert_eq!(t.backward(loss).unwrap().get(x).data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn sum_of_squares_backward() {
    let mut t = Tape::new();
    let x = t.param(vec1(&[1.0, 2.0, 3.0]));
    let sq = t.mul(x, x).unwrap();
    let loss = t.sum(sq);
    assert_eq!(t.backward(loss).unwrap().get(x).data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn off_path_leaf_gets_zero() {
    let mut t = Tape::new();
    let x = t.param(vec1(&[1.0, 2.0]));
    let unused = t.param(vec1(&[7.0]));
    let loss = t.sum(x);
    let g = t.backward(loss).unwrap();
    assert_eq!(g.get(unused).data(), &[0.0]);
    assert!(g.raw(unused).is_none());
}

#[test]
fn non_scalar_loss_rejected() {
    let mut t = Tape::new();
    let x = t.param(vec1(&[1.0, 2.0]));
    assert!(matches!(t.backward(x), Err(LmptError::Shape(_))));
}

#[test]
fn shape_and_index_errors() {
    let mut t = Tape::new();
    let a = t.constant(mat(2, 3, &[0.0; 6]));
    let b = t.constant(mat(2, 3, &[0.0; 6]));
    assert!(matches!(t.matmul(a, b), Err(LmptError::Shape(_))));
    assert!(matches!(t.gather_rows(a, Arc::from(vec![0, 2])), Err(LmptError::Index(_))));
    assert!(matches!(t.segment_sum(a, Arc::from(vec![0, 5]), 2), Err(LmptError::Index(_))));
    let c = t.constant(vec1(&[1.0]));
    assert!(matches!(t.add(a, c), Err(LmptError::Shape(_))));
}

#[test]
fn linear_layer_gradcheck() {
    let x = mat(3, 2, &[0.3, -1.2, 0.7, 0.1, -0.4, 2.0]);
    let w = mat(2, 4, &[0.5, -0.3, 0.2, 0.9, -1.1, 0.4, 0.6, -0.2]);
    let b = vec1(&[0.1, 0.2, -0.3, 0.05]);
    let err = grad_check(
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.add_bias(y, v[2])?;
            let sq = t.mul(y, y)?;
            Ok(t.sum(sq))
        },
        &[x, w, b],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn injected_scale_is_detected() {
    let x = vec1(&[1.0, -2.0, 3.0]);
    let f = |t: &mut Tape<f64>, v: &[Var]| {
        let sq = t.mul(v[0], v[0])?;
        Ok(t.sum(sq))
    };
    let ok = grad_check_with(f, std::slice::from_ref(&x), 1e-5, 1.0).unwrap();
    assert!(ok.max_rel_error < 1e-8);
    let bad = grad_check_with(f, &[x], 1e-5, 1.01).unwrap();
    assert!(bad.max_rel_error > 1e-3);
}

#[test]
fn backward_is_bitwise_deterministic() {
    let build = || {
        let mut t = Tape::new();
        let x = t.param(mat(4, 3, &[0.1, 0.2, -0.3, 1.1, -0.7, 0.4, 0.9, 0.0, -1.3, 0.25, 0.5, -0.6]));
        let g = t.param(vec1(&[1.0, 0.8, 1.2]));
        let b = t.param(vec1(&[0.0, 0.1, -0.1]));
        let y = t.layer_norm(x, g, b).unwrap();
        let y = t.gelu(y);
        let y = t.grouped_softmax(y, Arc::from(vec![0, 1, 0, 1]), 2).unwrap();
        let s = t.mul(y, y).unwrap();
        let loss = t.sum(s);
        let grads = t.backward(loss).unwrap();
        (grads.get(x), grads.get(g), grads.get(b))
    };
    assert_eq!(build(), build());
}
