//! Finite-difference checks of every tape op and of the whole network.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check_with, Tape, Tensor, Var, OP_CATALOG};
use crate::error::Result;
use crate::geometry::{normalize_cloud, PointCloud};
use crate::model::{LmptModel, ModelConfig};
use crate::training::{keypoint_loss, TargetAssignment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seeds: u64,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Multiplies analytic gradients before comparison; anything but 1
    /// simulates a broken backward pass.
    pub analytic_scale: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { seeds: 20, epsilon: 1e-5, tolerance: 1e-4, analytic_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub cases: u64,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized")
}

/// Uniform values kept at least `gap` away from zero, for kinked ops.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Vec<usize>, gap: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(gap..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape, data).expect("sized")
}

fn segments(rng: &mut ChaCha8Rng, rows: usize, groups: usize) -> Arc<[usize]> {
    // every group gets at least one row
    let mut ids: Vec<usize> = (0..rows).map(|i| if i < groups { i } else { rng.gen_range(0..groups) }).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.gen_range(0..=i));
    }
    ids.into()
}

/// Builds a random case for `op`: inputs and a closure reducing the op's
/// output to a scalar through a fixed random projection.
#[allow(clippy::type_complexity)]
fn op_case(op: &str, seed: u64) -> (Vec<Tensor<f64>>, Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ op.len() as u64);
    let r = rng.gen_range(2..6);
    let c = rng.gen_range(2..6);
    let project = |rng: &mut ChaCha8Rng, shape: Vec<usize>| {
        let w = random(rng, shape);
        move |tape: &mut Tape<f64>, out: Var| -> Result<Var> {
            let w = tape.constant(w.clone());
            let y = tape.mul(out, w)?;
            Ok(tape.sum(y))
        }
    };
    macro_rules! unary {
        ($inputs:expr, $out_shape:expr, |$t:ident, $v:ident| $body:expr) => {{
            let proj = project(&mut rng, $out_shape);
            let f = move |$t: &mut Tape<f64>, $v: &[Var]| -> Result<Var> {
                let out = $body;
                proj($t, out)
            };
            ($inputs, Box::new(f) as Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>)
        }};
    }
    match op {
        "matmul" => {
            let k = rng.gen_range(2..6);
            unary!(vec![random(&mut rng, vec![r, k]), random(&mut rng, vec![k, c])], vec![r, c], |t, v| t.matmul(v[0], v[1])?)
        }
        "add" => unary!(vec![random(&mut rng, vec![r, c]), random(&mut rng, vec![r, c])], vec![r, c], |t, v| t.add(v[0], v[1])?),
        "sub" => unary!(vec![random(&mut rng, vec![r, c]), random(&mut rng, vec![r, c])], vec![r, c], |t, v| t.sub(v[0], v[1])?),
        "mul" => unary!(vec![random(&mut rng, vec![r, c]), random(&mut rng, vec![r, c])], vec![r, c], |t, v| t.mul(v[0], v[1])?),
        "scale" => {
            let s: f64 = rng.gen_range(-2.0..2.0);
            unary!(vec![random(&mut rng, vec![r, c])], vec![r, c], |t, v| t.scale(v[0], s))
        }
        "relu" => unary!(vec![away_from_zero(&mut rng, vec![r, c], 0.01)], vec![r, c], |t, v| t.relu(v[0])),
        "gelu" => unary!(vec![random(&mut rng, vec![r, c])], vec![r, c], |t, v| t.gelu(v[0])),
        "layer_norm" => unary!(
            vec![random(&mut rng, vec![r, c]), random(&mut rng, vec![c]), random(&mut rng, vec![c])],
            vec![r, c],
            |t, v| t.layer_norm(v[0], v[1], v[2])?
        ),
        "softmax" => unary!(vec![random(&mut rng, vec![r, c])], vec![r, c], |t, v| t.softmax(v[0])?),
        "grouped_softmax" => {
            let rows = r + 4;
            let groups = rng.gen_range(1..=r);
            let seg = segments(&mut rng, rows, groups);
            unary!(vec![random(&mut rng, vec![rows, c])], vec![rows, c], |t, v| t.grouped_softmax(v[0], seg.clone(), groups)?)
        }
        "gather_rows" => {
            let out = rng.gen_range(1..8);
            let idx: Arc<[usize]> = (0..out).map(|_| rng.gen_range(0..r)).collect::<Vec<_>>().into();
            unary!(vec![random(&mut rng, vec![r, c])], vec![out, c], |t, v| t.gather_rows(v[0], idx.clone())?)
        }
        "segment_sum" | "segment_mean" | "segment_max" => {
            let rows = r + 4;
            let groups = rng.gen_range(1..=r);
            let seg = segments(&mut rng, rows, groups);
            let which = op.to_string();
            unary!(vec![random(&mut rng, vec![rows, c])], vec![groups, c], |t, v| match which.as_str() {
                "segment_sum" => t.segment_sum(v[0], seg.clone(), groups)?,
                "segment_mean" => t.segment_mean(v[0], seg.clone(), groups)?,
                _ => t.segment_max(v[0], seg.clone(), groups)?,
            })
        }
        "concat" => {
            let c2 = rng.gen_range(1..5);
            unary!(vec![random(&mut rng, vec![r, c]), random(&mut rng, vec![r, c2])], vec![r, c + c2], |t, v| t
                .concat(v[0], v[1])?)
        }
        "add_bias" => unary!(vec![random(&mut rng, vec![r, c]), random(&mut rng, vec![c])], vec![r, c], |t, v| t
            .add_bias(v[0], v[1])?),
        "cross_entropy" => {
            let targets: Vec<Option<usize>> =
                (0..r).map(|i| if i == 0 || rng.gen_bool(0.7) { Some(rng.gen_range(0..c)) } else { None }).collect();
            let x = random(&mut rng, vec![r, c]).data().iter().map(|v| v * 3.0).collect();
            let x = Tensor::new(vec![r, c], x).expect("sized");
            let f = move |t: &mut Tape<f64>, v: &[Var]| t.cross_entropy(v[0], &targets);
            (vec![x], Box::new(f))
        }
        "transpose" => unary!(vec![random(&mut rng, vec![r, c])], vec![c, r], |t, v| t.transpose(v[0])?),
        "slice_cols" => {
            let start = rng.gen_range(0..c);
            let len = rng.gen_range(1..=c - start);
            unary!(vec![random(&mut rng, vec![r, c])], vec![r, len], |t, v| t.slice_cols(v[0], start, len)?)
        }
        "sum" => {
            let x = random(&mut rng, vec![r, c]);
            let f = |t: &mut Tape<f64>, v: &[Var]| -> Result<Var> {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.sum(sq))
            };
            (vec![x], Box::new(f))
        }
        other => panic!("no gradient case for op {other}"),
    }
}

/// Checks one op over `cfg.seeds` random cases.
pub fn check_op(op: &str, cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for seed in 0..cfg.seeds {
        let (inputs, f) = op_case(op, seed);
        let outcome = grad_check_with(|t, v| f(t, v), &inputs, cfg.epsilon, cfg.analytic_scale)?;
        worst = worst.max(outcome.max_rel_error);
    }
    Ok(CheckResult { name: op.to_string(), cases: cfg.seeds, max_rel_error: worst, passed: worst < cfg.tolerance })
}

/// Tiny network used by the end-to-end check: two stages of widths 8/16,
/// one block each, k = 4, three classes and two conditions.
pub fn tiny_check_config() -> ModelConfig {
    ModelConfig::tiny(3, 2)
}

/// End-to-end check of keypoint loss with respect to every parameter of a
/// tiny network on an `n`-point cloud. Parameters are jittered away from
/// their initial values so FiLM and all biases are non-trivial.
pub fn check_model(config: &ModelConfig, n: usize, seed: u64, cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let (cloud, _) = normalize_cloud(&PointCloud::new(raw)?)?;
    let model: LmptModel<f64> = LmptModel::new(config.clone(), seed)?;
    let hier = model.hierarchy(&cloud)?;
    let inputs: Vec<Tensor<f64>> = model
        .params()
        .tensors()
        .iter()
        .map(|t| {
            let data = t.data().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
            Tensor::new(t.shape().to_vec(), data).expect("same shape")
        })
        .collect();
    let targets = TargetAssignment((0..config.num_classes).map(|_| Some(rng.gen_range(0..n))).collect());
    let condition = rng.gen_range(0..config.num_conditions);
    let f = |tape: &mut Tape<f64>, p: &[Var]| -> Result<Var> {
        let logits = model.forward_on_tape(tape, p, &hier, Some(condition))?;
        keypoint_loss(tape, logits, &targets)
    };
    let outcome = grad_check_with(f, &inputs, cfg.epsilon, cfg.analytic_scale)?;
    Ok(CheckResult {
        name: format!("model(n={n})"),
        cases: 1,
        max_rel_error: outcome.max_rel_error,
        passed: outcome.max_rel_error < cfg.tolerance,
    })
}

/// Every cataloged op, then the end-to-end tiny model on 32 points.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let mut out = OP_CATALOG.iter().map(|op| check_op(op, cfg)).collect::<Result<Vec<_>>>()?;
    out.push(check_model(&tiny_check_config(), 32, 7, cfg)?);
    Ok(out)
}
