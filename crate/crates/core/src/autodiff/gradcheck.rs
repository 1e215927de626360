use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Worst elementwise disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOutcome {
    pub max_rel_error: f64,
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares `backward` against central differences for every element of
/// every input. Relative error is `|a - n| / max(1, |a|, |n|)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    grad_check_with(f, inputs, epsilon, 1.0).map(|o| o.max_rel_error)
}

/// [`grad_check`] with the analytic gradient multiplied by `analytic_scale`
/// before comparison; a scale other than 1 simulates a broken backward pass.
pub fn grad_check_with<F>(f: F, inputs: &[Tensor<f64>], epsilon: f64, analytic_scale: f64) -> Result<GradCheckOutcome>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst = GradCheckOutcome { max_rel_error: 0.0, input: 0, element: 0, analytic: 0.0, numeric: 0.0 };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ii, &v) in vars.iter().enumerate() {
        let analytic = grads.get(v);
        for e in 0..inputs[ii].numel() {
            let orig = inputs[ii].data()[e];
            work[ii].data_mut()[e] = orig + epsilon;
            let plus = eval(&work)?;
            work[ii].data_mut()[e] = orig - epsilon;
            let minus = eval(&work)?;
            work[ii].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.data()[e] * analytic_scale;
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if err > worst.max_rel_error || !err.is_finite() {
                worst = GradCheckOutcome { max_rel_error: err, input: ii, element: e, analytic: a, numeric };
            }
        }
    }
    Ok(worst)
}
