use super::targets::TargetAssignment;
use crate::autodiff::{Tape, Var};
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

/// Channel-wise cross-entropy: for each labeled class, softmax over the
/// points of that logit column against the target point. Averaged over the
/// labeled classes; 0 when every class is ignored.
pub fn keypoint_loss<S: Scalar>(tape: &mut Tape<S>, logits: Var, targets: &TargetAssignment) -> Result<Var> {
    let (_, c) = tape.value(logits).dims2()?;
    if c != targets.0.len() {
        return Err(LmptError::Shape(format!("{c} logit channels, {} targets", targets.0.len())));
    }
    let by_class = tape.transpose(logits)?;
    tape.cross_entropy(by_class, &targets.0)
}
