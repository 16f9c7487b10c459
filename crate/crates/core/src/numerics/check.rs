//! Central finite-difference gradient verification.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Default perturbation for central differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A scalar function value together with its analytic gradients, one
/// matrix per parameter, in parameter order.
pub struct ValueAndGrad {
    pub value: f64,
    pub grads: Vec<Matrix>,
}

/// Compares analytic gradients against central finite differences.
///
/// `f` must be a deterministic scalar function of the parameter list
/// (any internal noise must be replayed from a fixed seed). Returns the
/// maximum over all parameter entries of
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn finite_diff_check<F>(f: &mut F, params: &[Matrix], step: f64) -> Result<f64>
where
    F: FnMut(&[Matrix]) -> Result<ValueAndGrad>,
{
    if step <= 0.0 {
        return Err(Error::Contract(format!("step must be positive, got {step}")));
    }
    let base = f(params)?;
    if !base.value.is_finite() {
        return Err(Error::Numeric(format!(
            "function value {} is not finite at the base point",
            base.value
        )));
    }
    if base.grads.len() != params.len() {
        return Err(Error::Contract(format!(
            "got {} gradients for {} parameters",
            base.grads.len(),
            params.len()
        )));
    }
    let mut work: Vec<Matrix> = params.to_vec();
    let mut max_err = 0.0f64;
    for (pi, param) in params.iter().enumerate() {
        if base.grads[pi].shape() != param.shape() {
            return Err(Error::shape(
                "finite_diff_check",
                param.shape_str(),
                base.grads[pi].shape_str(),
            ));
        }
        for e in 0..param.len() {
            let orig = param.as_slice()[e];
            work[pi].as_mut_slice()[e] = orig + step;
            let up = f(&work)?.value;
            work[pi].as_mut_slice()[e] = orig - step;
            let down = f(&work)?.value;
            work[pi].as_mut_slice()[e] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite function value at perturbed point (param {pi}, entry {e})"
                )));
            }
            let numeric = (up - down) / (2.0 * step);
            let analytic = base.grads[pi].as_slice()[e];
            let err = (analytic - numeric).abs() / numeric.abs().max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}
