//! Central finite-difference gradient oracle.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default step for [`finite_diff_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares the tape gradient of a tensor-to-scalar function against
/// central differences at `x`.
///
/// Returns the maximum over coordinates of
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-10)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    if h <= 0.0 {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {h}")));
    }
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&tape, xv)?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .wrt(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |probe: Tensor| -> Result<f64> {
        let tape = Tape::new();
        let v = tape.constant(probe);
        f(&tape, v)?.item()
    };

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for j in 0..x.len() {
        let orig = probe.data()[j];
        probe.data_mut()[j] = orig + h;
        let up = eval(probe.clone())?;
        probe.data_mut()[j] = orig - h;
        let down = eval(probe.clone())?;
        probe.data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[j];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-10);
        worst = worst.max(rel);
    }
    Ok(worst)
}
