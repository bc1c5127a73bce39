//! Central-difference check of analytic gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Settings for [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Denominator floor of the relative error, so entries whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
    /// Upper bound on the entries probed per tensor; larger tensors are
    /// probed at an even stride.
    pub max_per_tensor: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            floor: 1e-3,
            max_per_tensor: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor, entry)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Entries whose ±step evaluations straddle a kink and were not compared.
    pub skipped: usize,
}

/// Compares `analytic[t][i]` against `(f(θ + h·e) − f(θ − h·e)) / 2h` for the
/// probed entries of every tensor. `f` returns the loss and the kink pattern
/// of the forward pass; entries whose two probes see different patterns are
/// skipped because the difference quotient is meaningless there.
pub fn grad_check<F>(
    params: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    options: GradCheckOptions,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>]) -> Result<(f64, Vec<bool>)>,
{
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters against {} gradients",
            params.len(),
            analytic.len()
        )));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheckReport::default();
    let h = options.step;
    for t in 0..params.len() {
        if params[t].shape() != analytic[t].shape() {
            return Err(Error::Shape(format!(
                "parameter {t}: {:?} against gradient {:?}",
                params[t].shape(),
                analytic[t].shape()
            )));
        }
        let n = params[t].len();
        let stride = n.div_ceil(options.max_per_tensor.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let orig = params[t].data()[i];
            probe[t].data_mut()[i] = orig + h;
            let (plus, kp) = f(&probe)?;
            probe[t].data_mut()[i] = orig - h;
            let (minus, km) = f(&probe)?;
            probe[t].data_mut()[i] = orig;
            if kp != km {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[t].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(options.floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((t, i));
            }
        }
    }
    Ok(report)
}
