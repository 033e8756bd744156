//! Central-difference gradient checking.

use crate::error::{AutodiffError, Result};
use crate::tape::Tape;
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares the tape gradient of a scalar function against
/// `(f(x + εeᵢ) − f(x − εeᵢ)) / 2ε` for every coordinate of `x`.
///
/// `f` receives the tape it must record on and its input; during the
/// numeric pass the input is a constant, so nothing is recorded.
pub fn grad_check<F>(f: F, x: &Tensor, epsilon: f64) -> Result<GradCheck>
where
    F: Fn(&Tape, &Tensor) -> Result<Tensor>,
{
    let tape = Tape::new();
    let leaf = tape.leaf(x.detach());
    let loss = f(&tape, &leaf)?;
    if loss.numel() != 1 {
        return Err(AutodiffError::NotScalar {
            shape: loss.shape().to_vec(),
        });
    }
    let analytic = if loss.requires_grad() {
        tape.backward(&loss)?;
        tape.grad(&leaf).unwrap_or_else(|| vec![0.0; x.numel()])
    } else {
        vec![0.0; x.numel()]
    };

    let eval = |values: Vec<f64>| -> Result<f64> {
        let probe = Tensor::new(x.shape(), values)?;
        f(&Tape::new(), &probe)?.item()
    };
    let base = x.to_vec();
    let mut numeric = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += epsilon;
        let mut minus = base.clone();
        minus[i] -= epsilon;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * epsilon));
    }
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradCheck {
        max_rel_error,
        analytic,
        numeric,
    })
}
