use crate::Result;

use super::{backward, forward, Grads, MlpParams};

/// Maps a network output to `(loss, d loss / d output)`.
pub type LossFn<'a> = &'a dyn Fn(&[f64]) -> (f64, Vec<f64>);
/// Signature of [`backward`]; swappable so the check itself can be tested.
pub type BackwardFn = fn(&MlpParams, &[f64], &[f64]) -> Result<Grads>;

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Max relative error between [`backward`] and central differences.
pub fn finite_difference_check(params: &MlpParams, input: &[f64], loss_fn: LossFn<'_>, epsilon: f64) -> Result<f64> {
    finite_difference_check_with(params, input, loss_fn, epsilon, backward)
}

pub fn finite_difference_check_with(
    params: &MlpParams,
    input: &[f64],
    loss_fn: LossFn<'_>,
    epsilon: f64,
    backward_fn: BackwardFn,
) -> Result<f64> {
    let out = forward(params, input)?;
    let (_, dout) = loss_fn(&out);
    let analytic = backward_fn(params, input, &dout)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + epsilon;
        let up = loss_fn(&forward(&probe, input)?).0;
        probe.data[i] = orig - epsilon;
        let down = loss_fn(&forward(&probe, input)?).0;
        probe.data[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic.data[i], numeric));
    }
    Ok(worst)
}
