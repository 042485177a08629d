use alloc::vec::Vec;

use super::{compute_loss, LossKind, Network};
use crate::{Result, RngState, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

// Dropout masks are regenerated from this seed on every evaluation so the
// finite differences see the same mask as the analytic pass.
const MASK_SEED: u64 = 0x6772_6164;

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing gradients from
/// turning rounding noise into large ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over every parameter entry.
    pub max_param_error: f64,
    /// Worst relative error over every input entry.
    pub max_input_error: f64,
    pub checked_params: usize,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_param_error.max(self.max_input_error)
    }
}

fn loss_of(net: &Network, x: &Tensor, target: &Tensor, kind: LossKind) -> Result<f64> {
    let mut rng = RngState::new(MASK_SEED);
    let (y, _) = net.forward(x, Some(&mut rng))?;
    Ok(compute_loss(kind, &y, target)?.0)
}

/// Compares backpropagated gradients with central finite differences for
/// every parameter and every input entry.
pub fn grad_check_report(net: &Network, x: &Tensor, target: &Tensor, kind: LossKind) -> Result<GradCheckReport> {
    let mut rng = RngState::new(MASK_SEED);
    let (y, cache) = net.forward(x, Some(&mut rng))?;
    let (_, dy) = compute_loss(kind, &y, target)?;
    let (grads, dx) = net.backward(&cache, &dy)?;
    let analytic: Vec<Tensor> = grads.flatten();

    let mut report = GradCheckReport::default();
    let mut probe = net.clone();
    let n_params = analytic.len();
    for p in 0..n_params {
        for i in 0..analytic[p].len() {
            let orig = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = orig + FD_STEP;
            let plus = loss_of(&probe, x, target, kind)?;
            probe.params_mut()[p].data_mut()[i] = orig - FD_STEP;
            let minus = loss_of(&probe, x, target, kind)?;
            probe.params_mut()[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(analytic[p].data()[i], numeric);
            report.max_param_error = report.max_param_error.max(err);
            report.checked_params += 1;
        }
    }

    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + FD_STEP;
        let plus = loss_of(net, &xp, target, kind)?;
        xp.data_mut()[i] = orig - FD_STEP;
        let minus = loss_of(net, &xp, target, kind)?;
        xp.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        report.max_input_error = report.max_input_error.max(relative_error(dx.data()[i], numeric));
    }
    Ok(report)
}

/// Worst relative error between analytic and finite-difference gradients.
pub fn grad_check(net: &Network, x: &Tensor, target: &Tensor, kind: LossKind) -> Result<f64> {
    Ok(grad_check_report(net, x, target, kind)?.worst())
}
