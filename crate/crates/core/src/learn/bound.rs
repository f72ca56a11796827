use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs to the sign-descent convergence bound.
///
/// `n_rounds` counts communication rounds; it is unrelated to the IDFT size
/// of the waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Per-coordinate smoothness constants.
    pub l_vec: Vec<f64>,
    /// Per-coordinate gradient noise deviations.
    pub sigma_vec: Vec<f64>,
    /// Optimal loss value.
    pub f_star: f64,
    pub gamma: f64,
    /// Number of devices.
    pub devices: usize,
    /// Effective SNR `E_s / ((1 + M_g)·σ_n²)`.
    pub xi: f64,
    pub n_rounds: usize,
    /// Loss at the initial parameters.
    pub initial_loss: f64,
}

/// Noise penalty factor `a = (1 + 2/(ξK)) / √γ`.
pub fn noise_penalty(p: &BoundParams) -> Result<f64> {
    validate(p)?;
    let xi_k = p.xi * p.devices as f64;
    let penalty = if xi_k.is_infinite() { 0.0 } else { 2.0 / xi_k };
    Ok((1.0 + penalty) / p.gamma.sqrt())
}

fn validate(p: &BoundParams) -> Result<()> {
    if !(p.xi > 0.0) {
        return Err(Error::Domain(format!(
            "effective SNR must be positive, got {}",
            p.xi
        )));
    }
    if p.devices == 0 {
        return Err(Error::Domain("bound needs at least one device".into()));
    }
    if !(p.gamma > 0.0 && p.gamma.is_finite()) {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {}",
            p.gamma
        )));
    }
    if p.n_rounds == 0 {
        return Err(Error::Domain("bound needs at least one round".into()));
    }
    if p.l_vec.iter().chain(&p.sigma_vec).any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain(
            "L and sigma entries must be non-negative".into(),
        ));
    }
    Ok(())
}

/// Upper bound on the average expected gradient norm after `n_rounds` rounds:
/// `(a·√‖L‖₁·(F(w⁰) − F* + γ/2) + (2√(2γ)/3)·‖σ‖₁) / √N`.
pub fn convergence_bound(p: &BoundParams) -> Result<f64> {
    let a = noise_penalty(p)?;
    let l1: f64 = p.l_vec.iter().sum();
    let s1: f64 = p.sigma_vec.iter().sum();
    let first = a * l1.sqrt() * (p.initial_loss - p.f_star + p.gamma / 2.0);
    let second = 2.0 * (2.0 * p.gamma).sqrt() / 3.0 * s1;
    Ok((first + second) / (p.n_rounds as f64).sqrt())
}

/// Learning rate `1/√(‖L‖₁·n_b)`.
pub fn default_learning_rate(l_norm1: f64, batch_size: usize) -> Result<f64> {
    if !(l_norm1 > 0.0) || batch_size == 0 {
        return Err(Error::Domain("need positive ‖L‖₁ and batch size".into()));
    }
    Ok(1.0 / (l_norm1 * batch_size as f64).sqrt())
}
