//! Laplace approximation of the marginal likelihood in linear-predictor
//! space, where the prior is `η ~ N(0, Γ)`.
//!
//! The mode is found by the ordinary IWLS with identity design and penalty
//! `Γ⁻¹`; in the dual form `η = Γu` that penalty is `½ uᵀΓu`, so `Γ` is never
//! inverted and singular `Γ` needs no special treatment.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RidgeError};
use crate::family::{self, Family, Response};
use crate::iwls::{iwls_fit, IwlsControl};
use crate::linalg::{self, Factor};

#[derive(Debug, Clone)]
pub struct LaplaceMlState {
    pub eta_mode: DVector<f64>,
    /// Dual vector at the mode, `η̂ = (Γ + εI) u`.
    pub dual: DVector<f64>,
    pub log_ml: f64,
    /// `ε` added to the diagonal of `Γ` (zero unless requested).
    pub jitter: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MlControl {
    pub iwls: IwlsControl,
    /// Add `1e-8·trace(Γ)/n` to the diagonal when a Cholesky factor of `Γ`
    /// does not exist.
    pub jitter_if_singular: bool,
}

/// `ℓ(η̂) - ½ η̂ᵀΓ⁻¹η̂ - ½ log det(I + Γ W(η̂))`.
pub fn laplace_log_ml(gamma: &DMatrix<f64>, response: &Response, ctrl: &MlControl) -> Result<LaplaceMlState> {
    let n = response.n();
    let mut jitter = 0.0;
    let mut g = gamma.clone();
    if ctrl.jitter_if_singular && gamma.clone().cholesky().is_none() {
        jitter = 1e-8 * gamma.trace() / n as f64;
        for i in 0..n {
            g[(i, i)] += jitter;
        }
        log::warn!("marginal likelihood: jitter {jitter:e} added to a singular gamma");
    }
    let fit = iwls_fit(&g, None, response, &ctrl.iwls)?;
    if !fit.converged {
        return Err(RidgeError::NotConverged(format!(
            "posterior mode search stopped after {} iterations",
            fit.iterations
        )));
    }
    let weights = match response.family {
        Family::Linear => DVector::from_element(n, 1.0),
        _ => family::family_moments(&fit.eta, response)?.weight,
    };
    let s = weights.map(|w| w.max(crate::hat::WEIGHT_FLOOR).sqrt());
    let a = DMatrix::identity(n, n) + linalg::scale_cols(&linalg::scale_rows(&g, &s), &s);
    let logdet = Factor::spd(a)?.log_abs_det();
    let ll = family::loglik(&fit.eta, response, None)?;
    let penalty = fit.dual.dot(&(&g * &fit.dual));
    Ok(LaplaceMlState {
        log_ml: ll - 0.5 * penalty - 0.5 * logdet,
        eta_mode: fit.eta,
        dual: fit.dual,
        jitter,
        iterations: fit.iterations,
    })
}

/// `log N(y - η₀; 0, I + Γ)`, the exact evidence of the linear model.
pub fn gaussian_evidence(gamma: &DMatrix<f64>, response: &Response) -> Result<f64> {
    if response.family != Family::Linear {
        return Err(RidgeError::Unsupported("closed-form evidence needs a linear response".into()));
    }
    let n = response.n();
    let y = match &response.offset {
        Some(o) => &response.y - o,
        None => response.y.clone(),
    };
    let f = Factor::spd(DMatrix::identity(n, n) + gamma)?;
    let quad = y.dot(&f.solve_vec(&y));
    Ok(-0.5 * quad - 0.5 * f.log_abs_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}
