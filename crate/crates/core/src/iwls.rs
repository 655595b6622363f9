//! Iterative weighted least squares carried out on the n-vector `η`.
//!
//! Each cycle computes moments at `η`, forms `L = C + Wη` and sets
//! `η ← H_{Λ,W} L`. The iterate is also tracked in its primal form
//! `η = X₁ b + Γ u` so the penalized log-likelihood (penalty `uᵀΓu`) and
//! step-halving need nothing beyond `Γ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RidgeError};
use crate::family::{self, BaselineHazard, Family, Response};
use crate::hat::{hat_matrix_unpenalized, HatFactors};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IwlsControl {
    /// Convergence when `max |Δη| < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// `max |η|` beyond this counts as divergence.
    pub divergence_bound: f64,
    /// Keep every accepted `η` in [`FitState::path`].
    pub record_path: bool,
    /// Disable step-halving (pure Newton).
    pub step_halving: bool,
}

impl Default for IwlsControl {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 10,
            divergence_bound: 1e6,
            record_path: false,
            step_halving: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitState {
    /// Linear predictor without the offset.
    pub eta: DVector<f64>,
    pub weights: DVector<f64>,
    pub linearized: DVector<f64>,
    pub hat: HatFactors,
    pub baseline: Option<BaselineHazard>,
    pub converged: bool,
    pub iterations: usize,
    pub penalized_loglik: f64,
    /// Coefficients of the unpenalized covariates.
    pub beta_unpen: DVector<f64>,
    /// `u` with penalized part of `η` equal to `Γ u`; `β_b = λ_b⁻¹ X_bᵀ u`.
    pub dual: DVector<f64>,
    pub halvings: usize,
    pub path: Vec<DVector<f64>>,
}

/// Penalized log-likelihood `ℓ(η) - ½ uᵀΓu`.
pub fn penalized_loglik(
    eta: &DVector<f64>,
    dual: &DVector<f64>,
    gamma: &DMatrix<f64>,
    response: &Response,
) -> Result<f64> {
    let ll = family::loglik(eta, response, None)?;
    Ok(ll - 0.5 * dual.dot(&(gamma * dual)))
}

fn constant_column(x1: &DMatrix<f64>) -> Option<usize> {
    (0..x1.ncols()).find(|&j| {
        let c = x1.column(j);
        c[0] != 0.0 && c.iter().all(|&v| v == c[0])
    })
}

/// Fit with penalized Gram `Γ` and optional unpenalized covariates `X₁`.
pub fn iwls_fit(
    gamma: &DMatrix<f64>,
    unpen: Option<&DMatrix<f64>>,
    response: &Response,
    ctrl: &IwlsControl,
) -> Result<FitState> {
    let n = response.n();
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(RidgeError::Dimension(format!(
            "gamma is {}x{} for {n} samples",
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    let unpen = unpen.filter(|x| x.ncols() > 0);
    let p1 = unpen.map_or(0, |x| x.ncols());
    if response.family == Family::Cox && response.num_events() == 0 {
        return Err(RidgeError::Response("cox fit needs at least one event".into()));
    }

    let mut eta = DVector::zeros(n);
    let mut b1 = DVector::zeros(p1);
    let mut u = DVector::zeros(n);
    if response.family == Family::Logistic {
        if let Some((x1, j)) = unpen.and_then(|x| constant_column(x).map(|j| (x, j))) {
            let ybar = response.y.mean().clamp(family::PROB_CLAMP, 1.0 - family::PROB_CLAMP);
            let b = family::logit(ybar) / x1[(0, j)];
            b1[j] = b;
            eta = x1.column(j) * b;
        }
    }
    let mut path = Vec::new();
    if ctrl.record_path {
        path.push(eta.clone());
    }
    let mut pl = if response.family == Family::Linear {
        f64::NEG_INFINITY
    } else {
        penalized_loglik(&eta, &u, gamma, response)?
    };

    let mut halvings = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut last = None;
    while iterations < ctrl.max_iter {
        iterations += 1;
        let mom = family::family_moments(&eta, response)?;
        let l = &mom.centered + mom.weight.component_mul(&eta);
        let hat = hat_matrix_unpenalized(gamma, &mom.weight, unpen)?;
        let mut b1_new = if p1 > 0 { &hat.k * &l } else { DVector::zeros(0) };
        let mut u_new = &hat.m * &l;
        let mut eta_new = gamma * &u_new;
        if let Some(x1) = unpen {
            eta_new += x1 * &b1_new;
        }

        if response.family == Family::Linear {
            eta = eta_new;
            b1 = b1_new;
            u = u_new;
            if ctrl.record_path {
                path.push(eta.clone());
            }
            pl = penalized_loglik(&eta, &u, gamma, response)?;
            converged = true;
            last = Some((mom, l, hat));
            break;
        }

        let mut pl_new = penalized_loglik(&eta_new, &u_new, gamma, response)?;
        if ctrl.step_halving {
            let mut t = 1.0;
            let mut k = 0;
            while !(pl_new >= pl - 1e-10 * (1.0 + pl.abs())) && k < ctrl.max_halvings {
                t *= 0.5;
                k += 1;
                b1_new = &b1 + (&b1_new - &b1) * 0.5;
                u_new = &u + (&u_new - &u) * 0.5;
                eta_new = &eta + (&eta_new - &eta) * 0.5;
                pl_new = penalized_loglik(&eta_new, &u_new, gamma, response)?;
            }
            if k > 0 {
                log::debug!("iwls iteration {iterations}: step halved {k} times (t = {t})");
                halvings += k;
            }
        }
        let amax = eta_new.amax();
        if !amax.is_finite() || amax > ctrl.divergence_bound {
            return Err(RidgeError::Diverged(amax));
        }
        let delta = (&eta_new - &eta).amax();
        eta = eta_new;
        b1 = b1_new;
        u = u_new;
        pl = pl_new;
        if ctrl.record_path {
            path.push(eta.clone());
        }
        last = Some((mom, l, hat));
        if delta < ctrl.tol {
            converged = true;
            break;
        }
    }
    let (mom, l, hat) = last.expect("at least one iteration");
    if !converged {
        log::warn!("iwls did not converge in {} iterations", ctrl.max_iter);
    }
    let baseline = if response.family == Family::Cox {
        Some(family::breslow(&eta, response)?)
    } else {
        None
    };
    Ok(FitState {
        eta,
        weights: mom.weight,
        linearized: l,
        hat,
        baseline,
        converged,
        iterations,
        penalized_loglik: pl,
        beta_unpen: b1,
        dual: u,
        halvings,
        path,
    })
}
