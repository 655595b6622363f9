//! Variational Bayes for probit ridge regression with auxiliary variables
//! `a ~ N(η, 1)`, carried out in sample space.
//!
//! With `H = Γ(I + Γ)⁻¹` the updates are `μ_η = H μ_a` and
//! `μ_a = μ_η + φ(μ_η)/Φ(μ_η)` (label 1) or `μ_η - φ(μ_η)/(1 - Φ(μ_η))`
//! (label 0).

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RidgeError};
use crate::family::PROB_CLAMP;
use crate::hat::hat_matrix;
use crate::linalg::{self, Factor};
use crate::normal;
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbControl {
    /// Convergence when `max |Δμ_a| < tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for VbControl {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct VbState {
    pub mu_a: DVector<f64>,
    pub mu_eta: DVector<f64>,
    /// `H`, also the posterior covariance of `η`.
    pub hat: DMatrix<f64>,
    pub elbo: f64,
    /// Elbo at every iteration, in order.
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_labels(y: &DVector<f64>) -> Result<()> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(RidgeError::Response("probit labels must be 0 or 1".into()));
    }
    Ok(())
}

/// One `μ_a` update from `μ_η`.
pub fn update_mu_a(mu_eta: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mu_eta.len(), |i, _| {
        let m = mu_eta[i];
        if y[i] == 1.0 {
            m + normal::mills_ratio(m)
        } else {
            m - normal::mills_ratio(-m)
        }
    })
}

/// `yᵀ log Φ(μ_η) + (1-y)ᵀ log(1-Φ(μ_η)) - ½ μ_aᵀ H (I-H) μ_a - ½ log det(Γ+I)`.
pub fn elbo(mu_a: &DVector<f64>, hat: &DMatrix<f64>, logdet: f64, y: &DVector<f64>) -> f64 {
    let mu_eta = hat * mu_a;
    let ll: f64 = mu_eta
        .iter()
        .zip(y.iter())
        .map(|(&m, &yi)| {
            let p = normal::cdf(m).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
        })
        .sum();
    let quad = mu_a.dot(&(hat * (mu_a - &mu_eta)));
    ll - 0.5 * quad - 0.5 * logdet
}

/// `log det(Γ + I)`.
pub fn logdet_gamma_plus_identity(gamma: &DMatrix<f64>) -> Result<f64> {
    let n = gamma.nrows();
    Ok(Factor::spd(gamma + DMatrix::identity(n, n))?.log_abs_det())
}

pub fn vb_fit(gamma: &DMatrix<f64>, y: &DVector<f64>, ctrl: &VbControl) -> Result<VbState> {
    check_labels(y)?;
    let n = y.len();
    let hat = hat_matrix(gamma, &DVector::from_element(n, 1.0))?.h;
    let logdet = logdet_gamma_plus_identity(gamma)?;
    let mut mu_a = y.map(|v| 2.0 * v - 1.0);
    let mut elbo_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < ctrl.max_iter {
        iterations += 1;
        elbo_trace.push(elbo(&mu_a, &hat, logdet, y));
        let mu_eta = &hat * &mu_a;
        let next = update_mu_a(&mu_eta, y);
        let delta = (&next - &mu_a).amax();
        mu_a = next;
        if delta < ctrl.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("vb did not converge in {} iterations", ctrl.max_iter);
    }
    let e = elbo(&mu_a, &hat, logdet, y);
    elbo_trace.push(e);
    Ok(VbState { mu_eta: &hat * &mu_a, mu_a, hat, elbo: e, elbo_trace, iterations, converged })
}

/// Gaussian predictive `N(m_i, s_i²)` of held-out linear predictors given a
/// fit on the training samples: `m = Γ_oi (I + Γ_ii)⁻¹ μ_a`,
/// `s² = diag(Γ_oo - Γ_oi (I + Γ_ii)⁻¹ Γ_io)`.
pub fn predictive(
    gamma: &DMatrix<f64>,
    train: &[usize],
    test: &[usize],
    mu_a: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let g_ii = linalg::select(gamma, train, train)?;
    let g_oi = linalg::select(gamma, test, train)?;
    let f = Factor::spd(g_ii + DMatrix::identity(train.len(), train.len()))?;
    let mean = &g_oi * f.solve_vec(mu_a);
    let sol = f.solve(&g_oi.transpose());
    let var = DVector::from_fn(test.len(), |j, _| {
        let prior = gamma[(test[j], test[j])];
        (prior - g_oi.row(j).dot(&sol.column(j).transpose())).max(0.0)
    });
    Ok((mean, var))
}

/// `∫ π(y | η) N(η; m, s²) dη` by adaptive quadrature over `m ± 8s`; the
/// flag is false when the quadrature missed its tolerance.
pub fn predictive_ordinate(y: f64, mean: f64, var: f64, tol: f64) -> (f64, bool) {
    let sd = var.sqrt();
    let lik = |eta: f64| if y == 1.0 { normal::cdf(eta) } else { normal::cdf(-eta) };
    if sd < 1e-12 {
        return (lik(mean), true);
    }
    let q = quadrature::integrate(|z| lik(mean + sd * z) * normal::pdf(z), -8.0, 8.0, tol, 200);
    (q.value, q.converged)
}
