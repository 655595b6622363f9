//! Weighted multi-penalty hat matrices `H = X (Λ' + Xᵀ W X)⁻¹ Xᵀ` computed
//! from `Γ` alone.
//!
//! With `S = W^{1/2}` the Woodbury form `Γ - Γ (W⁻¹ + Γ)⁻¹ Γ` is evaluated as
//! `Γ - Γ S (I + S Γ S)⁻¹ S Γ`: the same matrix, but the system to factor has
//! eigenvalues ≥ 1 for PSD `Γ`.
//!
//! Alongside `H` we keep the factors `K` (p₁×n) and `M` (n×n) with
//! `H = X₁ K + Γ M`, which is all that prediction and coefficient recovery
//! need.

use nalgebra::{DMatrix, DVector};

use crate::design::dependent_columns;
use crate::error::{Result, RidgeError};
use crate::linalg::{self, Factor};

/// Weights below this are clamped before any `W^{-1/2}` appears.
pub const WEIGHT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct HatFactors {
    /// `H_{Λ,W}`.
    pub h: DMatrix<f64>,
    /// `K_{W,Λ}`; zero rows without unpenalized covariates.
    pub k: DMatrix<f64>,
    /// `M_{W,Λ}`.
    pub m: DMatrix<f64>,
    /// The (unweighted) penalized `Γ` used to build `H`.
    pub gamma: DMatrix<f64>,
}

impl HatFactors {
    /// `η = X₁ K L + Γ M L` for a linearized response `L`.
    pub fn apply(&self, unpen: Option<&DMatrix<f64>>, l: &DVector<f64>) -> DVector<f64> {
        let mut eta = &self.gamma * (&self.m * l);
        if let Some(x1) = unpen {
            if x1.ncols() > 0 {
                eta += x1 * (&self.k * l);
            }
        }
        eta
    }
}

fn sqrt_weights(weights: &DVector<f64>) -> Result<DVector<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(RidgeError::Dimension("weights must be finite and non-negative".into()));
    }
    Ok(weights.map(|w| w.max(WEIGHT_FLOOR).sqrt()))
}

fn check_square(gamma: &DMatrix<f64>, n: usize) -> Result<()> {
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(RidgeError::Dimension(format!(
            "gamma is {}x{}, weights have length {n}",
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    Ok(())
}

/// `H = Γ - Γ (W⁻¹ + Γ)⁻¹ Γ` for all-penalized designs.
pub fn hat_matrix(gamma: &DMatrix<f64>, weights: &DVector<f64>) -> Result<HatFactors> {
    let n = weights.len();
    check_square(gamma, n)?;
    let s = sqrt_weights(weights)?;
    let sgs = linalg::scale_cols(&linalg::scale_rows(gamma, &s), &s);
    let a = DMatrix::identity(n, n) + sgs;
    let factor = Factor::spd(a)?;
    // B = (I + SΓS)⁻¹ S Γ
    let b = factor.solve(&linalg::scale_rows(gamma, &s));
    let sb = linalg::scale_rows(&b, &s);
    let mut h = gamma - gamma * &sb;
    linalg::symmetrize(&mut h);
    let m = DMatrix::identity(n, n) - sb;
    Ok(HatFactors { h, k: DMatrix::zeros(0, n), m, gamma: gamma.clone() })
}

/// Hat matrix with unpenalized covariates `X₁` (full column rank), via the
/// projector `P = I - X₁W (X₁Wᵀ X₁W)⁻¹ X₁Wᵀ`, `X₁W = W^{1/2} X₁`.
///
/// `(I + P Γ_W)⁻¹ P` is evaluated as `P (I + P Γ_W P)⁻¹ P`, which equals it
/// for idempotent `P` and only needs a symmetric positive definite solve.
pub fn hat_matrix_unpenalized(
    gamma_pen: &DMatrix<f64>,
    weights: &DVector<f64>,
    unpen: Option<&DMatrix<f64>>,
) -> Result<HatFactors> {
    let x1 = match unpen {
        Some(x1) if x1.ncols() > 0 => x1,
        _ => return hat_matrix(gamma_pen, weights),
    };
    let n = weights.len();
    check_square(gamma_pen, n)?;
    if x1.nrows() != n {
        return Err(RidgeError::Dimension(format!(
            "unpenalized block has {} rows, expected {n}",
            x1.nrows()
        )));
    }
    let s = sqrt_weights(weights)?;
    let s_inv = s.map(|v| 1.0 / v);
    let x1w = linalg::scale_rows(x1, &s);
    let dependent = dependent_columns(&x1w);
    if !dependent.is_empty() {
        return Err(RidgeError::RankDeficient { columns: dependent });
    }
    let qr = x1w.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let p = DMatrix::identity(n, n) - &q * q.transpose();

    let gamma_w = linalg::scale_cols(&linalg::scale_rows(gamma_pen, &s), &s);
    let pgp = &p * &gamma_w * &p;
    let mut inner = DMatrix::identity(n, n) + pgp;
    linalg::symmetrize(&mut inner);
    let factor = Factor::spd(inner)?;
    let t = &p * factor.solve(&p);

    // M = S T S⁻¹, H₂ = Γ M
    let m = linalg::scale_cols(&linalg::scale_rows(&t, &s), &s_inv);
    let h2 = gamma_pen * &m;
    // K = R⁻¹ Qᵀ (I - S H₂ S) S⁻¹
    let sh2s = linalg::scale_cols(&linalg::scale_rows(&h2, &s), &s);
    let resid = linalg::scale_cols(&(DMatrix::identity(n, n) - sh2s), &s_inv);
    let k = r
        .solve_upper_triangular(&(q.transpose() * resid))
        .ok_or(RidgeError::RankDeficient { columns: Vec::new() })?;
    let h = x1 * &k + h2;
    Ok(HatFactors { h, k, m, gamma: gamma_pen.clone() })
}

/// Out-of-fold hat matrix
/// `Γ[out,in] - Γ[out,in] (W_in⁻¹ + Γ[in,in])⁻¹ Γ[in,in]`.
pub fn cv_hat_matrix(
    gamma: &DMatrix<f64>,
    weights_in: &DVector<f64>,
    in_idx: &[usize],
    out_idx: &[usize],
) -> Result<DMatrix<f64>> {
    if weights_in.len() != in_idx.len() {
        return Err(RidgeError::Dimension(format!(
            "{} weights for {} in-fold samples",
            weights_in.len(),
            in_idx.len()
        )));
    }
    let g_in = linalg::select(gamma, in_idx, in_idx)?;
    let g_out = linalg::select(gamma, out_idx, in_idx)?;
    if out_idx.is_empty() {
        return Ok(DMatrix::zeros(0, in_idx.len()));
    }
    let f = hat_matrix(&g_in, weights_in)?;
    Ok(g_out * f.m)
}

/// `H^new = X₁^new K + Γ^new M`.
pub fn prediction_hat(
    factors: &HatFactors,
    gamma_new: &DMatrix<f64>,
    unpen_new: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    if gamma_new.ncols() != factors.m.nrows() {
        return Err(RidgeError::Dimension(format!(
            "cross gamma has {} columns, fit has {} samples",
            gamma_new.ncols(),
            factors.m.nrows()
        )));
    }
    let mut h = gamma_new * &factors.m;
    if factors.k.nrows() > 0 {
        let x1 = unpen_new.ok_or_else(|| {
            RidgeError::Dimension("fit has unpenalized covariates; new data must supply them".into())
        })?;
        if x1.ncols() != factors.k.nrows() || x1.nrows() != gamma_new.nrows() {
            return Err(RidgeError::Dimension("new unpenalized block has the wrong shape".into()));
        }
        h += x1 * &factors.k;
    }
    Ok(h)
}
