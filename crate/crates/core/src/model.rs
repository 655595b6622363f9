//! A design + response pair with its Grams, fitted models, coefficient
//! recovery and prediction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::design::BlockedDesign;
use crate::error::{Result, RidgeError};
use crate::family::{self, Family, Response};
use crate::gram::{precompute_grams, GramSet};
use crate::iwls::{iwls_fit, FitState, IwlsControl};
use crate::kernel::GramKernel;
use crate::penalty::PenaltyConfig;

/// Everything needed to evaluate penalties: the design, its Grams (computed
/// once) and the response. Cheap to clone and share across threads.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    pub design: Arc<BlockedDesign>,
    pub grams: Arc<GramSet>,
    pub response: Arc<Response>,
}

impl RidgeProblem {
    pub fn new(design: BlockedDesign, response: Response) -> Result<Self> {
        Self::with_kernels(design, response, None)
    }

    pub fn with_kernels(
        design: BlockedDesign,
        response: Response,
        kernels: Option<Vec<Arc<dyn GramKernel>>>,
    ) -> Result<Self> {
        if design.n() != response.n() {
            return Err(RidgeError::Dimension(format!(
                "design has {} samples, response {}",
                design.n(),
                response.n()
            )));
        }
        response.validate()?;
        let grams = precompute_grams(&design, kernels)?;
        Ok(Self { design: Arc::new(design), grams: Arc::new(grams), response: Arc::new(response) })
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn family(&self) -> Family {
        self.response.family
    }

    pub fn gamma(&self, penalties: &PenaltyConfig) -> Result<DMatrix<f64>> {
        self.grams.assemble_gamma(penalties)
    }

    pub fn fit(&self, penalties: &PenaltyConfig, ctrl: &IwlsControl) -> Result<FittedModel> {
        let gamma = self.gamma(penalties)?;
        let state = iwls_fit(&gamma, self.design.unpenalized(), &self.response, ctrl)?;
        Ok(FittedModel {
            penalties: penalties.clone(),
            state,
            design: self.design.clone(),
            grams: self.grams.clone(),
        })
    }

    /// The same problem restricted to samples `idx`, Grams sliced rather than
    /// recomputed.
    pub fn select_samples(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            design: Arc::new(self.design.select_samples(idx)?),
            grams: Arc::new(self.grams.select_samples(idx)?),
            response: Arc::new(self.response.select(idx)?),
        })
    }

    /// Keep only the listed penalized blocks (unpenalized covariates stay).
    pub fn select_blocks(&self, keep: &[usize]) -> Result<Self> {
        Ok(Self {
            design: Arc::new(self.design.select_blocks(keep)?),
            grams: Arc::new(self.grams.select_blocks(keep)?),
            response: self.response.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub penalties: PenaltyConfig,
    pub state: FitState,
    pub design: Arc<BlockedDesign>,
    pub grams: Arc<GramSet>,
}

impl FittedModel {
    pub fn coefficients(&self) -> Result<DVector<f64>> {
        recover_coefficients(&self.state, &self.design, &self.grams, &self.penalties)
    }

    /// Linear predictors for new samples (offset not included).
    pub fn predict(&self, new_blocks: &[DMatrix<f64>], new_unpen: Option<&DMatrix<f64>>) -> Result<DVector<f64>> {
        predict_new(&self.state, &self.design, &self.grams, &self.penalties, new_blocks, new_unpen)
    }
}

/// Response-scale mean for linear predictors: identity, expit, or the
/// relative risk `exp(η)` for Cox.
pub fn mean_response(family: Family, eta: &DVector<f64>) -> DVector<f64> {
    match family {
        Family::Linear => eta.clone(),
        Family::Logistic => eta.map(family::expit),
        Family::Cox => eta.map(f64::exp),
    }
}

/// `β̂ = [b; Λ⁻¹ X₂ᵀ u]` with `(b, u) = (K L, M L)`, unpenalized
/// coefficients first and blocks in design order.
pub fn recover_coefficients(
    fit: &FitState,
    design: &BlockedDesign,
    grams: &GramSet,
    penalties: &PenaltyConfig,
) -> Result<DVector<f64>> {
    if !fit.converged {
        return Err(RidgeError::NotConverged("cannot recover coefficients from a non-converged fit".into()));
    }
    if grams.kernels().iter().any(|k| !k.is_linear()) {
        return Err(RidgeError::Unsupported("coefficients exist only for linear-kernel blocks".into()));
    }
    penalties.validate()?;
    if penalties.num_blocks() != design.num_blocks() || fit.dual.len() != design.n() {
        return Err(RidgeError::Dimension("fit, design and penalties disagree".into()));
    }
    let p1 = design.unpenalized_cols();
    let mut beta = DVector::zeros(p1 + design.penalized_cols());
    beta.rows_mut(0, p1).copy_from(&fit.beta_unpen);
    let projected: Vec<DVector<f64>> = design.blocks().iter().map(|x| x.tr_mul(&fit.dual)).collect();
    let mut coefs: Vec<DVector<f64>> = projected.iter().zip(&penalties.lambdas).map(|(z, l)| z / *l).collect();
    if let (Some(p), Some((w1, w2, w3))) = (penalties.paired, penalties.paired_omega()) {
        coefs[p.first] = &projected[p.first] * w1 + &projected[p.second] * w3;
        coefs[p.second] = &projected[p.first] * w3 + &projected[p.second] * w2;
    }
    let mut off = p1;
    for c in coefs {
        beta.rows_mut(off, c.len()).copy_from(&c);
        off += c.len();
    }
    Ok(beta)
}

/// `η_new = X₁^new b + Γ^new u`, i.e. `H^new L` from the stored factors.
pub fn predict_new(
    fit: &FitState,
    design: &BlockedDesign,
    grams: &GramSet,
    penalties: &PenaltyConfig,
    new_blocks: &[DMatrix<f64>],
    new_unpen: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    let gamma_new = grams.assemble_cross_gamma(design, new_blocks, penalties)?;
    let mut eta = &gamma_new * &fit.dual;
    let p1 = fit.beta_unpen.len();
    if p1 > 0 {
        let x1 = new_unpen.ok_or_else(|| {
            RidgeError::Dimension("model has unpenalized covariates; new data must supply them".into())
        })?;
        if x1.ncols() != p1 || x1.nrows() != eta.len() {
            return Err(RidgeError::Dimension(format!(
                "new unpenalized block is {}x{}, expected {}x{p1}",
                x1.nrows(),
                x1.ncols(),
                eta.len()
            )));
        }
        eta += x1 * &fit.beta_unpen;
    }
    Ok(eta)
}

/// `X_new β̂` with `β̂` laid out as by [`recover_coefficients`].
pub fn linear_predictor(
    beta: &DVector<f64>,
    new_blocks: &[DMatrix<f64>],
    new_unpen: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    let m = new_blocks
        .first()
        .map(|x| x.nrows())
        .or(new_unpen.map(|x| x.nrows()))
        .ok_or_else(|| RidgeError::Dimension("no new data".into()))?;
    let p1 = new_unpen.map_or(0, |x| x.ncols());
    let p: usize = p1 + new_blocks.iter().map(|x| x.ncols()).sum::<usize>();
    if p != beta.len() {
        return Err(RidgeError::Dimension(format!("new data has {p} columns, coefficients {}", beta.len())));
    }
    let mut eta = DVector::zeros(m);
    let mut off = 0;
    if let Some(x1) = new_unpen {
        eta += x1 * beta.rows(0, p1);
        off = p1;
    }
    for x in new_blocks {
        if x.nrows() != m {
            return Err(RidgeError::Dimension("new blocks differ in row count".into()));
        }
        eta += x * beta.rows(off, x.ncols());
        off += x.ncols();
    }
    Ok(eta)
}
