//! Starting penalties: one penalty per block from that block alone.
//!
//! For cross-validation the single-block fits run in the `r`-dimensional
//! coordinates of a factorization `X_b = R Vᵀ` (`r ≤ n`), computed once and
//! reused for every fold and every candidate `λ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cv::{combine_folds, fold_cvl, FoldOutcome, FoldPlan, Utility};
use crate::error::{Result, RidgeError};
use crate::family::{self, Family, Response};
use crate::iwls::IwlsControl;
use crate::linalg::{self, Factor};
use crate::model::RidgeProblem;
use crate::optim::grid_then_brent;
use crate::penalty::{PairedParametrization, PenaltyConfig};
use crate::tune::{Objective, ProblemObjective, TuneMethod, TunerConfig};

/// Absolute tolerance (in log λ) of the Brent refinement after the grid.
pub const INIT_XTOL: f64 = 1e-9;
const INIT_BRENT_EVALS: usize = 100;

/// `X_b = R Vᵀ` with `R = U D` (n×r) and orthonormal `V` (p_b×r).
#[derive(Debug, Clone)]
pub struct SvdCache {
    pub r: DMatrix<f64>,
    pub v: Option<DMatrix<f64>>,
    pub d: DVector<f64>,
}

impl SvdCache {
    /// Thin SVD of the block, singular values below `1e-10·max` dropped.
    pub fn from_block(x: &DMatrix<f64>) -> Result<Self> {
        let svd = x.clone().svd(true, true);
        let u = svd.u.ok_or(RidgeError::Singular { condition: f64::INFINITY })?;
        let vt = svd.v_t.ok_or(RidgeError::Singular { condition: f64::INFINITY })?;
        let dmax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > 1e-10 * dmax)
            .collect();
        let d = DVector::from_fn(keep.len(), |i, _| svd.singular_values[keep[i]]);
        let r = DMatrix::from_fn(x.nrows(), keep.len(), |i, j| u[(i, keep[j])] * d[j]);
        let v = DMatrix::from_fn(x.ncols(), keep.len(), |i, j| vt[(keep[j], i)]);
        Ok(Self { r, v: Some(v), d })
    }

    /// From a Gram matrix alone (kernel blocks): `Σ = U Λ Uᵀ`, `R = U Λ^{1/2}`.
    pub fn from_gram(sigma: &DMatrix<f64>) -> Result<Self> {
        let eig = sigma.clone().symmetric_eigen();
        let emax = eig.eigenvalues.max();
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > 1e-10 * emax.max(0.0))
            .collect();
        let d = DVector::from_fn(keep.len(), |i, _| eig.eigenvalues[keep[i]].sqrt());
        let r = DMatrix::from_fn(sigma.nrows(), keep.len(), |i, j| eig.eigenvectors[(i, keep[j])] * d[j]);
        Ok(Self { r, v: None, d })
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }
}

/// Every column constant across samples.
pub fn is_constant_block(x: &DMatrix<f64>) -> bool {
    x.column_iter().all(|c| c.iter().all(|&v| v == c[0]))
}

/// Penalized IWLS in coefficient space with design `Z` and diagonal penalty
/// `pen` (zeros for unpenalized columns). Returns `(β, η, converged)`.
pub fn beta_space_fit(
    z: &DMatrix<f64>,
    pen: &DVector<f64>,
    response: &Response,
    ctrl: &IwlsControl,
) -> Result<(DVector<f64>, DVector<f64>, bool)> {
    let q = z.ncols();
    let mut beta = DVector::zeros(q);
    if response.family == Family::Logistic {
        let constant = (0..q).find(|&j| pen[j] == 0.0 && z[(0, j)] != 0.0 && z.column(j).iter().all(|&v| v == z[(0, j)]));
        if let Some(j) = constant {
            let ybar = response.y.mean().clamp(family::PROB_CLAMP, 1.0 - family::PROB_CLAMP);
            beta[j] = family::logit(ybar) / z[(0, j)];
        }
    }
    let mut eta = z * &beta;
    let pen_loglik = |eta: &DVector<f64>, beta: &DVector<f64>| -> Result<f64> {
        let quad: f64 = beta.iter().zip(pen.iter()).map(|(b, p)| p * b * b).sum();
        Ok(family::loglik(eta, response, None)? - 0.5 * quad)
    };
    let mut pl = pen_loglik(&eta, &beta)?;
    for _ in 0..ctrl.max_iter {
        let mom = family::family_moments(&eta, response)?;
        let w = mom.weight.map(|v| v.max(crate::hat::WEIGHT_FLOOR));
        let l = &mom.centered + mom.weight.component_mul(&eta);
        let mut a = z.tr_mul(&linalg::scale_rows(z, &w));
        for j in 0..q {
            a[(j, j)] += pen[j];
        }
        let mut beta_new = Factor::spd(a)?.solve_vec(&z.tr_mul(&l));
        let mut eta_new = z * &beta_new;
        if response.family == Family::Linear {
            return Ok((beta_new, eta_new, true));
        }
        let mut pl_new = pen_loglik(&eta_new, &beta_new)?;
        if ctrl.step_halving {
            let mut k = 0;
            while !(pl_new >= pl - 1e-10 * (1.0 + pl.abs())) && k < ctrl.max_halvings {
                k += 1;
                beta_new = &beta + (&beta_new - &beta) * 0.5;
                eta_new = &eta + (&eta_new - &eta) * 0.5;
                pl_new = pen_loglik(&eta_new, &beta_new)?;
            }
        }
        let amax = eta_new.amax();
        if !amax.is_finite() || amax > ctrl.divergence_bound {
            return Err(RidgeError::Diverged(amax));
        }
        let delta = (&eta_new - &eta).amax();
        beta = beta_new;
        eta = eta_new;
        pl = pl_new;
        if delta < ctrl.tol {
            return Ok((beta, eta, true));
        }
    }
    Ok((beta, eta, false))
}

fn svd_fold(
    z: &DMatrix<f64>,
    pen: &DVector<f64>,
    response: &Response,
    split: &crate::cv::Split,
    ctrl: &IwlsControl,
) -> Result<FoldOutcome> {
    let z_in = linalg::select_rows(z, &split.train)?;
    let resp_in = response.select(&split.train)?;
    let (beta, _, converged) = beta_space_fit(&z_in, pen, &resp_in, ctrl)?;
    let eta_test = linalg::select_rows(z, &split.test)? * &beta;
    let eta_all = (response.family == Family::Cox).then(|| z * &beta);
    let cvl = fold_cvl(response, split, &eta_test, eta_all.as_ref())?;
    Ok(FoldOutcome { test: split.test.clone(), eta_test, cvl, converged })
}

/// Single-block cross-validated utility at penalty `λ`, computed in the
/// coordinates `[X₁ | R]`.
pub fn cv_utility_svd(
    cache: &SvdCache,
    unpen: Option<&DMatrix<f64>>,
    response: &Response,
    plan: &FoldPlan,
    utility: &Utility,
    lambda: f64,
    ctrl: &IwlsControl,
) -> Result<f64> {
    let n = response.n();
    let p1 = unpen.map_or(0, |x| x.ncols());
    let r = cache.rank();
    let mut z = DMatrix::zeros(n, p1 + r);
    if let Some(x1) = unpen {
        z.columns_mut(0, p1).copy_from(x1);
    }
    z.columns_mut(p1, r).copy_from(&cache.r);
    let pen = DVector::from_fn(p1 + r, |j, _| if j < p1 { 0.0 } else { lambda });
    let mut total = 0.0;
    for rep in 0..plan.repeats {
        let splits = plan.splits(rep);
        let outcomes: Vec<Result<FoldOutcome>> =
            splits.par_iter().map(|s| svd_fold(&z, &pen, response, s, ctrl)).collect();
        total += combine_folds(utility, response, &outcomes)?;
    }
    Ok(total / plan.repeats as f64)
}

fn maximize_log_lambda(cfg: &TunerConfig, mut f: impl FnMut(f64) -> f64) -> f64 {
    let (x, _) = grid_then_brent(&mut f, cfg.lower, cfg.upper, INIT_XTOL, INIT_BRENT_EVALS);
    x.exp()
}

/// Single-block CV optimum via the factorization: log-grid over the bounds
/// with unit spacing, then Brent around the best grid point.
#[allow(clippy::too_many_arguments)]
pub fn init_uni_penalty(
    cache: &SvdCache,
    unpen: Option<&DMatrix<f64>>,
    response: &Response,
    plan: &FoldPlan,
    utility: &Utility,
    cfg: &TunerConfig,
    ctrl: &IwlsControl,
) -> Result<f64> {
    if cache.rank() == 0 {
        return Err(RidgeError::ConstantBlock("block has rank zero".into()));
    }
    Ok(maximize_log_lambda(cfg, |t| {
        cv_utility_svd(cache, unpen, response, plan, utility, t.exp(), ctrl).unwrap_or(f64::NEG_INFINITY)
    }))
}

/// The same search on the sample-space path (`Γ = Σ_b / λ`), for checking.
pub fn init_uni_penalty_direct(
    problem: &RidgeProblem,
    block: usize,
    method: &TuneMethod,
    cfg: &TunerConfig,
    ctrl: &IwlsControl,
) -> Result<f64> {
    let single = problem.select_blocks(&[block])?;
    let objective = ProblemObjective { problem: &single, method, iwls: *ctrl };
    Ok(maximize_log_lambda(cfg, |t| match PenaltyConfig::new(vec![t.exp()]) {
        Ok(p) => objective.evaluate(&p),
        Err(_) => f64::NEG_INFINITY,
    }))
}

/// One starting penalty for each listed block. Constant blocks get the upper
/// bound (they cannot be fitted on their own).
pub fn block_penalties(
    problem: &RidgeProblem,
    method: &TuneMethod,
    cfg: &TunerConfig,
    ctrl: &IwlsControl,
    blocks: &[usize],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(blocks.len());
    for &b in blocks {
        let name = &problem.design.names()[b];
        let x = problem.design.block(b);
        let linear = problem.grams.kernels()[b].is_linear();
        if linear && is_constant_block(x) {
            log::warn!("block {name} is constant; starting its penalty at the upper bound");
            out.push(cfg.upper.exp());
            continue;
        }
        let lambda = match method {
            TuneMethod::Cv { plan, utility } => {
                let cache = if linear {
                    SvdCache::from_block(x)?
                } else {
                    SvdCache::from_gram(&problem.grams.sigmas()[b])?
                };
                match init_uni_penalty(&cache, problem.design.unpenalized(), &problem.response, plan, utility, cfg, ctrl)
                {
                    Ok(l) => l,
                    Err(RidgeError::ConstantBlock(_)) => {
                        log::warn!("block {name} has rank zero; starting its penalty at the upper bound");
                        cfg.upper.exp()
                    }
                    Err(e) => return Err(e),
                }
            }
            _ => init_uni_penalty_direct(problem, b, method, cfg, ctrl)?,
        };
        log::debug!("initial penalty for block {name}: {lambda:e}");
        out.push(lambda);
    }
    Ok(out)
}

/// Turn the penalties of two blocks into the paired start `(λ̃₁, λ̃₂, c)`
/// in the scaled parametrization.
pub fn with_paired_start(init: PenaltyConfig, first: usize, second: usize, c: f64) -> Result<PenaltyConfig> {
    let t = (init.lambdas[first], init.lambdas[second], c);
    init.with_paired_triple(first, second, t, PairedParametrization::Scaled)
}

/// Per-block starting penalties for the whole problem.
pub fn initial_penalties(
    problem: &RidgeProblem,
    method: &TuneMethod,
    cfg: &TunerConfig,
    ctrl: &IwlsControl,
) -> Result<PenaltyConfig> {
    let all: Vec<usize> = (0..problem.design.num_blocks()).collect();
    let mut init = PenaltyConfig::new(block_penalties(problem, method, cfg, ctrl, &all)?)?;
    if let Some(pair) = problem.design.paired() {
        init = with_paired_start(init, pair.first, pair.second, cfg.paired_init)?;
    }
    Ok(init)
}
