//! Out-of-sample assessment: double cross-validation (tuning inside each
//! outer training set) and conditional predictive ordinates for the probit
//! model.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{evaluate_metric, make_folds, predict_rows, Criterion, FoldPlan};
use crate::error::{Result, RidgeError};
use crate::family::Family;
use crate::init;
use crate::iwls::{iwls_fit, IwlsControl};
use crate::linalg;
use crate::model::RidgeProblem;
use crate::penalty::PenaltyConfig;
use crate::tune::{tune_preferential, tune_problem, MethodSpec, TuneMethod, TunerConfig};
use crate::vb::{predictive, predictive_ordinate, vb_fit, VbControl};

#[derive(Debug, Clone)]
pub struct DoubleCvConfig {
    pub outer_k: usize,
    pub seed: u64,
    /// Metric reported on each outer test set.
    pub criterion: Criterion,
    pub method: MethodSpec,
    pub tuner: TunerConfig,
    pub preferred: Option<Vec<usize>>,
    /// Skip tuning and use these penalties in every split.
    pub fixed: Option<PenaltyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: usize,
    pub test: Vec<usize>,
    pub penalties: PenaltyConfig,
    /// `None` when the metric is undefined on this test set.
    pub metric: Option<f64>,
    pub eta_test: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleCvReport {
    pub criterion: Criterion,
    pub splits: Vec<SplitReport>,
    /// Mean over splits with a defined metric.
    pub mean: Option<f64>,
}

impl DoubleCvReport {
    /// One line per split: `split  n_test  metric  lambdas`.
    pub fn to_table(&self) -> String {
        let mut out = format!("split\tn_test\t{}\tlambdas\n", self.criterion.name());
        for s in &self.splits {
            let metric = s.metric.map_or("NA".to_string(), |m| format!("{m}"));
            let lambdas: Vec<String> = s.penalties.lambdas.iter().map(|l| format!("{l:e}")).collect();
            out.push_str(&format!("{}\t{}\t{}\t{}\n", s.split, s.test.len(), metric, lambdas.join(",")));
        }
        out.push_str(&format!("mean\t\t{}\t\n", self.mean.map_or("NA".to_string(), |m| format!("{m}"))));
        out
    }
}

fn tune_on(
    train: &RidgeProblem,
    cfg: &DoubleCvConfig,
    split: usize,
    iwls: &IwlsControl,
) -> Result<(PenaltyConfig, TuneMethod)> {
    let method = cfg.method.bind(train, cfg.seed.wrapping_add(1000 + split as u64))?;
    let penalties = match (&cfg.fixed, &cfg.preferred) {
        (Some(p), _) => p.clone(),
        (None, Some(pref)) => tune_preferential(train, &method, &cfg.tuner, pref, iwls)?.penalties,
        (None, None) => tune_problem(train, &method, &cfg.tuner, None, iwls)?.penalties,
    };
    Ok((penalties, method))
}

/// Outer folds split the data; each training part is tuned and fitted on
/// its own and the fit is scored on the held-out part.
pub fn double_cv(problem: &RidgeProblem, cfg: &DoubleCvConfig, iwls: &IwlsControl) -> Result<DoubleCvReport> {
    cfg.criterion.check_family(problem.family())?;
    let outer = make_folds(&problem.response, cfg.outer_k, 1, cfg.seed)?;
    let mut splits = Vec::with_capacity(cfg.outer_k);
    for (k, split) in outer.splits(0).into_iter().enumerate() {
        let train = problem.select_samples(&split.train)?;
        let (penalties, method) = tune_on(&train, cfg, k, iwls)?;
        let gamma = problem.gamma(&penalties)?;
        let eta_test = match method {
            TuneMethod::Elbo => {
                let g_ii = linalg::select(&gamma, &split.train, &split.train)?;
                let vb = vb_fit(&g_ii, &train.response.y, &VbControl::default())?;
                predictive(&gamma, &split.train, &split.test, &vb.mu_a)?.0
            }
            _ => {
                let g_ii = linalg::select(&gamma, &split.train, &split.train)?;
                let fit = iwls_fit(&g_ii, train.design.unpenalized(), &train.response, iwls)?;
                if !fit.converged {
                    log::warn!("outer split {k}: training fit did not converge");
                }
                predict_rows(&gamma, problem.design.unpenalized(), &split.test, &split.train, &fit.beta_unpen, &fit.dual)?
            }
        };
        let test_resp = problem.response.select(&split.test)?;
        let metric = evaluate_metric(cfg.criterion, &eta_test, &test_resp)?;
        log::info!("outer split {k}: {} = {:?}", cfg.criterion.name(), metric);
        splits.push(SplitReport { split: k, test: split.test, penalties, metric, eta_test: eta_test.iter().copied().collect() });
    }
    let defined: Vec<f64> = splits.iter().filter_map(|s| s.metric).collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(DoubleCvReport { criterion: cfg.criterion, splits, mean })
}

/// How the penalties of each CPO leave-out fit are chosen.
#[derive(Debug, Clone)]
pub enum CpoPenalties {
    Fixed(PenaltyConfig),
    /// Re-tune by the elbo on every training part.
    Tune(TunerConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoReport {
    pub cpo: Vec<f64>,
    /// Samples whose quadrature missed its tolerance.
    pub flagged: Vec<usize>,
    /// `(1/n) Σ log CPO_i`.
    pub log_mean: f64,
    pub penalties: Vec<PenaltyConfig>,
}

pub const CPO_QUAD_TOL: f64 = 1e-10;

/// Conditional predictive ordinates of the probit model: for each fold,
/// fit without it and integrate the probit likelihood of each held-out label
/// against the Gaussian predictive of its linear predictor.
pub fn cpo(problem: &RidgeProblem, plan: &FoldPlan, penalties: &CpoPenalties, iwls: &IwlsControl) -> Result<CpoReport> {
    if problem.family() != Family::Logistic {
        return Err(RidgeError::Unsupported("cpo needs a binary response".into()));
    }
    if plan.n() != problem.n() {
        return Err(RidgeError::Dimension("fold plan does not match the sample count".into()));
    }
    let splits = plan.splits(0);
    // per fold: (sample, ordinate, quadrature ok) for each held-out sample
    type FoldCpo = (Vec<(usize, f64, bool)>, PenaltyConfig);
    let per_fold: Vec<Result<FoldCpo>> = splits
        .par_iter()
        .map(|split| {
            let pen = match penalties {
                CpoPenalties::Fixed(p) => p.clone(),
                CpoPenalties::Tune(cfg) => {
                    let train = problem.select_samples(&split.train)?;
                    let start = init::initial_penalties(&train, &TuneMethod::Elbo, cfg, iwls)?;
                    tune_problem(&train, &TuneMethod::Elbo, cfg, Some(start), iwls)?.penalties
                }
            };
            let gamma = problem.gamma(&pen)?;
            let g_ii = linalg::select(&gamma, &split.train, &split.train)?;
            let y_in = linalg::select_vec(&problem.response.y, &split.train)?;
            let vb = vb_fit(&g_ii, &y_in, &VbControl::default())?;
            let (mean, var) = predictive(&gamma, &split.train, &split.test, &vb.mu_a)?;
            let vals = split
                .test
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    let (v, ok) = predictive_ordinate(problem.response.y[i], mean[j], var[j], CPO_QUAD_TOL);
                    (i, v, ok)
                })
                .collect();
            Ok((vals, pen))
        })
        .collect();
    let mut cpo = DVector::zeros(problem.n());
    let mut flagged = Vec::new();
    let mut pens = Vec::with_capacity(splits.len());
    for r in per_fold {
        let (vals, pen) = r?;
        for (i, v, ok) in vals {
            cpo[i] = v;
            if !ok {
                flagged.push(i);
            }
        }
        pens.push(pen);
    }
    flagged.sort_unstable();
    let log_mean = cpo.iter().map(|c| c.ln()).sum::<f64>() / problem.n() as f64;
    Ok(CpoReport { cpo: cpo.iter().copied().collect(), flagged, log_mean, penalties: pens })
}
