//! Fold plans, held-out metrics and the cross-validated utility.
//!
//! `Γ` is assembled once per candidate penalty; every fold works on
//! `Γ[in,in]` and `Γ[out,in]` cut from it.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RidgeError};
use crate::family::{self, Family, Response};
use crate::iwls::{iwls_fit, IwlsControl};
use crate::linalg;
use crate::model::RidgeProblem;
use crate::penalty::PenaltyConfig;

/// Fold id per sample, one assignment per repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub stratified: bool,
    pub assignments: Vec<Vec<usize>>,
}

/// One train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.first().map_or(0, |a| a.len())
    }

    pub fn splits(&self, repeat: usize) -> Vec<Split> {
        let a = &self.assignments[repeat];
        (0..self.k)
            .map(|f| Split {
                train: (0..a.len()).filter(|&i| a[i] != f).collect(),
                test: (0..a.len()).filter(|&i| a[i] == f).collect(),
            })
            .collect()
    }
}

/// Stratified plan: within each stratum samples are shuffled, strata are laid
/// end to end and position `j` goes to fold `j mod k`.
pub fn make_folds_stratified(strata: &[usize], k: usize, repeats: usize, seed: u64) -> Result<FoldPlan> {
    let n = strata.len();
    if k < 2 || k > n {
        return Err(RidgeError::Config(format!("fold count {k} must lie in [2, {n}]")));
    }
    if repeats == 0 {
        return Err(RidgeError::Config("repeats must be positive".into()));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    if groups.len() > 1 {
        for (s, g) in &groups {
            if g.len() < k {
                log::warn!("stratum {s} has {} samples for {k} folds; balance is best-effort", g.len());
            }
        }
    }
    let mut assignments = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut a = vec![0; n];
        let mut pos = 0;
        for g in groups.values() {
            let mut g = g.clone();
            g.shuffle(&mut rng);
            for i in g {
                a[i] = pos % k;
                pos += 1;
            }
        }
        assignments.push(a);
    }
    Ok(FoldPlan { k, repeats, seed, stratified: groups.len() > 1, assignments })
}

/// Balanced on labels (logistic) or event status (Cox); plain shuffle for
/// linear responses.
pub fn make_folds(response: &Response, k: usize, repeats: usize, seed: u64) -> Result<FoldPlan> {
    let strata: Vec<usize> = (0..response.n()).map(|i| response.stratum(i)).collect();
    make_folds_stratified(&strata, k, repeats, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Cvl,
    Auc,
    Cindex,
    Mse,
}

impl Criterion {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cvl" | "loglik" => Ok(Criterion::Cvl),
            "auc" => Ok(Criterion::Auc),
            "cindex" | "c-index" => Ok(Criterion::Cindex),
            "mse" => Ok(Criterion::Mse),
            other => Err(RidgeError::Config(format!("unknown criterion {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Cvl => "cvl",
            Criterion::Auc => "auc",
            Criterion::Cindex => "cindex",
            Criterion::Mse => "mse",
        }
    }

    pub fn check_family(self, family: Family) -> Result<()> {
        let ok = match self {
            Criterion::Cvl => true,
            Criterion::Auc => family == Family::Logistic,
            Criterion::Cindex => family == Family::Cox,
            Criterion::Mse => family != Family::Cox,
        };
        if ok {
            Ok(())
        } else {
            Err(RidgeError::Config(format!(
                "criterion {} does not apply to the {} family",
                self.name(),
                family.name()
            )))
        }
    }

    /// Larger is better for every criterion except mse.
    pub fn maximize(self) -> bool {
        self != Criterion::Mse
    }
}

/// User-supplied utility on pooled held-out linear predictors; larger is
/// better.
pub type CustomUtility = Arc<dyn Fn(&DVector<f64>, &Response) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Utility {
    Builtin(Criterion),
    Custom(CustomUtility),
}

impl fmt::Debug for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::Builtin(c) => write!(f, "Builtin({})", c.name()),
            Utility::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl From<Criterion> for Utility {
    fn from(c: Criterion) -> Self {
        Utility::Builtin(c)
    }
}

/// Mann–Whitney AUC with ties counted one half; `None` when one class is
/// absent.
pub fn auc(pred: &DVector<f64>, labels: &DVector<f64>) -> Option<f64> {
    let n = pred.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pred[order[j + 1]] == pred[order[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    let n1 = labels.iter().filter(|&&y| y == 1.0).count();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let r1: f64 = (0..n).filter(|&i| labels[i] == 1.0).map(|i| ranks[i]).sum();
    Some((r1 - (n1 * (n1 + 1)) as f64 / 2.0) / (n1 as f64 * n0 as f64))
}

/// Harrell's c-index with `pred` as risk score: pair (i, j) is usable when
/// `t_i < t_j` and `i` had an event; concordant when `pred_i > pred_j`.
/// Tied predictions count one half; `None` without usable pairs.
pub fn cindex(pred: &DVector<f64>, time: &DVector<f64>, event: &DVector<f64>) -> Option<f64> {
    let n = pred.len();
    let mut usable = 0.0;
    let mut concordant = 0.0;
    for i in 0..n {
        if event[i] != 1.0 {
            continue;
        }
        for j in 0..n {
            if time[i] < time[j] {
                usable += 1.0;
                if pred[i] > pred[j] {
                    concordant += 1.0;
                } else if pred[i] == pred[j] {
                    concordant += 0.5;
                }
            }
        }
    }
    (usable > 0.0).then(|| concordant / usable)
}

/// Held-out metric; `Ok(None)` when it is undefined for this response slice.
/// Cvl here is the held-out log-likelihood (Breslow partial likelihood for
/// Cox).
pub fn evaluate_metric(criterion: Criterion, pred: &DVector<f64>, response: &Response) -> Result<Option<f64>> {
    if pred.len() != response.n() {
        return Err(RidgeError::Dimension(format!(
            "{} predictions for {} responses",
            pred.len(),
            response.n()
        )));
    }
    criterion.check_family(response.family)?;
    let total = response.total_eta(pred);
    Ok(match criterion {
        Criterion::Auc => auc(&total, &response.y),
        Criterion::Cindex => cindex(&total, response.time.as_ref().expect("cox"), &response.y),
        Criterion::Mse => {
            let mean = match response.family {
                Family::Logistic => total.map(family::expit),
                _ => total,
            };
            Some((&response.y - mean).norm_squared() / pred.len() as f64)
        }
        Criterion::Cvl => match response.family {
            Family::Cox => {
                if response.num_events() == 0 {
                    None
                } else {
                    Some(family::partial_loglik(pred, response)?)
                }
            }
            _ => Some(family::loglik(pred, response, None)?),
        },
    })
}

/// Fit on one fold's training part and predict its test part.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub test: Vec<usize>,
    /// Held-out linear predictors (offset excluded).
    pub eta_test: DVector<f64>,
    /// This fold's likelihood contribution to CVL.
    pub cvl: f64,
    pub converged: bool,
}

/// `η[rows] = X₁[rows] b + Γ[rows, train] u` for a fit on `train`.
pub(crate) fn predict_rows(
    gamma: &DMatrix<f64>,
    unpen: Option<&DMatrix<f64>>,
    rows: &[usize],
    train: &[usize],
    beta_unpen: &DVector<f64>,
    dual: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mut eta = linalg::select(gamma, rows, train)? * dual;
    if let Some(x1) = unpen.filter(|x| x.ncols() > 0) {
        eta += linalg::select_rows(x1, rows)? * beta_unpen;
    }
    Ok(eta)
}

/// Fold likelihood from the fold's predictions: held-out log-likelihood, or
/// for Cox the cross-validated partial likelihood
/// `ℓ(η^(-k) on all samples) - ℓ(η^(-k) on training samples)`.
pub(crate) fn fold_cvl(
    response: &Response,
    split: &Split,
    eta_test: &DVector<f64>,
    eta_all: Option<&DVector<f64>>,
) -> Result<f64> {
    match response.family {
        Family::Cox => {
            let eta_all = eta_all.expect("cox needs all-sample predictions");
            let train_eta = DVector::from_fn(split.train.len(), |i, _| eta_all[split.train[i]]);
            let full = family::partial_loglik(eta_all, response)?;
            let train_resp = response.select(&split.train)?;
            Ok(full - family::partial_loglik(&train_eta, &train_resp)?)
        }
        _ => family::loglik(eta_test, &response.select(&split.test)?, None),
    }
}

fn fit_fold(
    problem: &RidgeProblem,
    gamma: &DMatrix<f64>,
    split: &Split,
    ctrl: &IwlsControl,
) -> Result<FoldOutcome> {
    let unpen = problem.design.unpenalized();
    let resp_in = problem.response.select(&split.train)?;
    let g_in = linalg::select(gamma, &split.train, &split.train)?;
    let x1_in = match unpen {
        Some(x1) => Some(linalg::select_rows(x1, &split.train)?),
        None => None,
    };
    let fit = iwls_fit(&g_in, x1_in.as_ref(), &resp_in, ctrl)?;
    let eta_test = predict_rows(gamma, unpen, &split.test, &split.train, &fit.beta_unpen, &fit.dual)?;
    let eta_all = if problem.family() == Family::Cox {
        let all: Vec<usize> = (0..problem.n()).collect();
        Some(predict_rows(gamma, unpen, &all, &split.train, &fit.beta_unpen, &fit.dual)?)
    } else {
        None
    };
    let cvl = fold_cvl(&problem.response, split, &eta_test, eta_all.as_ref())?;
    Ok(FoldOutcome { test: split.test.clone(), eta_test, cvl, converged: fit.converged })
}

/// Per-fold outcomes for one repeat, folds evaluated in parallel and
/// returned in fold order. Failed fits come back as errors in place.
pub fn cv_fold_outcomes(
    problem: &RidgeProblem,
    penalties: &PenaltyConfig,
    plan: &FoldPlan,
    repeat: usize,
    ctrl: &IwlsControl,
) -> Result<Vec<Result<FoldOutcome>>> {
    if plan.n() != problem.n() {
        return Err(RidgeError::Dimension(format!(
            "fold plan covers {} samples, problem has {}",
            plan.n(),
            problem.n()
        )));
    }
    let gamma = problem.gamma(penalties)?;
    let splits = plan.splits(repeat);
    Ok(splits.par_iter().map(|s| fit_fold(problem, &gamma, s, ctrl)).collect())
}

/// Combine one repeat's folds into a utility (maximize direction; mse is
/// negated). Any failed or non-converged fold gives `-∞`.
pub fn combine_folds(utility: &Utility, response: &Response, outcomes: &[Result<FoldOutcome>]) -> Result<f64> {
    let mut ok = Vec::with_capacity(outcomes.len());
    for (f, o) in outcomes.iter().enumerate() {
        match o {
            Ok(o) if o.converged => ok.push(o),
            Ok(_) => {
                log::warn!("fold {f}: fit did not converge; utility set to -inf");
                return Ok(f64::NEG_INFINITY);
            }
            Err(e) => {
                log::warn!("fold {f}: fit failed ({e}); utility set to -inf");
                return Ok(f64::NEG_INFINITY);
            }
        }
    }
    let pooled = || {
        let mut eta = DVector::zeros(response.n());
        for o in &ok {
            for (j, &i) in o.test.iter().enumerate() {
                eta[i] = o.eta_test[j];
            }
        }
        eta
    };
    let value = match utility {
        Utility::Builtin(Criterion::Cvl) => ok.iter().map(|o| o.cvl).sum(),
        Utility::Builtin(c) => match evaluate_metric(*c, &pooled(), response)? {
            Some(v) if c.maximize() => v,
            Some(v) => -v,
            None => {
                log::warn!("{} undefined on held-out predictions; utility set to -inf", c.name());
                f64::NEG_INFINITY
            }
        },
        Utility::Custom(f) => f(&pooled(), response),
    };
    Ok(if value.is_nan() { f64::NEG_INFINITY } else { value })
}

/// Cross-validated utility, averaged over repeats.
pub fn cv_utility(
    problem: &RidgeProblem,
    penalties: &PenaltyConfig,
    plan: &FoldPlan,
    utility: &Utility,
    ctrl: &IwlsControl,
) -> Result<f64> {
    if let Utility::Builtin(c) = utility {
        c.check_family(problem.family())?;
    }
    let mut total = 0.0;
    for r in 0..plan.repeats {
        let outcomes = cv_fold_outcomes(problem, penalties, plan, r, ctrl)?;
        total += combine_folds(utility, &problem.response, &outcomes)?;
    }
    Ok(total / plan.repeats as f64)
}
