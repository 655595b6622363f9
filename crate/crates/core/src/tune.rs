//! Penalty tuning: a global annealing pass over log-penalties followed by
//! Brent (one free penalty) or Nelder–Mead (several), keeping the best
//! candidate seen.
//!
//! Free coordinates follow the block names in sorted order, so relabelling
//! or reordering blocks reorders the result and nothing else. A paired
//! couple is searched as `(log λ̃₁, log λ̃₂, log c)` in the scaled
//! parametrization, which stays positive definite for every coordinate value.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cv::{cv_utility, FoldPlan, Utility};
use crate::error::{Result, RidgeError};
use crate::family::Family;
use crate::gram::canonical_order;
use crate::init;
use crate::iwls::IwlsControl;
use crate::marginal::{laplace_log_ml, MlControl};
use crate::model::RidgeProblem;
use crate::optim::{self, Stage, Tracker};
use crate::penalty::{PairedPenalty, PenaltyConfig};
use crate::vb::{vb_fit, VbControl};

/// Anything that scores a penalty configuration; larger is better.
pub trait Objective: Sync {
    fn evaluate(&self, penalties: &PenaltyConfig) -> f64;
}

impl<F: Fn(&PenaltyConfig) -> f64 + Sync> Objective for F {
    fn evaluate(&self, penalties: &PenaltyConfig) -> f64 {
        self(penalties)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMethod {
    /// Brent for one free coordinate, Nelder–Mead otherwise.
    Auto,
    NelderMead,
    Brent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerConfig {
    pub global_iters: usize,
    pub local_iters: usize,
    pub local_method: LocalMethod,
    /// Box on natural-log penalties.
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
    pub temperature: f64,
    pub decay: f64,
    pub step: f64,
    /// Brent searches `[θ* - w, θ* + w]` around the best global point.
    pub brent_halfwidth: f64,
    pub brent_xtol: f64,
    /// Starting relative coupling `c` for a paired couple.
    pub paired_init: f64,
    /// Tune a paired couple with `c` held at its start first, then jointly.
    pub paired_stagewise: bool,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            global_iters: 10,
            local_iters: 25,
            local_method: LocalMethod::Auto,
            lower: -10.0,
            upper: 30.0,
            seed: 1,
            temperature: 1.0,
            decay: 0.8,
            step: 1.0,
            brent_halfwidth: 4.0,
            brent_xtol: 1e-6,
            paired_init: 0.25,
            paired_stagewise: false,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(RidgeError::Config(format!("invalid log-penalty bounds [{}, {}]", self.lower, self.upper)));
        }
        if !(self.temperature > 0.0 && self.decay > 0.0 && self.decay <= 1.0 && self.step > 0.0) {
            return Err(RidgeError::Config("annealing schedule must be positive with decay in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: Stage,
    pub lambdas: Vec<f64>,
    pub cross: Option<f64>,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub penalties: PenaltyConfig,
    /// Utility of the returned penalties; `None` when nothing was free.
    pub utility: Option<f64>,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

/// Mapping between the search vector and a penalty configuration.
struct Coords {
    base: PenaltyConfig,
    /// Free blocks in canonical order; coordinate `j` belongs to `free[j]`.
    free: Vec<usize>,
    /// `(first, second, λ̃₁, λ̃₂, c, c is free)`.
    pair: Option<(usize, usize, f64, f64, f64, bool)>,
}

impl Coords {
    fn new(names: &[String], init: &PenaltyConfig, cfg: &TunerConfig, couple_free: bool) -> Self {
        let order = canonical_order(names);
        let free: Vec<usize> = order.into_iter().filter(|&b| !init.fixed[b]).collect();
        let pair = init.paired.map(|p| {
            let (l1, l2) = (init.lambdas[p.first], init.lambdas[p.second]);
            let rho = p.cross / (l1 * l2).sqrt();
            let c = rho / (1.0 - rho);
            let c_free = couple_free && (!init.fixed[p.first] || !init.fixed[p.second]);
            let c = if c_free { c.max(cfg.lower.exp()) } else { c };
            (p.first, p.second, l1 / (1.0 + c), l2 / (1.0 + c), c, c_free)
        });
        Self { base: init.clone(), free, pair }
    }

    fn dim(&self) -> usize {
        self.free.len() + usize::from(matches!(self.pair, Some((.., true))))
    }

    fn start(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .free
            .iter()
            .map(|&b| match self.pair {
                Some((a, _, t1, _, _, _)) if a == b => t1.ln(),
                Some((_, s, _, t2, _, _)) if s == b => t2.ln(),
                _ => self.base.lambdas[b].ln(),
            })
            .collect();
        if let Some((.., c, true)) = self.pair {
            x.push(c.ln());
        }
        x
    }

    fn decode(&self, x: &[f64]) -> PenaltyConfig {
        let mut out = self.base.clone();
        let mut tilde = self.pair.map(|(_, _, t1, t2, c, _)| (t1, t2, c));
        for (j, &b) in self.free.iter().enumerate() {
            let v = x[j].exp();
            match (self.pair, tilde.as_mut()) {
                (Some((a, ..)), Some(t)) if a == b => t.0 = v,
                (Some((_, s, ..)), Some(t)) if s == b => t.1 = v,
                _ => out.lambdas[b] = v,
            }
        }
        if let (Some((a, s, .., c_free)), Some((t1, t2, mut c))) = (self.pair, tilde) {
            if c_free {
                c = x[self.free.len()].exp();
            }
            out.lambdas[a] = t1 * (1.0 + c);
            out.lambdas[s] = t2 * (1.0 + c);
            out.paired = Some(PairedPenalty { first: a, second: s, cross: (t1 * t2).sqrt() * c });
        }
        out
    }
}

/// Maximize `objective` over the free penalties of `init`.
pub fn tune(objective: &dyn Objective, names: &[String], init: &PenaltyConfig, cfg: &TunerConfig) -> Result<TuneResult> {
    cfg.validate()?;
    init.validate()?;
    if names.len() != init.num_blocks() {
        return Err(RidgeError::Dimension(format!("{} names for {} penalties", names.len(), init.num_blocks())));
    }
    if !(cfg.paired_stagewise && init.paired.is_some()) {
        return tune_stage(objective, names, init, cfg, true);
    }
    let first = tune_stage(objective, names, init, cfg, false)?;
    let mut second = tune_stage(objective, names, &first.penalties, cfg, true)?;
    second.evaluations += first.evaluations;
    let mut trace = first.trace;
    trace.append(&mut second.trace);
    second.trace = trace;
    Ok(second)
}

fn tune_stage(
    objective: &dyn Objective,
    names: &[String],
    init: &PenaltyConfig,
    cfg: &TunerConfig,
    couple_free: bool,
) -> Result<TuneResult> {
    let coords = Coords::new(names, init, cfg, couple_free);
    let d = coords.dim();
    if d == 0 {
        return Ok(TuneResult { penalties: init.clone(), utility: None, evaluations: 0, trace: Vec::new() });
    }
    let mut f = |x: &[f64]| objective.evaluate(&coords.decode(x));
    let mut tracker = Tracker::new(&mut f, cfg.lower, cfg.upper);
    let x0 = tracker.clamp(&coords.start());
    let mut f0 = objective.evaluate(init);
    if f0.is_nan() {
        f0 = f64::NEG_INFINITY;
    }
    if f0 == f64::NEG_INFINITY {
        return Err(RidgeError::Optimization(
            "utility is -inf at the initial penalties; check the data (constant response, empty folds, separation)"
                .into(),
        ));
    }
    tracker.record(x0.clone(), f0, Stage::Init);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    optim::simulated_annealing(&mut tracker, &x0, f0, cfg.global_iters, cfg.temperature, cfg.decay, cfg.step, &mut rng);

    let (xb, fb) = tracker.best().map(|(x, v)| (x.to_vec(), v)).expect("initial point recorded");
    let use_brent = match cfg.local_method {
        LocalMethod::Auto => d == 1,
        LocalMethod::Brent => {
            if d != 1 {
                return Err(RidgeError::Config("brent needs exactly one free penalty".into()));
            }
            true
        }
        LocalMethod::NelderMead => false,
    };
    if use_brent {
        let w = cfg.brent_halfwidth;
        optim::brent(&mut tracker, xb[0] - w, xb[0] + w, cfg.brent_xtol, cfg.local_iters);
    } else {
        optim::nelder_mead(&mut tracker, &xb, Some(fb), cfg.local_iters);
    }

    let evaluations = tracker.evaluations();
    let (best_x, best_v) = tracker.best().map(|(x, v)| (x.to_vec(), v)).expect("evaluated");
    let trace: Vec<TraceEntry> = tracker
        .trace
        .iter()
        .enumerate()
        .map(|(i, (stage, x, v))| {
            let p = if i == 0 { init.clone() } else { coords.decode(x) };
            TraceEntry { stage: *stage, lambdas: p.lambdas.clone(), cross: p.paired.map(|q| q.cross), utility: *v }
        })
        .collect();
    // the initializer is recorded first, so an unbeaten start returns it exactly
    let first_best = tracker.trace.iter().position(|(_, x, v)| *v == best_v && *x == best_x).expect("best in trace");
    let penalties = if first_best == 0 { init.clone() } else { coords.decode(&best_x) };
    Ok(TuneResult { penalties, utility: Some(best_v), evaluations, trace })
}

/// The criterion a problem is tuned on.
#[derive(Debug, Clone)]
pub enum TuneMethod {
    /// Cross-validated utility over a fold plan.
    Cv { plan: Arc<FoldPlan>, utility: Utility },
    /// Laplace marginal likelihood.
    Ml,
    /// Variational probit elbo.
    Elbo,
}

impl TuneMethod {
    pub fn name(&self) -> &'static str {
        match self {
            TuneMethod::Cv { .. } => "cv",
            TuneMethod::Ml => "ml",
            TuneMethod::Elbo => "vb",
        }
    }

    pub fn check(&self, problem: &RidgeProblem) -> Result<()> {
        match self {
            TuneMethod::Cv { plan, utility } => {
                if plan.n() != problem.n() {
                    return Err(RidgeError::Dimension("fold plan does not match the sample count".into()));
                }
                if let Utility::Builtin(c) = utility {
                    c.check_family(problem.family())?;
                }
            }
            TuneMethod::Ml => {
                if problem.design.unpenalized_cols() > 0 {
                    return Err(RidgeError::Unsupported(
                        "marginal likelihood tuning does not support unpenalized covariates".into(),
                    ));
                }
            }
            TuneMethod::Elbo => {
                if problem.family() != Family::Logistic {
                    return Err(RidgeError::Unsupported("vb tuning needs a binary response".into()));
                }
                if problem.design.unpenalized_cols() > 0 || problem.response.offset.is_some() {
                    return Err(RidgeError::Unsupported(
                        "vb tuning does not support unpenalized covariates or offsets".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A tuning criterion before it is bound to data (fold plans depend on the
/// samples at hand).
#[derive(Debug, Clone)]
pub enum MethodSpec {
    Cv { k: usize, repeats: usize, utility: Utility },
    Ml,
    Elbo,
}

impl MethodSpec {
    /// Bind to a problem; CV folds are drawn with `seed`.
    pub fn bind(&self, problem: &RidgeProblem, seed: u64) -> Result<TuneMethod> {
        Ok(match self {
            MethodSpec::Cv { k, repeats, utility } => TuneMethod::Cv {
                plan: Arc::new(crate::cv::make_folds(&problem.response, *k, *repeats, seed)?),
                utility: utility.clone(),
            },
            MethodSpec::Ml => TuneMethod::Ml,
            MethodSpec::Elbo => TuneMethod::Elbo,
        })
    }
}

/// Scores penalties for a problem under a method; failures score `-∞`.
pub struct ProblemObjective<'a> {
    pub problem: &'a RidgeProblem,
    pub method: &'a TuneMethod,
    pub iwls: IwlsControl,
}

impl Objective for ProblemObjective<'_> {
    fn evaluate(&self, penalties: &PenaltyConfig) -> f64 {
        let value = match self.method {
            TuneMethod::Cv { plan, utility } => cv_utility(self.problem, penalties, plan, utility, &self.iwls),
            TuneMethod::Ml => self.problem.gamma(penalties).and_then(|g| {
                let ctrl = MlControl { iwls: self.iwls, ..MlControl::default() };
                laplace_log_ml(&g, &self.problem.response, &ctrl).map(|s| s.log_ml)
            }),
            TuneMethod::Elbo => self.problem.gamma(penalties).and_then(|g| {
                let s = vb_fit(&g, &self.problem.response.y, &VbControl::default())?;
                if !s.converged {
                    log::warn!("vb fit did not converge; elbo taken at the last iterate");
                }
                Ok(s.elbo)
            }),
        };
        match value {
            Ok(v) if !v.is_nan() => v,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                log::warn!("{} objective failed: {e}", self.method.name());
                f64::NEG_INFINITY
            }
        }
    }
}

/// Tune a problem from `init` (default: per-block initialization).
pub fn tune_problem(
    problem: &RidgeProblem,
    method: &TuneMethod,
    cfg: &TunerConfig,
    init: Option<PenaltyConfig>,
    iwls: &IwlsControl,
) -> Result<TuneResult> {
    method.check(problem)?;
    let init = match init {
        Some(p) => p,
        None => init::initial_penalties(problem, method, cfg, iwls)?,
    };
    let objective = ProblemObjective { problem, method, iwls: *iwls };
    tune(&objective, problem.design.names(), &init, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferentialResult {
    /// Tuning over the preferred blocks alone.
    pub stage1: TuneResult,
    /// Tuning of the remaining blocks with the preferred penalties fixed.
    pub stage2: TuneResult,
    pub penalties: PenaltyConfig,
}

/// Two-stage tuning: preferred blocks first (others left out of the model),
/// then the rest with all blocks in the model and the preferred penalties
/// held fixed.
pub fn tune_preferential(
    problem: &RidgeProblem,
    method: &TuneMethod,
    cfg: &TunerConfig,
    preferred: &[usize],
    iwls: &IwlsControl,
) -> Result<PreferentialResult> {
    let b = problem.design.num_blocks();
    let mut pref: Vec<usize> = preferred.to_vec();
    pref.sort_unstable();
    pref.dedup();
    if pref.is_empty() {
        return Err(RidgeError::Config("preferred block set is empty".into()));
    }
    if let Some(&bad) = pref.iter().find(|&&p| p >= b) {
        return Err(RidgeError::IndexOutOfRange { index: bad, len: b });
    }
    if pref.len() == b {
        return Err(RidgeError::Config("every block is preferred; nothing is left for the second stage".into()));
    }
    method.check(problem)?;
    let sub = problem.select_blocks(&pref)?;
    let stage1 = tune_problem(&sub, method, cfg, None, iwls)?;

    let rest: Vec<usize> = (0..b).filter(|i| !pref.contains(i)).collect();
    let rest_init = init::block_penalties(problem, method, cfg, iwls, &rest)?;
    let mut lambdas = vec![0.0; b];
    let mut fixed = vec![false; b];
    for (j, &p) in pref.iter().enumerate() {
        lambdas[p] = stage1.penalties.lambdas[j];
        fixed[p] = true;
    }
    for (j, &r) in rest.iter().enumerate() {
        lambdas[r] = rest_init[j];
    }
    let mut init = PenaltyConfig::new(lambdas)?.with_fixed(fixed)?;
    if let Some(pair) = problem.design.paired() {
        init = init::with_paired_start(init, pair.first, pair.second, cfg.paired_init)?;
    }
    let stage2 = tune_problem(problem, method, cfg, Some(init), iwls)?;
    let penalties = stage2.penalties.clone();
    Ok(PreferentialResult { stage1, stage2, penalties })
}
