//! Synthetic data and a timing comparison of three ways to evaluate the
//! ridge hat matrix for many `(Λ, W, fold)` triples: the p-space solve, the
//! Woodbury form rebuilding `Γ` from `X` each time, and the Woodbury form on
//! precomputed Gram matrices.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cv::make_folds_stratified;
use crate::design::BlockedDesign;
use crate::error::{Result, RidgeError};
use crate::family::{expit, Family, Response};
use crate::gram::{precompute_grams, GramSet};
use crate::hat::cv_hat_matrix;
use crate::linalg;
use crate::penalty::PenaltyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    /// Columns per block.
    pub block_sizes: Vec<usize>,
    pub family: Family,
    /// True penalty per block: coefficients are drawn from `N(0, 1/λ_b)`.
    pub lambdas: Vec<f64>,
    /// Probability that a survival time is censored.
    pub censoring: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(RidgeError::Config("simulation needs positive dimensions".into()));
        }
        if self.lambdas.len() != self.block_sizes.len() {
            return Err(RidgeError::Config(format!(
                "{} lambdas for {} blocks",
                self.lambdas.len(),
                self.block_sizes.len()
            )));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(RidgeError::Config("simulation lambdas must be positive and finite".into()));
        }
        if !(0.0..1.0).contains(&self.censoring) {
            return Err(RidgeError::Config("censoring rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn block_names(&self) -> Vec<String> {
        (0..self.block_sizes.len()).map(|b| format!("block{}", b + 1)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub design: BlockedDesign,
    pub response: Response,
    /// True coefficients per block.
    pub beta: Vec<DVector<f64>>,
    pub eta: DVector<f64>,
}

/// Standard normal covariates, `β_b ~ N(0, 1/λ_b)` and a response drawn from
/// the family given `η = Σ X_b β_b`. Survival times are exponential with
/// rate `exp(η)`; a censored sample is observed at a uniform time before its
/// event.
pub fn simulate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let mut blocks = Vec::new();
    let mut beta = Vec::new();
    let mut eta = DVector::zeros(n);
    for (b, name) in spec.block_names().into_iter().enumerate() {
        let p = spec.block_sizes[b];
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sd = spec.lambdas[b].recip().sqrt();
        let bb = DVector::from_fn(p, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
        eta += &x * &bb;
        blocks.push((name, x));
        beta.push(bb);
    }
    let response = match spec.family {
        Family::Linear => {
            let noise = Normal::new(0.0, 1.0).expect("unit normal");
            Response::linear(eta.map(|e| e + noise.sample(&mut rng)))?
        }
        Family::Logistic => Response::logistic(eta.map(|e| {
            let p = expit(e);
            f64::from(Bernoulli::new(p).expect("probability").sample(&mut rng))
        }))?,
        Family::Cox => {
            let mut time = DVector::zeros(n);
            let mut event = DVector::zeros(n);
            for i in 0..n {
                let rate = eta[i].exp().clamp(1e-300, 1e300);
                let t: f64 = Exp::new(rate).expect("positive rate").sample(&mut rng);
                let censored = rng.random::<f64>() < spec.censoring;
                if censored {
                    time[i] = t * rng.random::<f64>();
                } else {
                    time[i] = t;
                    event[i] = 1.0;
                }
                time[i] = time[i].max(f64::MIN_POSITIVE);
            }
            if event.iter().all(|&e| e == 0.0) {
                // keep the data usable for Cox fits
                event[0] = 1.0;
            }
            Response::cox(time, event)?
        }
    };
    Ok(Simulated { design: BlockedDesign::new(blocks)?, response, beta, eta })
}

/// Number of indices shared by the `k` largest `|β|` of the two vectors.
pub fn topk_overlap(beta_hat: &DVector<f64>, beta_true: &DVector<f64>, k: usize) -> Result<usize> {
    if beta_hat.len() != beta_true.len() {
        return Err(RidgeError::Dimension(format!(
            "top-k overlap of vectors of length {} and {}",
            beta_hat.len(),
            beta_true.len()
        )));
    }
    if k > beta_hat.len() {
        return Err(RidgeError::Config(format!("k = {k} exceeds p = {}", beta_hat.len())));
    }
    let top = |v: &DVector<f64>| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
        let mut keep = vec![false; v.len()];
        for &i in &idx[..k] {
            keep[i] = true;
        }
        keep
    };
    let (a, b) = (top(beta_hat), top(beta_true));
    Ok(a.iter().zip(&b).filter(|(x, y)| **x && **y).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// `(Λ + XᵀWX)⁻¹` by Cholesky in p-space.
    Naive,
    /// Sample-space formulas, `Γ` rebuilt from `X` every evaluation.
    WoodburyOnly,
    /// Sample-space formulas on Gram matrices computed once.
    GramCached,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Naive => "naive",
            Backend::WoodburyOnly => "woodbury-only",
            Backend::GramCached => "gram-cached",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Backend::Naive),
            "woodbury-only" | "woodbury" => Ok(Backend::WoodburyOnly),
            "gram-cached" | "gram" => Ok(Backend::GramCached),
            other => Err(RidgeError::Config(format!("unknown backend '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Evaluations per backend.
    pub budget: usize,
    pub backends: Vec<Backend>,
    pub folds: usize,
    pub seed: u64,
    /// Stop a backend once its evaluations exceed this and extrapolate the
    /// rest linearly.
    pub time_cap: Option<Duration>,
    pub cross_check_tol: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            budget: 1000,
            backends: vec![Backend::Naive, Backend::WoodburyOnly, Backend::GramCached],
            folds: 10,
            seed: 1,
            time_cap: None,
            cross_check_tol: 1e-6,
        }
    }
}

/// One `(Λ, W, fold)` evaluation request plus the vector the hat matrix is
/// applied to.
#[derive(Debug, Clone)]
pub struct Triple {
    pub lambdas: Vec<f64>,
    pub weights: DVector<f64>,
    pub lin: DVector<f64>,
    pub train: Vec<usize>,
}

/// The deterministic request sequence shared by all backends.
pub fn evaluation_triples(n: usize, blocks: usize, budget: usize, folds: usize, seed: u64) -> Result<Vec<Triple>> {
    let plan = make_folds_stratified(&vec![0; n], folds, 1, seed)?;
    let splits = plan.splits(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok((0..budget)
        .map(|e| Triple {
            lambdas: (0..blocks).map(|_| rng.random_range(-2.0..6.0f64).exp()).collect(),
            weights: DVector::from_fn(n, |_, _| rng.random_range(0.05..0.25)),
            lin: DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
            train: splits[e % splits.len()].train.clone(),
        })
        .collect())
}

/// `η = H_{·,train} L_train` for all samples, by p-space Cholesky.
pub fn eval_naive(design: &BlockedDesign, t: &Triple) -> Result<DVector<f64>> {
    let x = design.full_matrix();
    let x_in = linalg::select_rows(&x, &t.train)?;
    let w_in = linalg::select_vec(&t.weights, &t.train)?;
    let diag: Vec<f64> = design
        .block_cols()
        .iter()
        .zip(&t.lambdas)
        .flat_map(|(&p, &l)| std::iter::repeat_n(l, p))
        .collect();
    let xw = linalg::scale_rows(&x_in, &w_in);
    let mut a = x_in.tr_mul(&xw);
    for (j, l) in diag.iter().enumerate() {
        a[(j, j)] += l;
    }
    // (Λ + XᵀWX)⁻¹ X_inᵀ, then the hat rows for every sample
    let b = linalg::blocked_spd_solve(a, &x_in.transpose())?;
    let hat = &x * b;
    Ok(hat * linalg::select_vec(&t.lin, &t.train)?)
}

fn eval_sample_space(gamma: &DMatrix<f64>, t: &Triple) -> Result<DVector<f64>> {
    let all: Vec<usize> = (0..gamma.nrows()).collect();
    let w_in = linalg::select_vec(&t.weights, &t.train)?;
    let hat = cv_hat_matrix(gamma, &w_in, &t.train, &all)?;
    Ok(hat * linalg::select_vec(&t.lin, &t.train)?)
}

pub fn eval_woodbury(design: &BlockedDesign, t: &Triple) -> Result<DVector<f64>> {
    let n = design.n();
    let mut gamma = DMatrix::zeros(n, n);
    for (x, l) in design.blocks().iter().zip(&t.lambdas) {
        gamma += (x * x.transpose()) / *l;
    }
    eval_sample_space(&gamma, t)
}

pub fn eval_gram(grams: &GramSet, t: &Triple) -> Result<DVector<f64>> {
    let gamma = grams.assemble_gamma(&PenaltyConfig::new(t.lambdas.clone())?)?;
    eval_sample_space(&gamma, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendTiming {
    pub backend: Backend,
    /// Evaluations actually run; fewer than the budget when capped.
    pub evaluated: usize,
    pub extrapolated: bool,
    pub precompute_secs: f64,
    /// Evaluation time for the full budget (extrapolated when capped).
    pub eval_secs: f64,
    pub total_secs: f64,
    /// Max relative deviation of η from the reference backend on the
    /// cross-check triple.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub block_sizes: Vec<usize>,
    pub budget: usize,
    pub timings: Vec<BackendTiming>,
}

impl BenchReport {
    pub fn timing(&self, backend: Backend) -> Option<&BackendTiming> {
        self.timings.iter().find(|t| t.backend == backend)
    }

    /// Total time of `backend` over that of the Gram-cached backend.
    pub fn speedup(&self, backend: Backend) -> Option<f64> {
        Some(self.timing(backend)?.total_secs / self.timing(Backend::GramCached)?.total_secs)
    }

    pub fn to_table(&self) -> String {
        let p: usize = self.block_sizes.iter().sum();
        let mut out = format!("# n={} p={} budget={}\n", self.n, p, self.budget);
        out.push_str("backend\tevaluated\tprecompute_s\teval_s\ttotal_s\tvs_gram\tresidual\n");
        for t in &self.timings {
            let ratio = self.speedup(t.backend).map_or("NA".into(), |r| format!("{r:.2}"));
            out.push_str(&format!(
                "{}\t{}{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:.2e}\n",
                t.backend.name(),
                t.evaluated,
                if t.extrapolated { "*" } else { "" },
                t.precompute_secs,
                t.eval_secs,
                t.total_secs,
                ratio,
                t.residual
            ));
        }
        out
    }
}

fn relative_residual(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.amax().max(1e-300);
    (a - b).amax() / scale
}

/// Times `cfg.budget` evaluations per backend on `design`. Every backend
/// first evaluates the same triple and must agree within
/// `cfg.cross_check_tol` before any time is reported.
pub fn benchmark(design: &BlockedDesign, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.budget == 0 || cfg.backends.is_empty() {
        return Err(RidgeError::Config("benchmark needs a budget and at least one backend".into()));
    }
    let triples = evaluation_triples(design.n(), design.num_blocks(), cfg.budget, cfg.folds, cfg.seed)?;

    let mut grams = None;
    let mut precompute = vec![0.0; cfg.backends.len()];
    for (i, b) in cfg.backends.iter().enumerate() {
        if *b == Backend::GramCached && grams.is_none() {
            let start = Instant::now();
            grams = Some(precompute_grams(design, None)?);
            precompute[i] = start.elapsed().as_secs_f64();
        }
    }
    let eval = |b: Backend, t: &Triple| -> Result<DVector<f64>> {
        match b {
            Backend::Naive => eval_naive(design, t),
            Backend::WoodburyOnly => eval_woodbury(design, t),
            Backend::GramCached => eval_gram(grams.as_ref().expect("precomputed"), t),
        }
    };

    // first triple: timed and cross-checked
    let mut first = Vec::new();
    let mut elapsed = Vec::new();
    for &b in &cfg.backends {
        let start = Instant::now();
        let eta = eval(b, &triples[0])?;
        elapsed.push(start.elapsed());
        first.push(eta);
    }
    let residuals: Vec<f64> = first.iter().map(|e| relative_residual(e, &first[0])).collect();
    if let Some((i, r)) = residuals.iter().enumerate().find(|(_, r)| !(**r <= cfg.cross_check_tol)) {
        return Err(RidgeError::CrossCheck(format!(
            "{} deviates from {} by {r:e} (tolerance {:e})",
            cfg.backends[i].name(),
            cfg.backends[0].name(),
            cfg.cross_check_tol
        )));
    }

    let mut timings = Vec::new();
    for (i, &b) in cfg.backends.iter().enumerate() {
        let mut spent = elapsed[i];
        let mut done = 1;
        while done < cfg.budget && cfg.time_cap.is_none_or(|cap| spent < cap) {
            let start = Instant::now();
            eval(b, &triples[done])?;
            spent += start.elapsed();
            done += 1;
        }
        let eval_secs = spent.as_secs_f64() * cfg.budget as f64 / done as f64;
        log::info!("{}: {done} evaluations in {:.3}s", b.name(), spent.as_secs_f64());
        timings.push(BackendTiming {
            backend: b,
            evaluated: done,
            extrapolated: done < cfg.budget,
            precompute_secs: precompute[i],
            eval_secs,
            total_secs: precompute[i] + eval_secs,
            residual: residuals[i],
        });
    }
    Ok(BenchReport { n: design.n(), block_sizes: design.block_cols(), budget: cfg.budget, timings })
}
