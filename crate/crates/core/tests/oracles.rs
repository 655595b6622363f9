mod common;

use std::sync::Arc;
use std::time::Duration;

use blockridge::bench::{benchmark, simulate, Backend, BenchConfig, SimSpec};
use blockridge::cv::{cindex, cv_utility, make_folds, Criterion, Utility};
use blockridge::design::BlockedDesign;
use blockridge::family::{breslow, loglik, Family, Response};
use blockridge::gram::precompute_grams;
use blockridge::iwls::IwlsControl;
use blockridge::marginal::{laplace_log_ml, MlControl};
use blockridge::model::RidgeProblem;
use blockridge::penalty::{paired_param_transform, PairedParametrization, PenaltyConfig};
use blockridge::perf::{cpo, CpoPenalties};
use blockridge::tune::{tune_preferential, tune_problem, TuneMethod, TunerConfig};
use blockridge::vb::{elbo, logdet_gamma_plus_identity, predictive_ordinate, vb_fit, VbControl};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn single_block(x: DMatrix<f64>) -> BlockedDesign {
    BlockedDesign::new(vec![("b0".into(), x)]).unwrap()
}

fn probit_labels(rng: &mut ChaCha8Rng, eta: &DVector<f64>) -> DVector<f64> {
    let noise = normal_vector(rng, eta.len());
    DVector::from_fn(eta.len(), |i, _| f64::from(eta[i] + noise[i] > 0.0))
}

#[test]
fn gram_matches_triple_loop() {
    let mut rng = rng(1);
    let blocks = random_blocks(&mut rng, 4, &[7, 3]);
    let design = BlockedDesign::new(blocks.clone()).unwrap();
    let grams = precompute_grams(&design, None).unwrap();
    for (b, (_, x)) in blocks.iter().enumerate() {
        let mut direct = DMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..x.ncols() {
                    direct[(i, j)] += x[(i, k)] * x[(j, k)];
                }
            }
        }
        assert!(rel_err(&grams.sigmas()[b], &direct) < 1e-12);
    }
}

#[test]
fn breslow_matches_explicit_risk_sets() {
    let mut rng = rng(2);
    for _ in 0..20 {
        let eta = normal_vector(&mut rng, 6);
        // a tie between two samples in half the draws
        let mut time = DVector::from_fn(6, |_, _| rng.random_range(0.1..5.0));
        if rng.random_bool(0.5) {
            time[3] = time[1];
        }
        let event = DVector::from_vec(vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let response = Response::cox(time.clone(), event.clone()).unwrap();
        let base = breslow(&eta, &response).unwrap();
        let oracle = breslow_at_samples(&eta, &time, &event);
        for i in 0..6 {
            assert!((base.eval(time[i]) - oracle[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn cox_full_loglik_by_hand() {
    let eta: DVector<f64> = DVector::from_vec(vec![0.3, -0.2, 0.5]);
    let time = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let event = DVector::from_vec(vec![1.0, 0.0, 1.0]);
    let response = Response::cox(time, event).unwrap();
    let e: Vec<f64> = eta.iter().map(|v: &f64| v.exp()).collect();
    let j1 = 1.0 / (e[0] + e[1] + e[2]);
    let j3 = 1.0 / e[2];
    let cum = [j1, j1, j1 + j3];
    let hand = (j1.ln() + eta[0]) + (j3.ln() + eta[2]) - (0..3).map(|i| cum[i] * e[i]).sum::<f64>();
    assert!((loglik(&eta, &response, None).unwrap() - hand).abs() < 1e-12);
}

#[test]
fn cindex_matches_pair_enumeration() {
    let mut rng = rng(3);
    for _ in 0..50 {
        let risk = DVector::from_fn(8, |_, _| f64::from(rng.random_range(0..4)));
        let time = DVector::from_fn(8, |_, _| f64::from(rng.random_range(1..6)));
        let mut event = DVector::from_fn(8, |_, _| f64::from(rng.random_bool(0.6)));
        event[0] = 1.0;
        assert_eq!(cindex(&risk, &time, &event), brute_cindex(&risk, &time, &event));
    }
}

/// Sum of held-out unit-variance Gaussian log densities under leave-one-out
/// ridge refits.
fn loo_cvl_direct(x: &DMatrix<f64>, y: &DVector<f64>, pen: &DVector<f64>) -> f64 {
    let n = x.nrows();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let xi = x.select_rows(&keep);
            let yi = y.select_rows(&keep);
            let beta = inverse(&(DMatrix::from_diagonal(pen) + xi.transpose() * &xi)) * xi.transpose() * yi;
            let r = y[i] - x.row(i).dot(&beta.transpose());
            -0.5 * r * r - 0.5 * ln2pi
        })
        .sum()
}

#[test]
fn loo_cvl_matches_refits() {
    let mut rng = rng(4);
    let design = random_design(&mut rng, 10, &[6, 9]);
    let x = design.full_matrix();
    let y = normal_vector(&mut rng, 10);
    let problem = RidgeProblem::new(design, Response::linear(y.clone()).unwrap()).unwrap();
    let plan = make_folds(&problem.response, 10, 1, 0).unwrap();
    let lambdas = vec![0.7, 4.0];
    let cvl = cv_utility(
        &problem,
        &PenaltyConfig::new(lambdas.clone()).unwrap(),
        &plan,
        &Utility::Builtin(Criterion::Cvl),
        &IwlsControl::default(),
    )
    .unwrap();
    let direct = loo_cvl_direct(&x, &y, &penalty_diagonal(0, &[6, 9], &lambdas));
    assert!((cvl - direct).abs() < 1e-8 * direct.abs());
}

#[test]
fn infinite_shrinkage_mse_is_response_variance() {
    let mut rng = rng(5);
    let design = random_design(&mut rng, 30, &[20]);
    let mut y = normal_vector(&mut rng, 30);
    y.add_scalar_mut(-y.mean());
    let var = y.norm_squared() / 30.0;
    let problem = RidgeProblem::new(design, Response::linear(y).unwrap()).unwrap();
    let plan = make_folds(&problem.response, 5, 1, 0).unwrap();
    let neg_mse = cv_utility(
        &problem,
        &PenaltyConfig::new(vec![1e12]).unwrap(),
        &plan,
        &Utility::Builtin(Criterion::Mse),
        &IwlsControl::default(),
    )
    .unwrap();
    assert!((-neg_mse - var).abs() < 1e-3 * var);
}

#[test]
fn identity_design_shrinks_by_one_plus_lambda() {
    let mut rng = rng(6);
    let y = normal_vector(&mut rng, 8);
    let problem = RidgeProblem::new(single_block(DMatrix::identity(8, 8)), Response::linear(y.clone()).unwrap()).unwrap();
    for lambda in [0.1, 1.0, 7.5] {
        let fit = problem.fit(&PenaltyConfig::new(vec![lambda]).unwrap(), &IwlsControl::default()).unwrap();
        assert!(rel_err_vec(&fit.coefficients().unwrap(), &(&y / (1.0 + lambda))) < 1e-12);
    }
}

#[test]
fn tuned_loo_cvl_matches_grid_search() {
    let mut rng = rng(7);
    let x = normal_matrix(&mut rng, 12, 30);
    let y = &x * normal_vector(&mut rng, 30) * 0.3 + normal_vector(&mut rng, 12);
    let problem = RidgeProblem::new(single_block(x.clone()), Response::linear(y.clone()).unwrap()).unwrap();
    let plan = Arc::new(make_folds(&problem.response, 12, 1, 0).unwrap());
    let method = TuneMethod::Cv { plan, utility: Utility::Builtin(Criterion::Cvl) };
    let tuned = tune_problem(&problem, &method, &TunerConfig::default(), None, &IwlsControl::default()).unwrap();
    let at = |l: f64| loo_cvl_direct(&x, &y, &DVector::from_element(30, l));
    let grid_best = (0..=1500).map(|i| at((-5.0 + 0.01 * f64::from(i)).exp())).fold(f64::NEG_INFINITY, f64::max);
    let got = at(tuned.penalties.lambdas[0]);
    assert!(got >= grid_best - 1e-6, "tuned {got} vs grid {grid_best}");
}

#[test]
fn tuned_evidence_matches_grid_search() {
    let mut rng = rng(8);
    let x = normal_matrix(&mut rng, 25, 40);
    let y = &x * normal_vector(&mut rng, 40) * 0.5f64.sqrt() + normal_vector(&mut rng, 25);
    let problem = RidgeProblem::new(single_block(x.clone()), Response::linear(y.clone()).unwrap()).unwrap();
    let tuned = tune_problem(&problem, &TuneMethod::Ml, &TunerConfig::default(), None, &IwlsControl::default()).unwrap();
    let xxt = &x * x.transpose();
    let at = |l: f64| log_gaussian_density(&y, &(DMatrix::identity(25, 25) + &xxt / l));
    let grid_best = (0..=2000).map(|i| at((-5.0 + 0.01 * f64::from(i)).exp())).fold(f64::NEG_INFINITY, f64::max);
    let got = at(tuned.penalties.lambdas[0]);
    assert!(got >= grid_best - 1e-6, "tuned {got} vs grid {grid_best}");
}

#[test]
fn logistic_laplace_is_close_to_quadrature() {
    let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    let response = Response::logistic(DVector::from_vec(vec![1.0, 0.0])).unwrap();
    let laplace = laplace_log_ml(&gamma, &response, &MlControl::default()).unwrap().log_ml.exp();
    let inv = inverse(&gamma);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * gamma.determinant().sqrt());
    let (h, m) = (0.02, 400i32);
    let mut total = 0.0;
    for i in -m..=m {
        for j in -m..=m {
            let e = DVector::from_vec(vec![f64::from(i) * h, f64::from(j) * h]);
            let prior = norm * (-0.5 * e.dot(&(&inv * &e))).exp();
            total += expit(e[0]) * (1.0 - expit(e[1])) * prior * h * h;
        }
    }
    assert!((laplace / total - 1.0).abs() < 0.05, "laplace {laplace} quadrature {total}");
}

#[test]
fn paired_quadratic_forms() {
    let mut rng = rng(9);
    for _ in 0..50 {
        let t = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0), rng.random_range(0.0..3.0));
        let (b, bp): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let form = |(l1, l2, l3): (f64, f64, f64)| l1 * b * b + l2 * bp * bp - l3 * 2.0 * b * bp;
        let add = t.0 * b * b + t.1 * bp * bp + t.2 * (b - bp).powi(2);
        let scaled = t.0 * b * b + t.1 * bp * bp + t.2 * (t.0.sqrt() * b - t.1.sqrt() * bp).powi(2);
        let ta = paired_param_transform(t, PairedParametrization::Additive).unwrap();
        let ts = paired_param_transform(t, PairedParametrization::Scaled).unwrap();
        assert!((form(ta) - add).abs() < 1e-12 * add.abs().max(1.0));
        assert!((form(ts) - scaled).abs() < 1e-12 * scaled.abs().max(1.0));
    }
}

#[test]
fn prediction_equals_new_rows_times_coefficients() {
    let mut rng = rng(10);
    let design = random_design(&mut rng, 15, &[10, 25]);
    let x = design.full_matrix();
    let eta = &x * normal_vector(&mut rng, 35) * 0.3;
    let y = eta.map(|e| f64::from(rng.random::<f64>() < expit(e)));
    let problem = RidgeProblem::new(design, Response::logistic(y).unwrap()).unwrap();
    let fit = problem.fit(&PenaltyConfig::new(vec![2.0, 9.0]).unwrap(), &IwlsControl::default()).unwrap();
    let new_blocks = vec![normal_matrix(&mut rng, 3, 10), normal_matrix(&mut rng, 3, 25)];
    let mut x_new = DMatrix::zeros(3, 35);
    x_new.columns_mut(0, 10).copy_from(&new_blocks[0]);
    x_new.columns_mut(10, 25).copy_from(&new_blocks[1]);
    let pred = fit.predict(&new_blocks, None).unwrap();
    assert!(rel_err_vec(&pred, &(x_new * fit.coefficients().unwrap())) < 1e-8);
}

#[test]
fn simulated_coefficients_have_prior_variance() {
    let sim = simulate(&SimSpec {
        n: 10,
        block_sizes: vec![2000, 2000],
        family: Family::Linear,
        lambdas: vec![4.0, 0.5],
        censoring: 0.0,
        seed: 11,
    })
    .unwrap();
    for (beta, lambda) in sim.beta.iter().zip([4.0, 0.5]) {
        let var = beta.norm_squared() / beta.len() as f64;
        assert!((var * lambda - 1.0).abs() < 0.2, "var {var} for lambda {lambda}");
    }
}

#[test]
fn zero_block_is_pushed_to_the_upper_bound_by_stage_two() {
    let mut rng = rng(12);
    let x1 = normal_matrix(&mut rng, 30, 15);
    let y = &x1 * normal_vector(&mut rng, 15) * 0.5 + normal_vector(&mut rng, 30);
    let design = BlockedDesign::new(vec![("a".into(), x1), ("z".into(), DMatrix::zeros(30, 10))]).unwrap();
    let problem = RidgeProblem::new(design, Response::linear(y).unwrap()).unwrap();
    let plan = Arc::new(make_folds(&problem.response, 5, 1, 0).unwrap());
    let method = TuneMethod::Cv { plan, utility: Utility::Builtin(Criterion::Cvl) };
    let cfg = TunerConfig::default();
    let ctrl = IwlsControl::default();
    let r = tune_preferential(&problem, &method, &cfg, &[0], &ctrl).unwrap();
    assert!((r.penalties.lambdas[1].ln() - cfg.upper).abs() < 1e-9);
    let stage1 = problem.select_blocks(&[0]).unwrap().fit(&r.stage1.penalties, &ctrl).unwrap();
    let both = problem.fit(&r.penalties, &ctrl).unwrap();
    assert!((&stage1.state.eta - &both.state.eta).amax() < 1e-6);
}

fn planted_linear(seed: u64, signal_first: bool) -> RidgeProblem {
    let mut rng = rng(seed);
    let blocks = random_blocks(&mut rng, 60, &[30, 30]);
    let s = if signal_first { 0 } else { 1 };
    let eta = &blocks[s].1 * normal_vector(&mut rng, 30) * 0.5;
    let y = eta + normal_vector(&mut rng, 60);
    RidgeProblem::new(BlockedDesign::new(blocks).unwrap(), Response::linear(y).unwrap()).unwrap()
}

#[test]
fn noise_block_receives_the_larger_penalty() {
    let cfg = TunerConfig::default();
    let agree = (0..20u64)
        .filter(|&seed| {
            let problem = planted_linear(1300 + seed, true);
            let plan = Arc::new(make_folds(&problem.response, 5, 1, seed).unwrap());
            let method = TuneMethod::Cv { plan, utility: Utility::Builtin(Criterion::Cvl) };
            let r = tune_problem(&problem, &method, &cfg, None, &IwlsControl::default()).unwrap();
            r.penalties.lambdas[0] < r.penalties.lambdas[1]
        })
        .count();
    assert!(agree >= 18, "{agree}/20");
}

#[test]
fn stage_two_improves_when_the_signal_is_not_preferred() {
    let cfg = TunerConfig::default();
    for seed in 0..20u64 {
        let problem = planted_linear(1400 + seed, false);
        let plan = Arc::new(make_folds(&problem.response, 5, 1, seed).unwrap());
        let method = TuneMethod::Cv { plan, utility: Utility::Builtin(Criterion::Cvl) };
        let r = tune_preferential(&problem, &method, &cfg, &[0], &IwlsControl::default()).unwrap();
        let (u1, u2) = (r.stage1.utility.unwrap(), r.stage2.utility.unwrap());
        assert!(u2 > u1 + 1e-6, "seed {seed}: stage 1 {u1}, stage 2 {u2}");
    }
}

#[test]
fn elbo_matches_coefficient_space_expression() {
    let mut rng = rng(13);
    for _ in 0..20 {
        let n = rng.random_range(3..=12);
        let sizes = [rng.random_range(1..=10), rng.random_range(1..=10)];
        let design = random_design(&mut rng, n, &sizes);
        let lambdas = vec![rng.random_range(0.2..5.0), rng.random_range(0.2..5.0)];
        let x = design.full_matrix();
        let pen = penalty_diagonal(0, &sizes, &lambdas);
        let gamma = precompute_grams(&design, None).unwrap().assemble_gamma(&PenaltyConfig::new(lambdas).unwrap()).unwrap();
        let y = DVector::from_fn(n, |_, _| f64::from(rng.random_bool(0.5)));
        let mu_a = normal_vector(&mut rng, n);
        let hat = &gamma * inverse(&(DMatrix::identity(n, n) + &gamma));
        let got = elbo(&mu_a, &hat, logdet_gamma_plus_identity(&gamma).unwrap(), &y);

        let p = x.ncols();
        let v = inverse(&(DMatrix::from_diagonal(&pen) + x.transpose() * &x));
        let mu_b = &v * x.transpose() * &mu_a;
        let eta = &x * &mu_b;
        let ll: f64 = (0..n).map(|i| if y[i] == 1.0 { std_normal_cdf(eta[i]).ln() } else { std_normal_cdf(-eta[i]).ln() }).sum();
        let ratio = DMatrix::from_diagonal(&pen.map(|l| 1.0 / l)) * x.transpose() * &x + DMatrix::identity(p, p);
        let expect = ll - 0.5 * mu_b.dot(&pen.component_mul(&mu_b)) - 0.5 * ratio.determinant().ln();
        assert!((got - expect).abs() < 1e-8 * expect.abs().max(1.0), "{got} vs {expect}");
    }
}

#[test]
fn elbo_prefers_the_null_on_noise() {
    let cfg = TunerConfig::default();
    let near_upper = (0..20u64)
        .filter(|&seed| {
            let mut rng = rng(1500 + seed);
            let x = normal_matrix(&mut rng, 40, 30);
            let y = DVector::from_fn(40, |_, _| f64::from(rng.random_bool(0.5)));
            let problem = RidgeProblem::new(single_block(x), Response::logistic(y).unwrap()).unwrap();
            let r = tune_problem(&problem, &TuneMethod::Elbo, &cfg, None, &IwlsControl::default()).unwrap();
            r.penalties.lambdas[0].ln() > cfg.upper - 10.0
        })
        .count();
    assert!(near_upper >= 18, "{near_upper}/20");
}

#[test]
fn elbo_orders_planted_probit_blocks() {
    let cfg = TunerConfig::default();
    let agree = (0..20u64)
        .filter(|&seed| {
            let mut rng = rng(1600 + seed);
            let blocks = random_blocks(&mut rng, 80, &[30, 30]);
            let eta = &blocks[0].1 * normal_vector(&mut rng, 30) * 0.4 + &blocks[1].1 * normal_vector(&mut rng, 30) * 0.03;
            let y = probit_labels(&mut rng, &eta);
            let problem = RidgeProblem::new(BlockedDesign::new(blocks).unwrap(), Response::logistic(y).unwrap()).unwrap();
            let r = tune_problem(&problem, &TuneMethod::Elbo, &cfg, None, &IwlsControl::default()).unwrap();
            r.penalties.lambdas[0] < r.penalties.lambdas[1]
        })
        .count();
    assert!(agree >= 15, "{agree}/20");
}

#[test]
fn cpo_quadrature_matches_dense_trapezoid() {
    // n=2 toy: a one-sample training fit predicting the other sample
    let gamma = DMatrix::from_row_slice(2, 2, &[1.2, 0.5, 0.5, 0.9]);
    let y = DVector::from_vec(vec![1.0]);
    let fit = vb_fit(&gamma.view((0, 0), (1, 1)).into_owned(), &y, &VbControl::default()).unwrap();
    let (mean, var) = blockridge::vb::predictive(&gamma, &[0], &[1], &fit.mu_a).unwrap();
    for label in [0.0, 1.0] {
        let (value, ok) = predictive_ordinate(label, mean[0], var[0], 1e-10);
        assert!(ok);
        let sd = var[0].sqrt();
        let steps = 200_000;
        let h = 16.0 * sd / f64::from(steps);
        let f = |k: i32| {
            let eta = mean[0] - 8.0 * sd + f64::from(k) * h;
            let lik = if label == 1.0 { std_normal_cdf(eta) } else { std_normal_cdf(-eta) };
            lik * std_normal_pdf((eta - mean[0]) / sd) / sd
        };
        let trap = h * ((1..steps).map(f).sum::<f64>() + 0.5 * (f(0) + f(steps)));
        assert!((value - trap).abs() < 1e-6, "{value} vs {trap}");
    }
}

#[test]
fn cpo_favours_the_signal_model() {
    for seed in 0..20u64 {
        let mut rng = rng(1700 + seed);
        // coefficients drawn from the prior the model is fitted with
        let x = normal_matrix(&mut rng, 60, 10);
        let eta = &x * normal_vector(&mut rng, 10);
        let y = probit_labels(&mut rng, &eta);
        let problem = RidgeProblem::new(single_block(x), Response::logistic(y).unwrap()).unwrap();
        let plan = make_folds(&problem.response, 10, 1, seed).unwrap();
        let ctrl = IwlsControl::default();
        let signal = cpo(&problem, &plan, &CpoPenalties::Fixed(PenaltyConfig::new(vec![1.0]).unwrap()), &ctrl).unwrap();
        let null = cpo(&problem, &plan, &CpoPenalties::Fixed(PenaltyConfig::new(vec![1e12]).unwrap()), &ctrl).unwrap();
        assert!(signal.log_mean > null.log_mean, "seed {seed}: {} vs {}", signal.log_mean, null.log_mean);
    }
}

#[test]
fn gram_cached_cost_scales_with_p_only_in_precompute() {
    let run = |p: usize| {
        let sim = simulate(&SimSpec {
            n: 60,
            block_sizes: vec![p, p],
            family: Family::Linear,
            lambdas: vec![1.0, 1.0],
            censoring: 0.0,
            seed: 14,
        })
        .unwrap();
        let cfg = BenchConfig {
            budget: 200,
            backends: vec![Backend::GramCached],
            time_cap: Some(Duration::from_secs(60)),
            ..Default::default()
        };
        // best of three to damp scheduler noise
        (0..3)
            .map(|_| {
                let t = benchmark(&sim.design, &cfg).unwrap().timing(Backend::GramCached).unwrap().clone();
                (t.precompute_secs, t.eval_secs)
            })
            .fold((f64::INFINITY, f64::INFINITY), |a, b| (a.0.min(b.0), a.1.min(b.1)))
    };
    let (pre1, eval1) = run(4000);
    let (pre2, eval2) = run(8000);
    let pre_ratio = pre2 / pre1;
    let eval_ratio = eval2 / eval1;
    assert!((pre_ratio / 2.0 - 1.0).abs() < 0.3, "precompute ratio {pre_ratio}");
    assert!((eval_ratio - 1.0).abs() < 0.3, "evaluation ratio {eval_ratio}");
}
