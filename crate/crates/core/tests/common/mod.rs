//! Reference computations written straight from the textbook formulas,
//! sharing nothing with the library beyond its data types.

#![allow(dead_code)]

use blockridge::design::BlockedDesign;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Max abs difference over max abs reference.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

pub fn inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().try_inverse().expect("invertible")
}

/// Random blocks with names `b0, b1, ...`.
pub fn random_blocks(rng: &mut ChaCha8Rng, n: usize, sizes: &[usize]) -> Vec<(String, DMatrix<f64>)> {
    sizes.iter().enumerate().map(|(b, &p)| (format!("b{b}"), normal_matrix(rng, n, p))).collect()
}

pub fn random_design(rng: &mut ChaCha8Rng, n: usize, sizes: &[usize]) -> BlockedDesign {
    BlockedDesign::new(random_blocks(rng, n, sizes)).unwrap()
}

/// Diagonal of `Λ` expanded to the columns of `[X_1 | X_2 ...]`, zeros for
/// `p1` unpenalized columns.
pub fn penalty_diagonal(p1: usize, sizes: &[usize], lambdas: &[f64]) -> DVector<f64> {
    let mut d = vec![0.0; p1];
    for (&p, &l) in sizes.iter().zip(lambdas) {
        d.extend(std::iter::repeat_n(l, p));
    }
    DVector::from_vec(d)
}

/// `X (P + XᵀWX)⁻¹ Xᵀ` by explicit inversion.
pub fn naive_hat(x: &DMatrix<f64>, pen: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let a = DMatrix::from_diagonal(pen) + x.transpose() * DMatrix::from_diagonal(w) * x;
    x * inverse(&a) * x.transpose()
}

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Breslow cumulative hazard at each sample's own time.
pub fn breslow_at_samples(eta: &DVector<f64>, time: &DVector<f64>, event: &DVector<f64>) -> DVector<f64> {
    let n = eta.len();
    let mut cum_at = DVector::zeros(n);
    for i in 0..n {
        let mut h = 0.0;
        // sum over distinct event times s <= t_i of d(s) / risk(s)
        let mut seen: Vec<f64> = Vec::new();
        for j in 0..n {
            let s = time[j];
            if event[j] == 1.0 && s <= time[i] && !seen.contains(&s) {
                seen.push(s);
                let d: f64 = (0..n).filter(|&k| time[k] == s).map(|k| event[k]).sum();
                let risk: f64 = (0..n).filter(|&k| time[k] >= s).map(|k| eta[k].exp()).sum();
                h += d / risk;
            }
        }
        cum_at[i] = h;
    }
    cum_at
}

/// Score of the log-likelihood with respect to `η` and the IWLS weights.
pub fn logistic_moments(eta: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let mu = eta.map(expit);
    (y - &mu, mu.map(|p| p * (1.0 - p)))
}

pub fn cox_moments(eta: &DVector<f64>, time: &DVector<f64>, event: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let h = breslow_at_samples(eta, time, event);
    let w = h.component_mul(&eta.map(f64::exp));
    (event - &w, w)
}

/// Newton iterates in coefficient space for the penalized model with
/// diagonal penalty `pen`, starting from β = 0.
pub fn beta_newton(
    x: &DMatrix<f64>,
    pen: &DVector<f64>,
    moments: impl Fn(&DVector<f64>) -> (DVector<f64>, DVector<f64>),
    iters: usize,
) -> Vec<DVector<f64>> {
    let mut beta = DVector::zeros(x.ncols());
    let mut path = vec![x * &beta];
    for _ in 0..iters {
        let eta = x * &beta;
        let (c, w) = moments(&eta);
        let a = DMatrix::from_diagonal(pen) + x.transpose() * DMatrix::from_diagonal(&w) * x;
        beta = inverse(&a) * x.transpose() * (c + w.component_mul(&eta));
        path.push(x * &beta);
    }
    path
}

/// `log N(y; 0, Σ)`.
pub fn log_gaussian_density(y: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let chol = sigma.clone().cholesky().expect("spd");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = y.dot(&chol.solve(y));
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Reference VB for probit ridge in coefficient space:
/// `V = (Λ + XᵀX)⁻¹`, `m = V Xᵀ μ_a`, then the truncated-normal update.
pub fn vb_beta_space(x: &DMatrix<f64>, pen: &DVector<f64>, y: &DVector<f64>, iters: usize) -> Vec<DVector<f64>> {
    let v = inverse(&(DMatrix::from_diagonal(pen) + x.transpose() * x));
    let proj = x * v * x.transpose();
    let mut mu_a = y.map(|t| 2.0 * t - 1.0);
    let mut path = vec![mu_a.clone()];
    for _ in 0..iters {
        let m = &proj * &mu_a;
        mu_a = DVector::from_fn(y.len(), |i, _| {
            let e = m[i];
            if y[i] == 1.0 {
                e + std_normal_pdf(e) / std_normal_cdf(e)
            } else {
                e - std_normal_pdf(e) / (1.0 - std_normal_cdf(e))
            }
        });
        path.push(mu_a.clone());
    }
    path
}

/// Harrell's c-index by enumerating all usable pairs.
pub fn brute_cindex(risk: &DVector<f64>, time: &DVector<f64>, event: &DVector<f64>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..risk.len() {
        for j in 0..risk.len() {
            if event[i] == 1.0 && time[i] < time[j] {
                den += 1.0;
                if risk[i] > risk[j] {
                    num += 1.0;
                } else if risk[i] == risk[j] {
                    num += 0.5;
                }
            }
        }
    }
    (den > 0.0).then(|| num / den)
}
