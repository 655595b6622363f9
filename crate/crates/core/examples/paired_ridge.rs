//! Two measurements of the same features (say, two time points): the paired
//! penalty shrinks corresponding coefficients towards each other.

use blockridge::cv::{make_folds, Criterion, Utility};
use blockridge::design::BlockedDesign;
use blockridge::family::Response;
use blockridge::iwls::IwlsControl;
use blockridge::model::RidgeProblem;
use blockridge::penalty::{paired_param_transform, PairedParametrization};
use blockridge::tune::{tune_problem, TuneMethod, TunerConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

fn main() -> blockridge::error::Result<()> {
    let (n, p) = (100, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let beta = DVector::from_fn(p, |_, _| 0.3 * normal());
    let x1 = DMatrix::from_fn(n, p, |_, _| normal());
    let x2 = DMatrix::from_fn(n, p, |i, j| 0.8 * x1[(i, j)] + 0.6 * normal());
    // both time points carry the same effect
    let y = DVector::from_fn(n, |i, _| x1.row(i).dot(&beta.transpose()) + x2.row(i).dot(&beta.transpose()) + normal());

    let design = BlockedDesign::new(vec![("t1".into(), x1), ("t2".into(), x2)])?.with_pair("t1", "t2")?;
    let problem = RidgeProblem::new(design, Response::linear(y)?)?;
    let plan = Arc::new(make_folds(&problem.response, 10, 1, 4)?);
    let method = TuneMethod::Cv { plan, utility: Utility::Builtin(Criterion::Mse) };
    let r = tune_problem(&problem, &method, &TunerConfig::default(), None, &IwlsControl::default())?;

    let pair = r.penalties.paired.expect("paired coupling is tuned");
    println!("lambda_1 = {:.3}, lambda_2 = {:.3}, lambda_3 = {:.3}", r.penalties.lambdas[0], r.penalties.lambdas[1], pair.cross);
    let fit = problem.fit(&r.penalties, &IwlsControl::default())?;
    let b = fit.coefficients()?;
    let diff = (b.rows(0, p) - b.rows(p, p)).norm() / b.norm();
    println!("relative difference between paired coefficients: {diff:.3}");

    // the additive parametrization λ̃₁β² + λ̃₂β'² + λ̃_c(β - β')²
    let (l1, l2, l3) = paired_param_transform((1.0, 2.0, 3.0), PairedParametrization::Additive)?;
    println!("additive (1, 2, 3) maps to ({l1}, {l2}, {l3})");
    Ok(())
}
