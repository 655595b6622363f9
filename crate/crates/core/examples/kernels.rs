//! Non-linear blocks: any Gram-producing kernel plugs into the same
//! tuning and fitting code, because only the n×n matrices are used.

use blockridge::cv::{make_folds, Criterion, Utility};
use blockridge::design::BlockedDesign;
use blockridge::family::Response;
use blockridge::iwls::IwlsControl;
use blockridge::kernel::{linear, GaussianKernel, GramKernel, JaccardKernel};
use blockridge::model::RidgeProblem;
use blockridge::tune::{tune_problem, TuneMethod, TunerConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn main() -> blockridge::error::Result<()> {
    let n = 120;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0f64));
    let mutations = DMatrix::from_fn(n, 30, |_, _| f64::from(rng.random_bool(0.1)));
    let noise = DMatrix::from_fn(n, 50, |_, _| rng.random_range(-1.0..1.0));
    // a radial effect no linear ridge can capture
    let y = DVector::from_fn(n, |i, _| (x[(i, 0)].powi(2) + x[(i, 1)].powi(2)).sin() + 0.2 * rng.random_range(-1.0..1.0));

    let design = BlockedDesign::new(vec![("radial".into(), x), ("mutations".into(), mutations), ("noise".into(), noise)])?;
    let kernels: Vec<Arc<dyn GramKernel>> =
        vec![Arc::new(GaussianKernel { length_scale: 0.7 }), Arc::new(JaccardKernel), linear()];
    let problem = RidgeProblem::with_kernels(design, Response::linear(y)?, Some(kernels))?;

    let plan = Arc::new(make_folds(&problem.response, 10, 1, 5)?);
    let method = TuneMethod::Cv { plan, utility: Utility::Builtin(Criterion::Mse) };
    let r = tune_problem(&problem, &method, &TunerConfig::default(), None, &IwlsControl::default())?;
    for (name, l) in problem.design.names().iter().zip(&r.penalties.lambdas) {
        println!("{name:>10}: lambda = {l:.3e}");
    }
    println!("cross-validated mse: {:.4}", -r.utility.unwrap_or(f64::NAN));
    Ok(())
}
