//! Two blocks with very different signal strength: cross-validated tuning
//! recovers which one deserves the heavier penalty.

use blockridge::bench::{simulate, topk_overlap, SimSpec};
use blockridge::cv::{make_folds, Criterion, Utility};
use blockridge::family::Family;
use blockridge::iwls::IwlsControl;
use blockridge::model::RidgeProblem;
use blockridge::tune::{tune_problem, TuneMethod, TunerConfig};
use nalgebra::DVector;
use std::sync::Arc;

fn main() -> blockridge::error::Result<()> {
    let spec = SimSpec {
        n: 150,
        block_sizes: vec![400, 100],
        family: Family::Logistic,
        lambdas: vec![400.0, 10.0],
        censoring: 0.0,
        seed: 3,
    };
    let sim = simulate(&spec)?;
    let problem = RidgeProblem::new(sim.design.clone(), sim.response.clone())?;

    let plan = Arc::new(make_folds(&problem.response, 10, 1, 11)?);
    for criterion in [Criterion::Cvl, Criterion::Auc] {
        let method = TuneMethod::Cv { plan: plan.clone(), utility: Utility::Builtin(criterion) };
        let r = tune_problem(&problem, &method, &TunerConfig::default(), None, &IwlsControl::default())?;
        println!(
            "{:>4}: lambda = {:?} after {} evaluations (utility {:.4})",
            criterion.name(),
            r.penalties.lambdas.iter().map(|l| format!("{l:.3e}")).collect::<Vec<_>>(),
            r.evaluations,
            r.utility.unwrap_or(f64::NAN)
        );
        if criterion == Criterion::Cvl {
            let fit = problem.fit(&r.penalties, &IwlsControl::default())?;
            let beta = fit.coefficients()?;
            let truth = DVector::from_iterator(500, sim.beta.iter().flat_map(|b| b.iter().copied()));
            println!("      top-50 overlap with the true coefficients: {}", topk_overlap(&beta, &truth, 50)?);
        }
    }
    println!("true lambda = {:?}", spec.lambdas);
    Ok(())
}
