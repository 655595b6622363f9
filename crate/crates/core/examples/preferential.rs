//! Preferential tuning: a cheap clinical-like block is tuned alone first,
//! then the high-dimensional block is added with that penalty held fixed.

use blockridge::bench::{simulate, SimSpec};
use blockridge::cv::{make_folds, Criterion, Utility};
use blockridge::family::Family;
use blockridge::iwls::IwlsControl;
use blockridge::model::RidgeProblem;
use blockridge::tune::{tune_preferential, TuneMethod, TunerConfig};
use std::sync::Arc;

fn main() -> blockridge::error::Result<()> {
    let sim = simulate(&SimSpec {
        n: 120,
        block_sizes: vec![10, 500],
        family: Family::Logistic,
        lambdas: vec![2.0, 500.0],
        censoring: 0.0,
        seed: 17,
    })?;
    let names = sim.design.names().to_vec();
    let problem = RidgeProblem::new(sim.design, sim.response)?;
    let plan = Arc::new(make_folds(&problem.response, 10, 1, 1)?);
    let method = TuneMethod::Cv { plan, utility: Utility::Builtin(Criterion::Cvl) };

    let r = tune_preferential(&problem, &method, &TunerConfig::default(), &[0], &IwlsControl::default())?;
    println!("stage 1 ({} alone): lambda = {:.4e}", names[0], r.stage1.penalties.lambdas[0]);
    println!(
        "stage 2: lambda = {:?}, fixed = {:?}",
        r.penalties.lambdas.iter().map(|l| format!("{l:.4e}")).collect::<Vec<_>>(),
        r.penalties.fixed
    );
    println!("evaluations: {} + {}", r.stage1.evaluations, r.stage2.evaluations);
    Ok(())
}
