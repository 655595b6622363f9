//! Penalized Cox regression: tune by cross-validated partial likelihood,
//! then inspect the Breslow baseline and the held-out concordance.

use blockridge::bench::{simulate, SimSpec};
use blockridge::cv::{cindex, make_folds, Criterion, Utility};
use blockridge::family::Family;
use blockridge::iwls::IwlsControl;
use blockridge::model::RidgeProblem;
use blockridge::perf::{double_cv, DoubleCvConfig};
use blockridge::tune::{tune_problem, MethodSpec, TuneMethod, TunerConfig};
use std::sync::Arc;

fn main() -> blockridge::error::Result<()> {
    let sim = simulate(&SimSpec {
        n: 120,
        block_sizes: vec![300, 60],
        family: Family::Cox,
        lambdas: vec![300.0, 15.0],
        censoring: 0.3,
        seed: 5,
    })?;
    let problem = RidgeProblem::new(sim.design, sim.response)?;
    println!("{} events among {} samples", problem.response.num_events(), problem.n());

    let plan = Arc::new(make_folds(&problem.response, 5, 1, 2)?);
    let method = TuneMethod::Cv { plan, utility: Utility::Builtin(Criterion::Cvl) };
    let tuned = tune_problem(&problem, &method, &TunerConfig::default(), None, &IwlsControl::default())?;
    println!("tuned lambda: {:?}", tuned.penalties.lambdas);

    let fit = problem.fit(&tuned.penalties, &IwlsControl::default())?;
    let base = fit.state.baseline.as_ref().expect("cox fit has a baseline");
    let t_mid = base.times[base.times.len() / 2];
    println!("cumulative baseline hazard at t = {t_mid:.3}: {:.4}", base.eval(t_mid));
    let apparent = cindex(&fit.state.eta, problem.response.time.as_ref().unwrap(), &problem.response.y);
    println!("apparent c-index: {:.3}", apparent.unwrap_or(f64::NAN));

    let cfg = DoubleCvConfig {
        outer_k: 3,
        seed: 9,
        criterion: Criterion::Cindex,
        method: MethodSpec::Cv { k: 5, repeats: 1, utility: Utility::Builtin(Criterion::Cvl) },
        tuner: TunerConfig::default(),
        preferred: None,
        fixed: None,
    };
    let report = double_cv(&problem, &cfg, &IwlsControl::default())?;
    print!("{}", report.to_table());
    Ok(())
}
