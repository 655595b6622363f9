//! Variational Bayes for probit ridge: elbo monitoring, elbo-based tuning,
//! and conditional predictive ordinates from leave-fold-out fits.

use blockridge::bench::{simulate, SimSpec};
use blockridge::cv::make_folds;
use blockridge::family::Family;
use blockridge::iwls::IwlsControl;
use blockridge::model::RidgeProblem;
use blockridge::perf::{cpo, CpoPenalties};
use blockridge::tune::{tune_problem, TuneMethod, TunerConfig};
use blockridge::vb::{vb_fit, VbControl};

fn main() -> blockridge::error::Result<()> {
    let sim = simulate(&SimSpec {
        n: 100,
        block_sizes: vec![200, 30],
        family: Family::Logistic,
        lambdas: vec![200.0, 3.0],
        censoring: 0.0,
        seed: 12,
    })?;
    let problem = RidgeProblem::new(sim.design, sim.response)?;

    let tuned = tune_problem(&problem, &TuneMethod::Elbo, &TunerConfig::default(), None, &IwlsControl::default())?;
    println!("elbo-tuned lambda: {:?}", tuned.penalties.lambdas);

    let gamma = problem.gamma(&tuned.penalties)?;
    let state = vb_fit(&gamma, &problem.response.y, &VbControl::default())?;
    let t = &state.elbo_trace;
    println!("elbo: {:.4} -> {:.4} in {} iterations (converged: {})", t[0], state.elbo, state.iterations, state.converged);

    let plan = make_folds(&problem.response, 10, 1, 3)?;
    let report = cpo(&problem, &plan, &CpoPenalties::Fixed(tuned.penalties), &IwlsControl::default())?;
    println!("mean log CPO: {:.4} ({} flagged)", report.log_mean, report.flagged.len());
    let worst = report.cpo.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("smallest CPO: {worst:.4}");
    Ok(())
}
