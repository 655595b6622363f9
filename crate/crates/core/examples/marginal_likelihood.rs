//! Tuning by the Laplace marginal likelihood instead of cross-validation.
//! For a Gaussian response the approximation is exact.

use blockridge::bench::{simulate, SimSpec};
use blockridge::family::Family;
use blockridge::iwls::IwlsControl;
use blockridge::marginal::{gaussian_evidence, laplace_log_ml, MlControl};
use blockridge::model::RidgeProblem;
use blockridge::penalty::PenaltyConfig;
use blockridge::tune::{tune_problem, TuneMethod, TunerConfig};

fn main() -> blockridge::error::Result<()> {
    let spec = SimSpec {
        n: 100,
        block_sizes: vec![300, 50],
        family: Family::Linear,
        lambdas: vec![300.0, 5.0],
        censoring: 0.0,
        seed: 8,
    };
    let sim = simulate(&spec)?;
    let problem = RidgeProblem::new(sim.design, sim.response)?;

    let gamma = problem.gamma(&PenaltyConfig::new(vec![100.0, 10.0])?)?;
    let laplace = laplace_log_ml(&gamma, &problem.response, &MlControl::default())?.log_ml;
    let exact = gaussian_evidence(&gamma, &problem.response)?;
    println!("log evidence: laplace {laplace:.10}, closed form {exact:.10}");

    let r = tune_problem(&problem, &TuneMethod::Ml, &TunerConfig::default(), None, &IwlsControl::default())?;
    println!("ml-tuned lambda: {:?} (truth {:?})", r.penalties.lambdas, spec.lambdas);

    let logistic = simulate(&SimSpec { family: Family::Logistic, ..spec })?;
    let problem = RidgeProblem::new(logistic.design, logistic.response)?;
    let r = tune_problem(&problem, &TuneMethod::Ml, &TunerConfig::default(), None, &IwlsControl::default())?;
    println!("logistic, ml-tuned lambda: {:?}", r.penalties.lambdas);
    Ok(())
}
