//! The file-based workflow the command-line tool runs: write a data set,
//! ingest it by sample id, tune, fit, save the artifact and predict from
//! the reloaded copy.

use blockridge::bench::SimSpec;
use blockridge::cli::{build_artifact, load_problem, run_tuning, write_simulation};
use blockridge::family::Family;
use blockridge::io::{read_table, FitArtifact, RunConfig};

fn main() -> blockridge::error::Result<()> {
    let dir = std::env::temp_dir().join("blockridge-file-pipeline");
    let spec = SimSpec {
        n: 80,
        block_sizes: vec![100, 20],
        family: Family::Logistic,
        lambdas: vec![100.0, 2.0],
        censoring: 0.0,
        seed: 4,
    };
    let config_path = write_simulation(&spec, &dir)?;
    println!("{}", std::fs::read_to_string(&config_path).unwrap());

    let cfg = RunConfig::load(&config_path)?;
    let (data, problem) = load_problem(&cfg)?;
    let tuned = run_tuning(&cfg, &problem)?;
    let artifact = build_artifact(&cfg, &data, &problem, &tuned.penalties, tuned.trace)?;
    let path = dir.join("fit.json");
    artifact.save(&path)?;

    let reloaded = FitArtifact::load(&path)?;
    let tables: Vec<_> = cfg.blocks.iter().map(|b| Ok((b.name.clone(), read_table(&b.path)?))).collect::<blockridge::error::Result<_>>()?;
    let eta = reloaded.predict(&data.ids, &tables, None)?;
    let gap = eta.iter().zip(&artifact.eta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("fingerprint {}", &reloaded.fingerprint[..16]);
    println!("max |eta(reloaded) - eta(fit)| = {gap:.2e}");
    Ok(())
}
