//! Timing of the three hat-matrix backends on simulated data. Pass
//! `--full` for n = 100, p = 2 × 5000 and 1000 evaluations (the naive
//! backend is capped at 60 s and extrapolated).

use blockridge::bench::{benchmark, simulate, BenchConfig, SimSpec};
use blockridge::family::Family;
use std::time::Duration;

fn main() -> blockridge::error::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let (p, budget) = if full { (5000, 1000) } else { (1000, 100) };
    let sim = simulate(&SimSpec {
        n: 100,
        block_sizes: vec![p, p],
        family: Family::Logistic,
        lambdas: vec![1.0, 1.0],
        censoring: 0.0,
        seed: 1,
    })?;
    let cfg = BenchConfig { budget, time_cap: Some(Duration::from_secs(60)), ..Default::default() };
    let report = benchmark(&sim.design, &cfg)?;
    print!("{}", report.to_table());
    Ok(())
}
