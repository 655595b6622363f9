//! The n×n route gives the same hat matrix as the p-space formula, at a
//! fraction of the cost once the block Grams are cached.

use blockridge::bench::{simulate, SimSpec};
use blockridge::family::Family;
use blockridge::gram::precompute_grams;
use blockridge::hat::hat_matrix;
use blockridge::linalg::{max_rel_diff, scale_rows, spd_solve};
use blockridge::penalty::PenaltyConfig;
use nalgebra::{DMatrix, DVector};

fn main() -> blockridge::error::Result<()> {
    let sim = simulate(&SimSpec {
        n: 30,
        block_sizes: vec![120, 40],
        family: Family::Linear,
        lambdas: vec![10.0, 1.0],
        censoring: 0.0,
        seed: 7,
    })?;
    let design = &sim.design;
    let grams = precompute_grams(design, None)?;
    let penalties = PenaltyConfig::new(vec![5.0, 0.5])?;
    let weights = DVector::from_fn(design.n(), |i, _| 0.1 + 0.02 * i as f64);

    let gamma = grams.assemble_gamma(&penalties)?;
    let h = hat_matrix(&gamma, &weights)?.h;

    // X (Λ + XᵀWX)⁻¹ Xᵀ
    let x = design.full_matrix();
    let mut a = x.tr_mul(&scale_rows(&x, &weights));
    let mut off = 0;
    for (b, &p) in design.block_cols().iter().enumerate() {
        for k in off..off + p {
            a[(k, k)] += penalties.lambdas[b];
        }
        off += p;
    }
    let naive: DMatrix<f64> = &x * spd_solve(a, &x.transpose())?;

    println!("n = {}, p = {}", design.n(), x.ncols());
    println!("max relative difference of hat matrices: {:.2e}", max_rel_diff(&h, &naive));
    Ok(())
}
