//! Per-block Gram matrices and the penalty-weighted sum
//! `Γ = X Λ⁻¹ Xᵀ = Σ_b λ_b⁻¹ Σ_b`.
//!
//! Building the Grams is the only step whose cost grows with the number of
//! features. Everything after (any penalty, any weights, any fold) works on
//! n×n matrices sliced out of them.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::design::{BlockedDesign, PairedSpec};
use crate::error::{Result, RidgeError};
use crate::kernel::{self, GramKernel};
use crate::linalg;
use crate::penalty::PenaltyConfig;

#[derive(Debug, Clone)]
pub struct GramSet {
    sigmas: Vec<DMatrix<f64>>,
    sigma_q: Option<DMatrix<f64>>,
    names: Vec<String>,
    kernels: Vec<Arc<dyn GramKernel>>,
    pair: Option<PairedSpec>,
    order: Vec<usize>,
}

/// Block indices sorted by name; sums over blocks run in this order so that
/// relabelling blocks does not change a single bit of Γ.
pub fn canonical_order(names: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]));
    order
}

/// `X_a X_bᵀ + X_b X_aᵀ`, i.e. `X Q Xᵀ` with `Q` swapping paired columns.
fn swap_gram(xa: &DMatrix<f64>, xb: &DMatrix<f64>, new_a: &DMatrix<f64>, new_b: &DMatrix<f64>) -> DMatrix<f64> {
    new_a * xb.transpose() + new_b * xa.transpose()
}

/// A block with at least n columns should have a full-rank Gram; when it does
/// not (duplicated samples, say) the user is told, nothing is regularized.
fn warn_if_rank_deficient(name: &str, sigma: &DMatrix<f64>) {
    let eig = sigma.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if max > 0.0 && min <= 1e-12 * max {
        log::warn!("gram matrix of block {name} is numerically rank deficient (condition {:.3e})", max / min.max(f64::MIN_POSITIVE));
    }
}

/// Compute `Σ_b = K_b(X_b, X_b)` once per block (inner product unless a kernel
/// is given), plus `Σ_Q` when the design declares a pair.
pub fn precompute_grams(
    design: &BlockedDesign,
    kernels: Option<Vec<Arc<dyn GramKernel>>>,
) -> Result<GramSet> {
    let b = design.num_blocks();
    let kernels = match kernels {
        Some(k) if k.len() != b => {
            return Err(RidgeError::Dimension(format!("{} kernels for {b} blocks", k.len())))
        }
        Some(k) => k,
        None => vec![kernel::linear(); b],
    };
    let sigmas: Vec<DMatrix<f64>> = design
        .blocks()
        .iter()
        .zip(&kernels)
        .map(|(x, k)| {
            let mut g = k.gram(x);
            linalg::symmetrize(&mut g);
            g
        })
        .collect();
    for (b, (x, s)) in design.blocks().iter().zip(&sigmas).enumerate() {
        if x.ncols() >= x.nrows() {
            warn_if_rank_deficient(&design.names()[b], s);
        }
    }
    let sigma_q = match design.paired() {
        Some(p) => {
            if !(kernels[p.first].is_linear() && kernels[p.second].is_linear()) {
                return Err(RidgeError::Unsupported("paired blocks require the linear kernel".into()));
            }
            let (xa, xb) = (design.block(p.first), design.block(p.second));
            let mut q = swap_gram(xa, xb, xa, xb);
            linalg::symmetrize(&mut q);
            Some(q)
        }
        None => None,
    };
    Ok(GramSet {
        sigmas,
        sigma_q,
        names: design.names().to_vec(),
        order: canonical_order(design.names()),
        kernels,
        pair: design.paired(),
    })
}

impl GramSet {
    /// Build directly from precomputed n×n matrices (e.g. an external kernel).
    pub fn from_matrices(names: Vec<String>, sigmas: Vec<DMatrix<f64>>) -> Result<Self> {
        if names.len() != sigmas.len() || sigmas.is_empty() {
            return Err(RidgeError::Dimension("need one name per Gram matrix".into()));
        }
        let n = sigmas[0].nrows();
        if sigmas.iter().any(|s| s.nrows() != n || s.ncols() != n) {
            return Err(RidgeError::Dimension("Gram matrices must all be n×n".into()));
        }
        Ok(Self {
            order: canonical_order(&names),
            kernels: vec![kernel::linear(); sigmas.len()],
            sigmas,
            sigma_q: None,
            names,
            pair: None,
        })
    }

    pub fn n(&self) -> usize {
        self.sigmas[0].nrows()
    }

    pub fn num_blocks(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigmas(&self) -> &[DMatrix<f64>] {
        &self.sigmas
    }

    pub fn sigma_q(&self) -> Option<&DMatrix<f64>> {
        self.sigma_q.as_ref()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kernels(&self) -> &[Arc<dyn GramKernel>] {
        &self.kernels
    }

    pub fn kernel_tags(&self) -> Vec<String> {
        self.kernels.iter().map(|k| k.tag().to_string()).collect()
    }

    pub fn pair(&self) -> Option<PairedSpec> {
        self.pair
    }

    /// `Γ_Λ`, in O(B n²).
    pub fn assemble_gamma(&self, penalties: &PenaltyConfig) -> Result<DMatrix<f64>> {
        self.combine(penalties, &self.sigmas, self.sigma_q.as_ref())
    }

    fn combine(
        &self,
        penalties: &PenaltyConfig,
        sigmas: &[DMatrix<f64>],
        sigma_q: Option<&DMatrix<f64>>,
    ) -> Result<DMatrix<f64>> {
        penalties.validate()?;
        if penalties.num_blocks() != self.sigmas.len() {
            return Err(RidgeError::Dimension(format!(
                "{} penalties for {} blocks",
                penalties.num_blocks(),
                self.sigmas.len()
            )));
        }
        let mut coef: Vec<f64> = penalties.lambdas.iter().map(|l| 1.0 / l).collect();
        let mut cross = None;
        if let Some(p) = penalties.paired {
            let q = sigma_q.ok_or_else(|| {
                RidgeError::Penalty("paired penalty requested but no paired Gram was computed".into())
            })?;
            match self.pair {
                Some(spec) if spec.first == p.first && spec.second == p.second => {}
                Some(spec) if spec.first == p.second && spec.second == p.first => {}
                _ => {
                    return Err(RidgeError::Penalty(
                        "paired penalty blocks do not match the paired design".into(),
                    ))
                }
            }
            if p.cross != 0.0 {
                let (w1, w2, w3) = penalties.paired_omega().expect("paired");
                coef[p.first] = w1;
                coef[p.second] = w2;
                cross = Some((w3, q));
            }
        }
        let (rows, cols) = sigmas[0].shape();
        let mut gamma = DMatrix::zeros(rows, cols);
        for &b in &self.order {
            gamma += &sigmas[b] * coef[b];
        }
        if let Some((w3, q)) = cross {
            gamma += q * w3;
        }
        Ok(gamma)
    }

    /// Slice every Gram to `[rows, cols]`; no recomputation from the data.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<GramSlice<'_>> {
        Ok(GramSlice {
            parent: self,
            sigmas: self
                .sigmas
                .iter()
                .map(|s| linalg::select(s, rows, cols))
                .collect::<Result<_>>()?,
            sigma_q: match &self.sigma_q {
                Some(q) => Some(linalg::select(q, rows, cols)?),
                None => None,
            },
        })
    }

    /// Restrict to a subset of samples, as a standalone Gram set.
    pub fn select_samples(&self, idx: &[usize]) -> Result<GramSet> {
        let slice = self.select(idx, idx)?;
        Ok(GramSet {
            sigmas: slice.sigmas,
            sigma_q: slice.sigma_q,
            names: self.names.clone(),
            kernels: self.kernels.clone(),
            pair: self.pair,
            order: self.order.clone(),
        })
    }

    pub fn select_blocks(&self, keep: &[usize]) -> Result<GramSet> {
        if let Some(&bad) = keep.iter().find(|&&b| b >= self.sigmas.len()) {
            return Err(RidgeError::IndexOutOfRange { index: bad, len: self.sigmas.len() });
        }
        let pair = self.pair.and_then(|p| {
            let a = keep.iter().position(|&b| b == p.first)?;
            let b = keep.iter().position(|&b| b == p.second)?;
            Some(PairedSpec { first: a, second: b })
        });
        let names: Vec<String> = keep.iter().map(|&b| self.names[b].clone()).collect();
        Ok(GramSet {
            sigmas: keep.iter().map(|&b| self.sigmas[b].clone()).collect(),
            sigma_q: if pair.is_some() { self.sigma_q.clone() } else { None },
            order: canonical_order(&names),
            names,
            kernels: keep.iter().map(|&b| self.kernels[b].clone()).collect(),
            pair,
        })
    }

    /// `Γ^new = Σ_b λ_b⁻¹ K_b(X_b^new, X_b)` for new samples against the
    /// training design this set was built from.
    pub fn assemble_cross_gamma(
        &self,
        design: &BlockedDesign,
        new_blocks: &[DMatrix<f64>],
        penalties: &PenaltyConfig,
    ) -> Result<DMatrix<f64>> {
        if new_blocks.len() != design.num_blocks() {
            return Err(RidgeError::Dimension(format!(
                "{} new blocks for {} training blocks",
                new_blocks.len(),
                design.num_blocks()
            )));
        }
        let m = new_blocks[0].nrows();
        for (b, (new, train)) in new_blocks.iter().zip(design.blocks()).enumerate() {
            if new.ncols() != train.ncols() || new.nrows() != m {
                return Err(RidgeError::Dimension(format!(
                    "new block {} is {}x{}, expected {m}x{}",
                    design.names()[b],
                    new.nrows(),
                    new.ncols(),
                    train.ncols()
                )));
            }
        }
        let sigmas: Vec<DMatrix<f64>> = new_blocks
            .iter()
            .zip(design.blocks())
            .zip(&self.kernels)
            .map(|((new, train), k)| k.cross(new, train))
            .collect();
        let sigma_q = design.paired().map(|p| {
            swap_gram(
                design.block(p.first),
                design.block(p.second),
                &new_blocks[p.first],
                &new_blocks[p.second],
            )
        });
        self.combine(penalties, &sigmas, sigma_q.as_ref())
    }
}

/// Grams restricted to a rows×cols index pair (e.g. out×in for a fold).
#[derive(Debug)]
pub struct GramSlice<'a> {
    parent: &'a GramSet,
    sigmas: Vec<DMatrix<f64>>,
    sigma_q: Option<DMatrix<f64>>,
}

impl GramSlice<'_> {
    pub fn assemble_gamma(&self, penalties: &PenaltyConfig) -> Result<DMatrix<f64>> {
        self.parent.combine(penalties, &self.sigmas, self.sigma_q.as_ref())
    }
}

/// `Γ[rows, cols]`.
pub fn submatrix_gamma(gamma: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
    linalg::select(gamma, rows, cols)
}
