//! Gram-producing maps. The fitting machinery only ever sees the n×n block
//! matrices, so swapping the inner product for another kernel costs nothing
//! downstream.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

/// A map from two sets of rows (same columns) to their cross-Gram matrix.
pub trait GramKernel: Send + Sync + fmt::Debug {
    fn tag(&self) -> &str;

    /// `K(a_i, b_j)` for every row `a_i` of `a` and `b_j` of `b`.
    fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64>;

    fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.cross(x, x)
    }

    /// Whether `gram(x) == x xᵀ`, so coefficients can be recovered.
    fn is_linear(&self) -> bool {
        false
    }
}

/// The inner product `X_b X_bᵀ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearKernel;

impl GramKernel for LinearKernel {
    fn tag(&self) -> &str {
        "linear"
    }

    fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a * b.transpose()
    }

    fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = x * x.transpose();
        crate::linalg::symmetrize(&mut g);
        g
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// `exp(-‖a - b‖² / (2 ℓ²))`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianKernel {
    pub length_scale: f64,
}

impl GramKernel for GaussianKernel {
    fn tag(&self) -> &str {
        "gaussian"
    }

    fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let inner = a * b.transpose();
        let na: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
        let nb: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
        let denom = 2.0 * self.length_scale * self.length_scale;
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            let d2 = (na[i] + nb[j] - 2.0 * inner[(i, j)]).max(0.0);
            (-d2 / denom).exp()
        })
    }
}

/// Similarity of 0/1 profiles by the Jaccard index; rows with no ones
/// are identical to each other.
#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardKernel;

impl GramKernel for JaccardKernel {
    fn tag(&self) -> &str {
        "jaccard"
    }

    fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let both = a * b.transpose();
        let ca: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
        let cb: Vec<f64> = b.row_iter().map(|r| r.sum()).collect();
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            let union = ca[i] + cb[j] - both[(i, j)];
            if union > 0.0 {
                both[(i, j)] / union
            } else {
                1.0
            }
        })
    }
}

pub fn linear() -> Arc<dyn GramKernel> {
    Arc::new(LinearKernel)
}
