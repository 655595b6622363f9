use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RidgeError};
use crate::linalg;

/// Two penalized blocks whose columns correspond one to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedSpec {
    pub first: usize,
    pub second: usize,
}

/// The n×p design split into penalized blocks plus an optional unpenalized
/// block of fixed covariates.
#[derive(Debug, Clone)]
pub struct BlockedDesign {
    n: usize,
    blocks: Vec<DMatrix<f64>>,
    names: Vec<String>,
    column_names: Vec<Vec<String>>,
    unpenalized: Option<DMatrix<f64>>,
    unpenalized_names: Vec<String>,
    paired: Option<PairedSpec>,
}

impl BlockedDesign {
    pub fn new(blocks: Vec<(String, DMatrix<f64>)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(RidgeError::Dimension("design needs at least one block".into()));
        }
        let n = blocks[0].1.nrows();
        let mut names = Vec::with_capacity(blocks.len());
        let mut mats = Vec::with_capacity(blocks.len());
        for (name, x) in blocks {
            if x.nrows() != n {
                return Err(RidgeError::Dimension(format!(
                    "block {name} has {} rows, expected {n}",
                    x.nrows()
                )));
            }
            if x.ncols() == 0 {
                return Err(RidgeError::Dimension(format!("block {name} has no columns")));
            }
            if names.contains(&name) {
                return Err(RidgeError::Config(format!("duplicate block name {name}")));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(RidgeError::Dimension(format!("block {name} has non-finite entries")));
            }
            names.push(name);
            mats.push(x);
        }
        let column_names = names
            .iter()
            .zip(&mats)
            .map(|(name, x)| (0..x.ncols()).map(|j| format!("{name}:{j}")).collect())
            .collect();
        Ok(Self {
            n,
            blocks: mats,
            names,
            column_names,
            unpenalized: None,
            unpenalized_names: Vec::new(),
            paired: None,
        })
    }

    /// Attach fixed covariates. Their columns must be linearly independent.
    pub fn with_unpenalized(mut self, x1: DMatrix<f64>) -> Result<Self> {
        if x1.nrows() != self.n {
            return Err(RidgeError::Dimension(format!(
                "unpenalized block has {} rows, expected {}",
                x1.nrows(),
                self.n
            )));
        }
        if x1.ncols() == 0 {
            self.unpenalized = None;
            self.unpenalized_names.clear();
            return Ok(self);
        }
        let dependent = dependent_columns(&x1);
        if !dependent.is_empty() {
            return Err(RidgeError::RankDeficient { columns: dependent });
        }
        self.unpenalized_names = (0..x1.ncols()).map(|j| format!("unpenalized:{j}")).collect();
        self.unpenalized = Some(x1);
        Ok(self)
    }

    /// Declare two blocks as paired (same column count and ordering).
    pub fn with_pair(mut self, first: &str, second: &str) -> Result<Self> {
        let a = self.block_index(first)?;
        let b = self.block_index(second)?;
        if a == b {
            return Err(RidgeError::Config("a block cannot be paired with itself".into()));
        }
        if self.blocks[a].ncols() != self.blocks[b].ncols() {
            return Err(RidgeError::Dimension(format!(
                "paired blocks {first} and {second} have {} and {} columns",
                self.blocks[a].ncols(),
                self.blocks[b].ncols()
            )));
        }
        self.paired = Some(PairedSpec { first: a, second: b });
        Ok(self)
    }

    pub fn with_column_names(mut self, block: &str, names: Vec<String>) -> Result<Self> {
        let b = self.block_index(block)?;
        if names.len() != self.blocks[b].ncols() {
            return Err(RidgeError::Dimension(format!(
                "{} column names for block {block} with {} columns",
                names.len(),
                self.blocks[b].ncols()
            )));
        }
        self.column_names[b] = names;
        Ok(self)
    }

    pub fn with_unpenalized_names(mut self, names: Vec<String>) -> Result<Self> {
        let p1 = self.unpenalized_cols();
        if names.len() != p1 {
            return Err(RidgeError::Dimension(format!(
                "{} names for {p1} unpenalized columns",
                names.len()
            )));
        }
        self.unpenalized_names = names;
        Ok(self)
    }

    pub fn block_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| RidgeError::Config(format!("unknown block {name}")))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &DMatrix<f64> {
        &self.blocks[b]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_names(&self, b: usize) -> &[String] {
        &self.column_names[b]
    }

    pub fn unpenalized(&self) -> Option<&DMatrix<f64>> {
        self.unpenalized.as_ref()
    }

    pub fn unpenalized_names(&self) -> &[String] {
        &self.unpenalized_names
    }

    pub fn unpenalized_cols(&self) -> usize {
        self.unpenalized.as_ref().map_or(0, |x| x.ncols())
    }

    pub fn paired(&self) -> Option<PairedSpec> {
        self.paired
    }

    pub fn block_cols(&self) -> Vec<usize> {
        self.blocks.iter().map(|x| x.ncols()).collect()
    }

    /// Total penalized column count.
    pub fn penalized_cols(&self) -> usize {
        self.blocks.iter().map(|x| x.ncols()).sum()
    }

    /// `[X_1 | X_b1 | X_b2 | ...]`, unpenalized columns first.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let p1 = self.unpenalized_cols();
        let p = p1 + self.penalized_cols();
        let mut x = DMatrix::zeros(self.n, p);
        if let Some(x1) = &self.unpenalized {
            x.columns_mut(0, p1).copy_from(x1);
        }
        let mut off = p1;
        for xb in &self.blocks {
            x.columns_mut(off, xb.ncols()).copy_from(xb);
            off += xb.ncols();
        }
        x
    }

    /// Keep only the samples in `rows` (in that order).
    pub fn select_samples(&self, rows: &[usize]) -> Result<Self> {
        let blocks = self
            .blocks
            .iter()
            .map(|x| linalg::select_rows(x, rows))
            .collect::<Result<Vec<_>>>()?;
        let unpenalized = match &self.unpenalized {
            Some(x1) => Some(linalg::select_rows(x1, rows)?),
            None => None,
        };
        Ok(Self {
            n: rows.len(),
            blocks,
            names: self.names.clone(),
            column_names: self.column_names.clone(),
            unpenalized,
            unpenalized_names: self.unpenalized_names.clone(),
            paired: self.paired,
        })
    }

    /// Keep only the listed penalized blocks; the pairing survives only if
    /// both of its blocks are kept.
    pub fn select_blocks(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&b| b >= self.blocks.len()) {
            return Err(RidgeError::IndexOutOfRange { index: bad, len: self.blocks.len() });
        }
        let paired = self.paired.and_then(|p| {
            let a = keep.iter().position(|&b| b == p.first)?;
            let b = keep.iter().position(|&b| b == p.second)?;
            Some(PairedSpec { first: a, second: b })
        });
        Ok(Self {
            n: self.n,
            blocks: keep.iter().map(|&b| self.blocks[b].clone()).collect(),
            names: keep.iter().map(|&b| self.names[b].clone()).collect(),
            column_names: keep.iter().map(|&b| self.column_names[b].clone()).collect(),
            unpenalized: self.unpenalized.clone(),
            unpenalized_names: self.unpenalized_names.clone(),
            paired,
        })
    }
}

/// Columns that are (numerically) linear combinations of earlier columns,
/// found by modified Gram-Schmidt.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).clone_owned();
        let norm = col.norm();
        let mut r = col;
        for q in &basis {
            let proj = q.dot(&r);
            r.axpy(-proj, q, 1.0);
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-10 * norm {
            dependent.push(j);
        } else {
            basis.push(r / rn);
        }
    }
    dependent
}
