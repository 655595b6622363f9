use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RidgeError};

/// Coupling between two paired blocks. The block penalties `λ_1, λ_2` live in
/// [`PenaltyConfig::lambdas`]; `cross` is `λ_3`, giving
/// `Λ_s = [[λ_1, -λ_3], [-λ_3, λ_2]]` per pair of coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedPenalty {
    pub first: usize,
    pub second: usize,
    pub cross: f64,
}

/// One penalty per block, plus an optional paired coupling and the per-block
/// mask of penalties held fixed during tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambdas: Vec<f64>,
    pub fixed: Vec<bool>,
    pub paired: Option<PairedPenalty>,
}

/// How a user-facing paired triple `(λ̃_1, λ̃_2, λ̃_c)` maps to `(λ_1, λ_2, λ_3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairedParametrization {
    /// `λ̃_1 β² + λ̃_2 β'² + λ̃_c (β - β')²`
    Additive,
    /// `λ̃_1 β² + λ̃_2 β'² + λ̃_c (√λ̃_1 β - √λ̃_2 β')²`
    Scaled,
}

/// Convert a user triple to the internal `(λ_1, λ_2, λ_3)`.
pub fn paired_param_transform(
    triple: (f64, f64, f64),
    parametrization: PairedParametrization,
) -> Result<(f64, f64, f64)> {
    let (t1, t2, tc) = triple;
    if !(t1 > 0.0 && t2 > 0.0 && t1.is_finite() && t2.is_finite()) {
        return Err(RidgeError::Penalty(format!(
            "paired block penalties must be positive, got ({t1}, {t2})"
        )));
    }
    if !(tc >= 0.0 && tc.is_finite()) {
        return Err(RidgeError::Penalty(format!("paired coupling must be >= 0, got {tc}")));
    }
    let out = match parametrization {
        PairedParametrization::Additive => (t1 + tc, t2 + tc, tc),
        PairedParametrization::Scaled => (t1 * (1.0 + tc), t2 * (1.0 + tc), (t1 * t2).sqrt() * tc),
    };
    check_paired_pd(out.0, out.1, out.2)?;
    Ok(out)
}

fn check_paired_pd(l1: f64, l2: f64, l3: f64) -> Result<()> {
    if l1 > 0.0 && l2 > 0.0 && l1 * l2 > l3 * l3 {
        Ok(())
    } else {
        Err(RidgeError::Penalty(format!(
            "paired penalty [[{l1}, -{l3}], [-{l3}, {l2}]] is not positive definite"
        )))
    }
}

impl PenaltyConfig {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        let fixed = vec![false; lambdas.len()];
        let cfg = Self { lambdas, fixed, paired: None };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Couple blocks `first` and `second`; their current lambdas become
    /// `λ_1, λ_2` and `cross` becomes `λ_3`.
    pub fn with_paired(mut self, first: usize, second: usize, cross: f64) -> Result<Self> {
        self.paired = Some(PairedPenalty { first, second, cross });
        self.validate()?;
        Ok(self)
    }

    /// Set paired penalties from a user triple.
    pub fn with_paired_triple(
        mut self,
        first: usize,
        second: usize,
        triple: (f64, f64, f64),
        parametrization: PairedParametrization,
    ) -> Result<Self> {
        let (l1, l2, l3) = paired_param_transform(triple, parametrization)?;
        if first >= self.lambdas.len() || second >= self.lambdas.len() {
            return Err(RidgeError::Penalty("paired block index out of range".into()));
        }
        self.lambdas[first] = l1;
        self.lambdas[second] = l2;
        self.with_paired(first, second, l3)
    }

    pub fn with_fixed(mut self, fixed: Vec<bool>) -> Result<Self> {
        if fixed.len() != self.lambdas.len() {
            return Err(RidgeError::Penalty(format!(
                "fixed mask has {} entries for {} blocks",
                fixed.len(),
                self.lambdas.len()
            )));
        }
        self.fixed = fixed;
        Ok(self)
    }

    pub fn num_blocks(&self) -> usize {
        self.lambdas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((b, l)) = self
            .lambdas
            .iter()
            .enumerate()
            .find(|(_, l)| !(**l > 0.0 && l.is_finite()))
        {
            return Err(RidgeError::Penalty(format!("lambda[{b}] = {l} must be positive and finite")));
        }
        if self.fixed.len() != self.lambdas.len() {
            return Err(RidgeError::Penalty("fixed mask length differs from lambdas".into()));
        }
        if let Some(p) = self.paired {
            let b = self.lambdas.len();
            if p.first >= b || p.second >= b || p.first == p.second {
                return Err(RidgeError::Penalty(format!(
                    "invalid paired blocks ({}, {}) for {b} blocks",
                    p.first, p.second
                )));
            }
            if !(p.cross >= 0.0 && p.cross.is_finite()) {
                return Err(RidgeError::Penalty(format!("paired cross penalty {} must be >= 0", p.cross)));
            }
            check_paired_pd(self.lambdas[p.first], self.lambdas[p.second], p.cross)?;
        }
        Ok(())
    }

    /// `Λ_s` for the paired blocks.
    pub fn paired_block(&self) -> Option<Matrix2<f64>> {
        self.paired.map(|p| {
            let l1 = self.lambdas[p.first];
            let l2 = self.lambdas[p.second];
            Matrix2::new(l1, -p.cross, -p.cross, l2)
        })
    }

    /// `(ω_1, ω_2, ω_3)`, the entries of `Ω_s = Λ_s⁻¹`.
    pub fn paired_omega(&self) -> Option<(f64, f64, f64)> {
        self.paired.map(|p| {
            let l1 = self.lambdas[p.first];
            let l2 = self.lambdas[p.second];
            let det = l1 * l2 - p.cross * p.cross;
            (l2 / det, l1 / det, p.cross / det)
        })
    }

    /// Keep only the listed blocks (pairing dropped unless both survive).
    pub fn select_blocks(&self, keep: &[usize]) -> Self {
        let paired = self.paired.and_then(|p| {
            let a = keep.iter().position(|&b| b == p.first)?;
            let b = keep.iter().position(|&b| b == p.second)?;
            Some(PairedPenalty { first: a, second: b, cross: p.cross })
        });
        Self {
            lambdas: keep.iter().map(|&b| self.lambdas[b]).collect(),
            fixed: keep.iter().map(|&b| self.fixed[b]).collect(),
            paired,
        }
    }

    /// Multiply every penalty (and the cross term) by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.lambdas.iter_mut().for_each(|l| *l *= t);
        if let Some(p) = out.paired.as_mut() {
            p.cross *= t;
        }
        out
    }
}
