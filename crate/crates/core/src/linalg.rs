//! Dense helpers shared by the sample-space identities.
//!
//! Everything here works on column-major `DMatrix<f64>`. Symmetric positive
//! definite systems go through Cholesky first; a pivoted LU is the fallback
//! when roundoff pushes a nominally PSD matrix over the edge.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Result, RidgeError};

/// Factorization of a square system, Cholesky when possible.
pub enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factor {
    /// Factor a matrix that should be symmetric positive definite.
    pub fn spd(a: DMatrix<f64>) -> Result<Factor> {
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok(Factor::Cholesky(chol));
        }
        log::warn!(
            "Cholesky factorization failed for a {}x{} system; falling back to pivoted LU",
            a.nrows(),
            a.ncols()
        );
        Factor::general(a)
    }

    /// Pivoted LU for a general square matrix.
    pub fn general(a: DMatrix<f64>) -> Result<Factor> {
        let lu = LU::new(a);
        let condition = lu_condition_estimate(&lu);
        if !condition.is_finite() || condition > 1e15 {
            return Err(RidgeError::Singular { condition });
        }
        Ok(Factor::Lu(lu))
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Lu(lu) => lu.solve(b).expect("LU checked for singularity"),
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Lu(lu) => lu.solve(b).expect("LU checked for singularity"),
        }
    }

    /// log |det A|.
    pub fn log_abs_det(&self) -> f64 {
        match self {
            Factor::Cholesky(c) => 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            Factor::Lu(lu) => lu.u().diagonal().iter().map(|d| d.abs().ln()).sum(),
        }
    }
}

fn lu_condition_estimate(lu: &LU<f64, Dyn, Dyn>) -> f64 {
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(Factor::spd(a)?.solve(b))
}

fn check_indices(idx: &[usize], len: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= len) {
        Some(&index) => Err(RidgeError::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}

/// Row/column extraction `m[rows, cols]`.
pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
    check_indices(rows, m.nrows())?;
    check_indices(cols, m.ncols())?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]))
}

/// Row extraction `m[rows, ]`.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    check_indices(rows, m.nrows())?;
    Ok(m.select_rows(rows))
}

pub fn select_vec(v: &DVector<f64>, idx: &[usize]) -> Result<DVector<f64>> {
    check_indices(idx, v.len())?;
    Ok(DVector::from_fn(idx.len(), |i, _| v[idx[i]]))
}

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Maximum absolute entrywise difference divided by the larger max-abs entry
/// (absolute when both are zero).
pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = a.amax().max(b.amax());
    let diff = (a - b).amax();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `diag(d) * m`.
pub fn scale_rows(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

/// `m * diag(d)`.
pub fn scale_cols(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

const PANEL: usize = 96;

/// Solve `a x = b` for a large SPD `a` with a right-looking blocked Cholesky.
///
/// Only used where the p-dimensional system is formed explicitly (benchmark
/// baselines and test oracles). Consumes `a`, which is overwritten by its
/// factor.
pub fn blocked_spd_solve(mut a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if a.ncols() != p || b.nrows() != p {
        return Err(RidgeError::Dimension(format!(
            "blocked solve: a is {}x{}, b has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let mut k = 0;
    while k < p {
        let kb = PANEL.min(p - k);
        let diag = a.view((k, k), (kb, kb)).clone_owned();
        let chol = Cholesky::new(diag).ok_or(RidgeError::Singular { condition: f64::INFINITY })?;
        let l11 = chol.l();
        a.view_mut((k, k), (kb, kb)).copy_from(&l11);
        let m = p - k - kb;
        if m > 0 {
            // L21 = A21 L11^{-T}  <=>  L11 L21^T = A21^T
            let a21t = a.view((k + kb, k), (m, kb)).transpose();
            let l21t = l11
                .solve_lower_triangular(&a21t)
                .ok_or(RidgeError::Singular { condition: f64::INFINITY })?;
            let l21 = l21t.transpose();
            a.view_mut((k + kb, k), (m, kb)).copy_from(&l21);
            // lower part of A22 -= L21 L21^T, one column panel at a time
            let mut j = 0;
            while j < m {
                let jw = PANEL.min(m - j);
                let lhs = l21.rows(j, m - j);
                let rhs = l21t.columns(j, jw);
                a.view_mut((k + kb + j, k + kb + j), (m - j, jw))
                    .gemm(-1.0, &lhs, &rhs, 1.0);
                j += jw;
            }
        }
        k += kb;
    }

    // forward: L y = b
    let mut x = b.clone_owned();
    let r = x.ncols();
    let mut k = 0;
    while k < p {
        let kb = PANEL.min(p - k);
        let lkk = a.view((k, k), (kb, kb)).lower_triangle();
        let yk = lkk
            .solve_lower_triangular(&x.rows(k, kb).clone_owned())
            .ok_or(RidgeError::Singular { condition: f64::INFINITY })?;
        x.rows_mut(k, kb).copy_from(&yk);
        let m = p - k - kb;
        if m > 0 {
            let l21 = a.view((k + kb, k), (m, kb)).clone_owned();
            x.view_mut((k + kb, 0), (m, r)).gemm(-1.0, &l21, &yk, 1.0);
        }
        k += kb;
    }
    // backward: L^T x = y
    let starts: Vec<usize> = (0..p).step_by(PANEL).collect();
    for &k in starts.iter().rev() {
        let kb = PANEL.min(p - k);
        let m = p - k - kb;
        if m > 0 {
            let l21 = a.view((k + kb, k), (m, kb)).clone_owned();
            let tail = x.rows(k + kb, m).clone_owned();
            x.rows_mut(k, kb).gemm_tr(-1.0, &l21, &tail, 1.0);
        }
        let lkk = a.view((k, k), (kb, kb)).lower_triangle();
        let xk = lkk
            .tr_solve_lower_triangular(&x.rows(k, kb).clone_owned())
            .ok_or(RidgeError::Singular { condition: f64::INFINITY })?;
        x.rows_mut(k, kb).copy_from(&xk);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(p: usize) -> DMatrix<f64> {
        let x = DMatrix::from_fn(p + 3, p, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        let mut a = x.transpose() * x;
        for i in 0..p {
            a[(i, i)] += 1.0;
        }
        a
    }

    #[test]
    fn blocked_solve_matches_cholesky() {
        for &p in &[5usize, 96, 97, 250] {
            let a = spd(p);
            let b = DMatrix::from_fn(p, 3, |i, j| (i as f64 * 0.3 - j as f64).sin());
            let direct = a.clone().cholesky().unwrap().solve(&b);
            let blocked = blocked_spd_solve(a, &b).unwrap();
            assert!(max_rel_diff(&direct, &blocked) < 1e-10, "p={p}");
        }
    }

    #[test]
    fn select_out_of_range() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(
            select(&m, &[0, 3], &[1]),
            Err(RidgeError::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn lu_fallback_log_det() {
        // indefinite but nonsingular: Cholesky fails, LU takes over
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let f = Factor::spd(a).unwrap();
        assert!(matches!(f, Factor::Lu(_)));
        assert!((f.log_abs_det() - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn singular_reports_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(Factor::spd(a), Err(RidgeError::Singular { .. })));
    }
}
