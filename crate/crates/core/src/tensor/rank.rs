use num_bigint::BigInt;
use num_traits::Zero;

use super::Matrix;
use crate::error::{Error, Result};

/// Singular-value cutoff for numerical rank.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankTol {
    /// `max(rows, cols) · ε · σ_max`
    #[default]
    Auto,
    Abs(f64),
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank from the SVD: the number of singular values above `tol`.
pub fn matrix_rank_svd(m: &Matrix, tol: RankTol) -> Result<usize> {
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix_rank input".into()));
    }
    let sv = singular_values(m);
    let Some(&smax) = sv.first() else {
        return Ok(0);
    };
    let cutoff = match tol {
        RankTol::Auto => m.rows().max(m.cols()) as f64 * f64::EPSILON * smax,
        RankTol::Abs(t) => t,
    };
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

pub fn is_binary(m: &Matrix) -> bool {
    m.data().iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Exact rank of an integer-valued matrix by fraction-free (Bareiss)
/// elimination over arbitrary-precision integers.
pub fn matrix_rank_exact(m: &Matrix) -> Result<usize> {
    if m.data().iter().any(|x| !x.is_finite() || x.fract() != 0.0) {
        return Err(Error::Precondition(
            "exact rank needs integer entries".into(),
        ));
    }
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<BigInt>> = (0..rows)
        .map(|i| m.row(i).iter().map(|&x| BigInt::from(x as i64)).collect())
        .collect();
    let mut prev = BigInt::from(1);
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| !a[r][c].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        for r in rank + 1..rows {
            for j in c + 1..cols {
                let v = (&a[rank][c] * &a[r][j] - &a[r][c] * &a[rank][j]) / &prev;
                a[r][j] = v;
            }
            a[r][c] = BigInt::zero();
        }
        prev = a[rank][c].clone();
        rank += 1;
    }
    Ok(rank)
}

/// Matrix rank. 0/1 matrices take the exact elimination path; everything
/// else uses singular values against `tol`.
pub fn matrix_rank(m: &Matrix, tol: RankTol) -> Result<usize> {
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix_rank input".into()));
    }
    if is_binary(m) {
        matrix_rank_exact(m)
    } else {
        matrix_rank_svd(m, tol)
    }
}
