//! Small dense helpers shared by the fitting modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

/// Relative ridge added when a penalized system fails to factor.
pub const RIDGE_FLOOR: f64 = 1e-10;

/// `X' diag(w) X`, accumulated over row chunks so no `n x d` copy is made.
pub fn weighted_gram(x: &DMatrix<f64>, weights: Option<&[f64]>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut g = DMatrix::zeros(d, d);
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let mut chunk = x.rows(start, len).clone_owned();
        if let Some(w) = weights {
            for (k, mut row) in chunk.row_iter_mut().enumerate() {
                row *= w[start + k].sqrt();
            }
        }
        g += chunk.transpose() * &chunk;
        start += len;
    }
    symmetrize(&mut g);
    g
}

/// `X' diag(w) v`
pub fn weighted_xtv(x: &DMatrix<f64>, weights: Option<&[f64]>, v: &[f64]) -> DVector<f64> {
    let wv: DVector<f64> = match weights {
        Some(w) => DVector::from_iterator(v.len(), v.iter().zip(w).map(|(a, b)| a * b)),
        None => DVector::from_column_slice(v),
    };
    x.tr_mul(&wv)
}

/// Copies the upper triangle onto the lower one.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

/// Cholesky factor of `system`; on failure retries once with
/// `RIDGE_FLOOR * gram_trace / d` added to the diagonal. The flag reports
/// whether the floor was needed.
pub fn factor_with_floor(
    system: &DMatrix<f64>,
    gram_trace: f64,
) -> Result<(Cholesky<f64, Dyn>, bool)> {
    if let Some(ch) = Cholesky::new(system.clone()) {
        if ch
            .l_dirty()
            .diagonal()
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            return Ok((ch, false));
        }
    }
    let d = system.nrows();
    let ridge = RIDGE_FLOOR * gram_trace.abs().max(f64::MIN_POSITIVE) / d as f64;
    let mut floored = system.clone();
    for i in 0..d {
        floored[(i, i)] += ridge;
    }
    match Cholesky::new(floored) {
        Some(ch) => Ok((ch, true)),
        None => Err(Error::RankDeficient { dim: d }),
    }
}

/// Symmetric positive-definite inverse with the same floor rule.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (ch, _) = factor_with_floor(m, trace(m)).map_err(|_| Error::NotPositiveDefinite)?;
    let mut inv = ch.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Condition number of a symmetric matrix from its eigenvalues.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
