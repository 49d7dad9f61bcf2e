//! Singular value thresholding of square matrices.

use nalgebra::{DMatrix, SVD};

use crate::{Error, Result};

pub(crate) fn svd_square(values: &[f64], side: usize) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if side * side != values.len() {
        return Err(Error::dim(format!("{} values do not form a {side}x{side} matrix", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let m = DMatrix::from_row_slice(side, side, values);
    let norm = m.norm();
    m.try_svd(true, true, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!("SVD of {side}x{side} matrix (Frobenius norm {norm:e}) did not converge"))
    })
}

/// Singular values of a square matrix given row-major, descending.
pub fn singular_values(values: &[f64], side: usize) -> Result<Vec<f64>> {
    let mut s: Vec<f64> = svd_square(values, side)?.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// U diag((σᵢ − λ)₊) Vᵀ for a row-major `side`×`side` matrix.
pub fn svt(values: &[f64], side: usize, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("lambda must be non-negative, got {lambda}")));
    }
    let svd = svd_square(values, side)?;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::<f64>::zeros(side, side);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - lambda;
        if shrunk > 0.0 {
            out += (u.column(k) * vt.row(k)) * shrunk;
        }
    }
    let mut flat = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            flat.push(out[(i, j)]);
        }
    }
    Ok(flat)
}
