//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{Error, Result};

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 0; // 0 = run until convergence

pub(crate) fn svd(m: &DMatrix<f64>, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m.clone(), vectors, vectors, SVD_EPS, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numerical("SVD failed to converge".into()))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let s = svd(m, false)?;
    Ok(s.singular_values.max())
}

/// Largest eigenvalue of a small symmetric positive semidefinite matrix.
pub(crate) fn sym_psd_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.max().max(0.0)
}

pub(crate) fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolated quantile, `q ∈ [0, 1]`.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}
