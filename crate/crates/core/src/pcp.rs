//! Principal Component Pursuit.
//!
//! Splits `X` into a low-rank `L` and a sparse `S` by solving
//! `min ‖L‖_* + γ‖S‖₁  s.t.  L + S = X`, with `‖S‖₁` the entrywise ℓ1 norm,
//! using the inexact augmented Lagrangian method with exact singular value
//! thresholding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::echogram::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, frobenius_sq};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcpConfig {
    /// Weight of the ℓ1 term; `None` resolves to [`default_gamma`].
    pub gamma: Option<f64>,
    /// Stop once `‖X − L − S‖_F / ‖X‖_F ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty; `None` resolves to `1.25 / σ₁(X)`.
    pub mu: Option<f64>,
    /// Penalty growth per iteration.
    pub rho: f64,
    /// Penalty cap, as a multiple of the initial penalty.
    pub mu_max_factor: f64,
}

impl Default for PcpConfig {
    fn default() -> Self {
        PcpConfig {
            gamma: None,
            tol: 1e-7,
            max_iter: 1000,
            mu: None,
            rho: 1.5,
            mu_max_factor: 1e7,
        }
    }
}

impl PcpConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Parameter(format!("gamma must be positive, got {g}")));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::Parameter(format!("mu must be positive, got {mu}")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        if !(self.rho >= 1.0) || !(self.mu_max_factor >= 1.0) {
            return Err(Error::Parameter("rho and mu_max_factor must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PcpResult {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    pub rank_estimate: usize,
    /// Fraction of entries of `S` that are nonzero.
    pub sparsity: f64,
    pub converged: bool,
    /// Resolved ℓ1 weight.
    pub gamma: f64,
    /// Resolved initial penalty.
    pub mu: f64,
}

impl PcpResult {
    /// `‖L‖_* + γ‖S‖₁` at the returned point.
    pub fn objective(&self) -> Result<f64> {
        objective(&self.low_rank, &self.sparse, self.gamma)
    }
}

/// `1 / √max(d, t)`.
pub fn default_gamma(d: usize, t: usize) -> Result<f64> {
    if d == 0 || t == 0 {
        return Err(Error::Parameter("matrix dimensions must be nonzero".into()));
    }
    Ok(1.0 / (d.max(t) as f64).sqrt())
}

#[inline]
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Singular value thresholding: `U · shrink(Σ, τ) · Vᵀ`.
pub fn svt(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    Ok(svt_with_spectrum(m, tau)?.0)
}

/// Returns the thresholded matrix along with its nonzero singular values.
fn svt_with_spectrum(m: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if m.is_empty() {
        return Ok((m.clone(), Vec::new()));
    }
    let svd = linalg::svd(m, true)?;
    let (u, vt) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
    };
    let keep: Vec<(usize, f64)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (i, s - tau))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for &(i, s) in &keep {
        out.ger(s, &u.column(i), &vt.row(i).transpose(), 1.0);
    }
    Ok((out, keep.into_iter().map(|(_, s)| s).collect()))
}

/// Nuclear norm plus weighted entrywise ℓ1 norm.
pub fn objective(low_rank: &DMatrix<f64>, sparse: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    let nuclear = if low_rank.is_empty() {
        0.0
    } else {
        linalg::svd(low_rank, false)?.singular_values.sum()
    };
    Ok(nuclear + gamma * sparse.iter().map(|v| v.abs()).sum::<f64>())
}

pub fn pcp_decompose(x: &DataMatrix, cfg: &PcpConfig) -> Result<PcpResult> {
    decompose_matrix(&x.values, cfg)
}

pub fn decompose_matrix(x: &DMatrix<f64>, cfg: &PcpConfig) -> Result<PcpResult> {
    cfg.validate()?;
    let (d, t) = x.shape();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("input has non-finite entries".into()));
    }
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => default_gamma(d, t)?,
    };

    let x_norm = frobenius_sq(x).sqrt();
    if x_norm == 0.0 {
        return Ok(PcpResult {
            low_rank: DMatrix::zeros(d, t),
            sparse: DMatrix::zeros(d, t),
            iterations: 1,
            final_residual: 0.0,
            rank_estimate: 0,
            sparsity: 0.0,
            converged: true,
            gamma,
            mu: cfg.mu.unwrap_or(0.0),
        });
    }

    let sigma1 = linalg::spectral_norm(x)?;
    let mu0 = cfg.mu.unwrap_or(1.25 / sigma1);
    let mu_max = mu0 * cfg.mu_max_factor;
    let mut mu = mu0;

    // dual variable starts at X / max(‖X‖₂, ‖X‖_∞ / γ)
    let inf_norm = x.amax();
    let mut y = x / sigma1.max(inf_norm / gamma);
    let mut s = DMatrix::zeros(d, t);
    let mut l = DMatrix::zeros(d, t);
    let mut spectrum = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        let inv_mu = 1.0 / mu;

        let target = x - &s + &y * inv_mu;
        (l, spectrum) = svt_with_spectrum(&target, inv_mu)?;

        let thresh = gamma * inv_mu;
        s = (x - &l + &y * inv_mu).map(|v| soft_threshold(v, thresh));

        let z = x - &l - &s;
        y += &z * mu;
        mu = (mu * cfg.rho).min(mu_max);

        residual = frobenius_sq(&z).sqrt() / x_norm;
        if !residual.is_finite() {
            return Err(Error::Numerical(format!(
                "residual became non-finite at iteration {iterations}"
            )));
        }
        if residual <= cfg.tol {
            converged = true;
            break;
        }
    }

    let top = spectrum.iter().copied().fold(0.0, f64::max);
    let rank_estimate = spectrum.iter().filter(|&&v| v > 1e-9 * top).count();
    let nonzero = s.iter().filter(|v| v.abs() > 0.0).count();
    Ok(PcpResult {
        sparsity: nonzero as f64 / (d * t) as f64,
        low_rank: l,
        sparse: s,
        iterations,
        final_residual: residual,
        rank_estimate,
        converged,
        gamma,
        mu: mu0,
    })
}
