//! Temporally smooth NMF solved by proximal alternating linearized minimization.
//!
//! Minimizes
//!
//! ```text
//! ‖X − WH‖²_F + η‖HΔ‖²_F + λ‖W‖₁ + β_W‖W‖²_F + β_H‖H‖²_F,   W, H ≥ 0
//! ```
//!
//! where `Δ` takes differences of consecutive columns of `H`. Each sweep takes
//! a projected proximal-gradient step on `W` and then on `H`, with step sizes
//! set from the Lipschitz constants of the partial gradients.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, sym_psd_norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsnmfConfig {
    pub rank: usize,
    /// Smoothness weight on consecutive activations.
    pub eta: f64,
    /// ℓ1 weight on `W`.
    pub lambda: f64,
    pub beta_w: f64,
    pub beta_h: f64,
    pub stop_ratio: f64,
    pub stop_window: usize,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub seed: u64,
    /// Upper bound of the uniform initialization; `None` picks
    /// `sqrt(mean(X) / K)` so that `WH` starts near the data mean.
    pub init_scale: Option<f64>,
    /// Multiplier on the Lipschitz constants.
    pub safety: f64,
}

impl Default for TsnmfConfig {
    fn default() -> Self {
        TsnmfConfig {
            rank: 3,
            eta: 500_000.0,
            lambda: 0.0,
            beta_w: 0.0,
            beta_h: 0.0,
            stop_ratio: 0.005,
            stop_window: 5,
            max_iter: 20_000,
            n_restarts: 320,
            seed: 0,
            init_scale: None,
            safety: 1.01,
        }
    }
}

impl TsnmfConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("beta_w", self.beta_w),
            ("beta_h", self.beta_h),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        if self.rank == 0 {
            return Err(Error::Parameter("rank must be at least 1".into()));
        }
        if !(self.stop_ratio > 0.0 && self.stop_ratio < 1.0) {
            return Err(Error::Parameter("stop_ratio must lie in (0, 1)".into()));
        }
        if self.stop_window == 0 || self.max_iter == 0 || self.n_restarts == 0 {
            return Err(Error::Parameter(
                "stop_window, max_iter and n_restarts must be ≥ 1".into(),
            ));
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Parameter("init_scale must be positive".into()));
            }
        }
        if !(self.safety >= 1.0) {
            return Err(Error::Parameter("safety factor must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Individual terms of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostParts {
    pub reconstruction: f64,
    pub smoothness: f64,
    pub l1_w: f64,
    pub frob_w: f64,
    pub frob_h: f64,
}

impl CostParts {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.smoothness + self.l1_w + self.frob_w + self.frob_h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    /// `D × K` daily patterns.
    pub w: DMatrix<f64>,
    /// `K × T` activations.
    pub h: DMatrix<f64>,
    /// Total cost at initialization followed by one entry per sweep.
    pub cost_trace: Vec<f64>,
    pub cost_parts: CostParts,
    pub seed: u64,
    pub iterations: usize,
    /// False when `max_iter` ran out before the stopping rule fired.
    pub converged: bool,
}

impl NmfModel {
    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("cost trace is never empty")
    }

    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.w * &self.h
    }

    /// Mean squared reconstruction error.
    pub fn mse(&self, x: &DMatrix<f64>) -> f64 {
        self.cost_parts.reconstruction / x.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfEnsemble {
    pub models: Vec<NmfModel>,
    pub best_index: usize,
    pub mse_per_run: Vec<f64>,
}

impl NmfEnsemble {
    pub fn best(&self) -> &NmfModel {
        &self.models[self.best_index]
    }
}

/// `T × (T−1)` forward-difference operator: `(HΔ)_{k,j} = H_{k,j} − H_{k,j+1}`.
pub fn difference_matrix(t: usize) -> Result<DMatrix<f64>> {
    if t < 2 {
        return Err(Error::Parameter(format!("difference operator needs t ≥ 2, got {t}")));
    }
    let mut d = DMatrix::zeros(t, t - 1);
    for j in 0..t - 1 {
        d[(j, j)] = 1.0;
        d[(j + 1, j)] = -1.0;
    }
    Ok(d)
}

/// `HΔ` without forming `Δ`.
pub(crate) fn column_differences(h: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, t) = h.shape();
    DMatrix::from_fn(k, t.saturating_sub(1), |r, j| h[(r, j)] - h[(r, j + 1)])
}

/// `AΔᵀ` for `A` of shape `K × (T−1)`.
fn times_difference_transpose(a: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), t, |r, c| {
        let fwd = if c + 1 < t { a[(r, c)] } else { 0.0 };
        let back = if c >= 1 { a[(r, c - 1)] } else { 0.0 };
        fwd - back
    })
}

/// Spectral norm of `ΔΔᵀ`, the path-graph Laplacian on `t` nodes.
fn difference_gram_norm(t: usize) -> f64 {
    if t < 2 {
        0.0
    } else {
        2.0 + 2.0 * (std::f64::consts::PI / t as f64).cos()
    }
}

fn check_shapes(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != x.nrows() || h.ncols() != x.ncols() || w.ncols() != h.nrows() {
        return Err(Error::Parameter(format!(
            "shape mismatch: X {:?}, W {:?}, H {:?}",
            x.shape(),
            w.shape(),
            h.shape()
        )));
    }
    Ok(())
}

pub fn tsnmf_cost(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    cfg: &TsnmfConfig,
) -> Result<(f64, CostParts)> {
    check_shapes(x, w, h)?;
    let parts = cost_parts(x, w, h, cfg);
    Ok((parts.total(), parts))
}

fn cost_parts(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>, cfg: &TsnmfConfig) -> CostParts {
    let mut resid = x.clone();
    resid.gemm(-1.0, w, h, 1.0);
    CostParts {
        reconstruction: frobenius_sq(&resid),
        smoothness: cfg.eta * frobenius_sq(&column_differences(h)),
        l1_w: cfg.lambda * w.iter().map(|v| v.abs()).sum::<f64>(),
        frob_w: cfg.beta_w * frobenius_sq(w),
        frob_h: cfg.beta_h * frobenius_sq(h),
    }
}

/// Gradients of the differentiable part of the objective (everything except
/// the ℓ1 term) with respect to `W` and `H`.
pub fn smooth_gradients(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    cfg: &TsnmfConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_shapes(x, w, h)?;
    Ok((grad_w(x, w, h, &(h * h.transpose()), cfg), grad_h(x, w, h, &w.tr_mul(w), cfg)))
}

fn grad_w(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    hht: &DMatrix<f64>,
    cfg: &TsnmfConfig,
) -> DMatrix<f64> {
    (w * hht - x * h.transpose() + w * cfg.beta_w) * 2.0
}

fn grad_h(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    wtw: &DMatrix<f64>,
    cfg: &TsnmfConfig,
) -> DMatrix<f64> {
    let mut g = wtw * h - x.tr_mul(w).transpose() + h * cfg.beta_h;
    if cfg.eta > 0.0 && h.ncols() >= 2 {
        g += times_difference_transpose(&column_differences(h), h.ncols()) * cfg.eta;
    }
    g * 2.0
}

/// Decides whether the latest sweep made too little progress.
///
/// With `d_i = c_{i−1} − c_i`, fires when the latest decrease is below
/// `stop_ratio` times the mean of the last `stop_window` decreases, or when
/// those decreases sum to zero or less (no progress at all).
pub fn stopping_rule(cost_trace: &[f64], stop_ratio: f64, stop_window: usize) -> bool {
    let n = cost_trace.len();
    if stop_window == 0 || n < stop_window + 1 {
        return false;
    }
    let window = &cost_trace[n - stop_window - 1..];
    let decreases: Vec<f64> = window.windows(2).map(|p| p[0] - p[1]).collect();
    let mean = decreases.iter().sum::<f64>() / stop_window as f64;
    let latest = decreases[stop_window - 1];
    mean <= 0.0 || latest < stop_ratio * mean
}

/// Random initialization drawn from `seed`.
pub fn initial_factors(
    x: &DMatrix<f64>,
    cfg: &TsnmfConfig,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (d, t) = x.shape();
    let k = cfg.rank;
    let scale = cfg.init_scale.unwrap_or_else(|| {
        let mean = if x.is_empty() { 0.0 } else { x.mean() };
        (mean.max(0.0) / k as f64).sqrt()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |_, _| scale * rng.random::<f64>();
    let w = DMatrix::from_fn(d, k, &mut draw);
    let h = DMatrix::from_fn(k, t, &mut draw);
    (w, h)
}

pub fn palm_fit(x: &DMatrix<f64>, cfg: &TsnmfConfig, seed: u64) -> Result<NmfModel> {
    cfg.validate()?;
    check_input(x)?;
    let (w, h) = initial_factors(x, cfg, seed);
    run_palm(x, cfg, w, h, seed)
}

/// Runs PALM from given factors; the returned model carries `seed` as a label.
pub fn palm_fit_with_init(
    x: &DMatrix<f64>,
    cfg: &TsnmfConfig,
    w: DMatrix<f64>,
    h: DMatrix<f64>,
    seed: u64,
) -> Result<NmfModel> {
    cfg.validate()?;
    check_input(x)?;
    check_shapes(x, &w, &h)?;
    if w.iter().chain(h.iter()).any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("initial factors must be finite and ≥ 0".into()));
    }
    run_palm(x, cfg, w, h, seed)
}

fn check_input(x: &DMatrix<f64>) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Parameter("empty data matrix".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("data matrix has non-finite entries".into()));
    }
    if x.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain(
            "data matrix has negative entries; shift it to be nonnegative first".into(),
        ));
    }
    Ok(())
}

fn run_palm(
    x: &DMatrix<f64>,
    cfg: &TsnmfConfig,
    mut w: DMatrix<f64>,
    mut h: DMatrix<f64>,
    seed: u64,
) -> Result<NmfModel> {
    let smooth_lipschitz = cfg.eta * difference_gram_norm(x.ncols());
    let mut parts = cost_parts(x, &w, &h, cfg);
    let mut trace = vec![parts.total()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;

        let hht = &h * h.transpose();
        let c_w = (2.0 * (sym_psd_norm(&hht) + cfg.beta_w) * cfg.safety).max(f64::MIN_POSITIVE);
        let step = grad_w(x, &w, &h, &hht, cfg);
        let shrink = cfg.lambda / c_w;
        w.zip_apply(&step, |v, g| *v = (*v - g / c_w - shrink).max(0.0));

        let wtw = w.tr_mul(&w);
        let c_h = (2.0 * (sym_psd_norm(&wtw) + smooth_lipschitz + cfg.beta_h) * cfg.safety)
            .max(f64::MIN_POSITIVE);
        let step = grad_h(x, &w, &h, &wtw, cfg);
        h.zip_apply(&step, |v, g| *v = (*v - g / c_h).max(0.0));

        parts = cost_parts(x, &w, &h, cfg);
        let total = parts.total();
        if !total.is_finite() {
            return Err(Error::Numerical(format!(
                "cost became non-finite at iteration {iterations}"
            )));
        }
        trace.push(total);
        // the drop from the random start would dominate the window
        if stopping_rule(&trace[1..], cfg.stop_ratio, cfg.stop_window) {
            converged = true;
            break;
        }
    }

    Ok(NmfModel {
        w,
        h,
        cost_trace: trace,
        cost_parts: parts,
        seed,
        iterations,
        converged,
    })
}

/// Seed of restart `run`, taken from its own ChaCha stream so it does not
/// depend on how many other restarts exist or where they execute.
pub fn restart_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, run as u64)
}

/// First word of ChaCha stream `stream` keyed by `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

pub fn multistart_fit(x: &DMatrix<f64>, cfg: &TsnmfConfig) -> Result<NmfEnsemble> {
    cfg.validate()?;
    check_input(x)?;
    let results: Vec<Result<NmfModel>> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|run| {
            let seed = restart_seed(cfg.seed, run);
            palm_fit(x, cfg, seed).map_err(|e| Error::RunFailed {
                run,
                seed,
                source: Box::new(e),
            })
        })
        .collect();
    let models = results.into_iter().collect::<Result<Vec<_>>>()?;
    let best_index = models
        .iter()
        .enumerate()
        .fold(0, |best, (i, m)| {
            if m.final_cost() < models[best].final_cost() {
                i
            } else {
                best
            }
        });
    let mse_per_run = models.iter().map(|m| m.mse(x)).collect();
    Ok(NmfEnsemble {
        models,
        best_index,
        mse_per_run,
    })
}

/// Moves the norm of each pattern into its activation row: returns
/// `(W′, H′)` with unit-norm columns `w′_k = w_k/‖w_k‖` and `h′_k = ‖w_k‖·h_k`.
/// A zero pattern is kept as is and its activation set to zero.
pub fn scale_normalize(model: &NmfModel) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut w = model.w.clone();
    let mut h = model.h.clone();
    for k in 0..w.ncols() {
        let norm = w.column(k).norm();
        if norm > 0.0 {
            w.column_mut(k).unscale_mut(norm);
            h.row_mut(k).scale_mut(norm);
        } else {
            h.row_mut(k).fill(0.0);
        }
    }
    (w, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg0(rank: usize) -> TsnmfConfig {
        TsnmfConfig {
            rank,
            eta: 0.0,
            n_restarts: 1,
            ..Default::default()
        }
    }

    #[test]
    fn difference_matrix_examples() {
        let d3 = difference_matrix(3).unwrap();
        assert_eq!(d3, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 1.0, 0.0, -1.0]));
        assert_eq!(difference_matrix(2).unwrap(), DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        assert!(matches!(difference_matrix(1), Err(Error::Parameter(_))));
        let h = DMatrix::from_element(1, 5, 2.5);
        assert!((h * difference_matrix(5).unwrap()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn difference_transpose_matches_matrix() {
        let a = DMatrix::from_fn(2, 4, |r, c| (r * 7 + c * 3) as f64 - 4.0);
        let d = difference_matrix(5).unwrap();
        assert_eq!(times_difference_transpose(&a, 5), &a * d.transpose());
        let gram = &d * d.transpose();
        assert!((sym_psd_norm(&gram) - difference_gram_norm(5)).abs() < 1e-12);
    }

    #[test]
    fn cost_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let cfg = cfg0(1);
        let (total, _) = tsnmf_cost(&x, &DMatrix::zeros(2, 1), &DMatrix::zeros(1, 2), &cfg).unwrap();
        assert_eq!(total, 30.0);

        let w = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let h = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let (total, _) = tsnmf_cost(&(&w * &h), &w, &h, &cfg).unwrap();
        assert_eq!(total, 0.0);

        let x = DMatrix::identity(2, 2);
        let w = DMatrix::from_element(2, 1, 1.0);
        let h = DMatrix::from_element(1, 2, 1.0);
        let cfg = TsnmfConfig { eta: 1.0, ..cfg0(1) };
        let (total, parts) = tsnmf_cost(&x, &w, &h, &cfg).unwrap();
        assert_eq!(parts.reconstruction, 2.0);
        assert_eq!(parts.smoothness, 0.0);
        assert_eq!(total, 2.0);

        assert!(matches!(
            tsnmf_cost(&x, &DMatrix::zeros(3, 1), &h, &cfg),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn cost_parts_weights() {
        let x = DMatrix::zeros(2, 3);
        let w = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let h = DMatrix::from_row_slice(1, 3, &[1.0, 3.0, 2.0]);
        let cfg = TsnmfConfig {
            eta: 2.0,
            lambda: 3.0,
            beta_w: 0.5,
            beta_h: 0.25,
            ..cfg0(1)
        };
        let (total, p) = tsnmf_cost(&x, &w, &h, &cfg).unwrap();
        // WH = [[1,3,2],[2,6,4]]
        assert_eq!(p.reconstruction, 70.0);
        assert_eq!(p.smoothness, 2.0 * (4.0 + 1.0));
        assert_eq!(p.l1_w, 9.0);
        assert_eq!(p.frob_w, 2.5);
        assert_eq!(p.frob_h, 3.5);
        assert_eq!(total, 70.0 + 10.0 + 9.0 + 2.5 + 3.5);
    }

    #[test]
    fn stopping_rule_examples() {
        let trace = [100.0, 90.0, 81.0, 72.9, 65.61, 65.60];
        assert!(stopping_rule(&trace, 0.005, 5));
        let geometric: Vec<f64> = (0..60).map(|i| 100.0 * 0.9f64.powi(i)).collect();
        for n in 1..=geometric.len() {
            assert!(!stopping_rule(&geometric[..n], 0.005, 5));
        }
        assert!(!stopping_rule(&trace[..5], 0.005, 5));
        assert!(!stopping_rule(&[1.0], 0.005, 5));
        assert!(stopping_rule(&[3.0; 6], 0.005, 5));
    }

    #[test]
    fn rank_one_recovery() {
        let u = DMatrix::from_fn(12, 1, |i, _| 0.5 + i as f64 * 0.1);
        let v = DMatrix::from_fn(1, 8, |_, j| 1.0 + (j as f64 * 0.7).sin().abs());
        let x = &u * &v;
        let cfg = TsnmfConfig {
            stop_ratio: 1e-6,
            max_iter: 5000,
            ..cfg0(1)
        };
        let m = palm_fit(&x, &cfg, 4).unwrap();
        let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!(m.mse(&x) <= 1e-8 * mean_sq, "mse {}", m.mse(&x));
    }

    #[test]
    fn zero_data() {
        let x = DMatrix::zeros(6, 4);
        let cfg = TsnmfConfig {
            init_scale: Some(1.0),
            ..cfg0(2)
        };
        let m = palm_fit(&x, &cfg, 9).unwrap();
        assert!(m.final_cost() < 1e-12, "{}", m.final_cost());
        assert!(m.reconstruction().amax() < 1e-6);
        let m = palm_fit(&x, &cfg0(2), 9).unwrap();
        assert_eq!(m.final_cost(), 0.0);
    }

    #[test]
    fn rejects_negative_data() {
        let mut x = DMatrix::from_element(3, 3, 1.0);
        x[(0, 0)] = -0.1;
        assert!(matches!(palm_fit(&x, &cfg0(1), 0), Err(Error::Domain(_))));
        x[(0, 0)] = f64::NAN;
        assert!(matches!(palm_fit(&x, &cfg0(1), 0), Err(Error::Numerical(_))));
    }

    #[test]
    fn cost_parts_sum_to_trace_end() {
        let x = DMatrix::from_fn(9, 7, |i, j| ((i * 3 + j * 5) % 7) as f64);
        let cfg = TsnmfConfig {
            eta: 3.0,
            lambda: 0.2,
            beta_w: 0.1,
            beta_h: 0.1,
            ..cfg0(2)
        };
        let m = palm_fit(&x, &cfg, 17).unwrap();
        let last = m.final_cost();
        assert!((m.cost_parts.total() - last).abs() <= 1e-9 * last);
        assert_eq!(m.iterations + 1, m.cost_trace.len());
        assert!(m.w.iter().chain(m.h.iter()).all(|&v| v >= 0.0));
    }

    #[test]
    fn multistart_single_run_matches_palm() {
        let x = DMatrix::from_fn(8, 6, |i, j| ((i + 2 * j) % 5) as f64 + 0.5);
        let cfg = cfg0(2);
        let ens = multistart_fit(&x, &cfg).unwrap();
        let single = palm_fit(&x, &cfg, restart_seed(cfg.seed, 0)).unwrap();
        assert_eq!(ens.best_index, 0);
        assert_eq!(ens.best(), &single);
    }

    #[test]
    fn multistart_is_deterministic_and_picks_minimum() {
        let x = DMatrix::from_fn(10, 7, |i, j| ((i * j) % 4) as f64 + 0.1);
        let cfg = TsnmfConfig {
            n_restarts: 6,
            seed: 42,
            ..cfg0(2)
        };
        let a = multistart_fit(&x, &cfg).unwrap();
        let b = multistart_fit(&x, &cfg).unwrap();
        assert_eq!(a, b);
        let min = a.models.iter().map(|m| m.final_cost()).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best().final_cost(), min);
        let seeds: std::collections::HashSet<u64> = a.models.iter().map(|m| m.seed).collect();
        assert_eq!(seeds.len(), 6);
    }

    #[test]
    fn scale_normalize_examples() {
        let model = NmfModel {
            w: DMatrix::from_row_slice(2, 1, &[3.0, 4.0]),
            h: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            cost_trace: vec![0.0],
            cost_parts: CostParts::default(),
            seed: 0,
            iterations: 0,
            converged: true,
        };
        let (w, h) = scale_normalize(&model);
        assert_eq!(w.as_slice(), &[0.6, 0.8]);
        assert_eq!(h.as_slice(), &[5.0, 10.0]);

        let unit = NmfModel {
            w: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            h: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            ..model.clone()
        };
        let (w, h) = scale_normalize(&unit);
        assert_eq!(w, unit.w);
        assert_eq!(h, unit.h);

        let zero = NmfModel {
            w: DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]),
            h: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            ..model
        };
        let (w, h) = scale_normalize(&zero);
        assert_eq!(w.column(0).as_slice(), &[0.0, 0.0]);
        assert_eq!(h.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert!((&w * &h - zero.reconstruction()).amax() < 1e-12);
    }
}
