//! Rank and smoothness selection.
//!
//! * MSE versus rank, for the data and for a copy whose rows are shuffled
//!   independently across days (which keeps each pixel's distribution but
//!   destroys the co-variation between pixels).
//! * Weighted consensus of the argmax cluster assignments across restarts, and
//!   its cophenetic correlation coefficient.
//! * L-curve of reconstruction error against smoothness cost over `η`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hclust::{self, Linkage};
use crate::linalg::{frobenius_sq, median, quantile};
use crate::tsnmf::{self, column_differences, NmfEnsemble, TsnmfConfig};

/// Stream used to derive the permutation seed of a rank scan from the master seed.
const PERMUTATION_STREAM: u64 = u64::MAX;

/// Shuffles each row with its own uniformly random permutation.
pub fn permute_rows_independently(x: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.clone();
    let mut row = vec![0.0; x.ncols()];
    for r in 0..x.nrows() {
        row.iter_mut().zip(x.row(r).iter()).for_each(|(d, s)| *d = *s);
        row.shuffle(&mut rng);
        for (c, v) in row.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankScanReport {
    pub ranks: Vec<usize>,
    /// Median MSE on the data, minus the median at the first rank.
    pub mse_data: Vec<f64>,
    /// Median MSE on the permuted data, minus its own median at the first rank.
    pub mse_perm: Vec<f64>,
    pub mse_data_raw: Vec<f64>,
    pub mse_perm_raw: Vec<f64>,
    /// Allowed upward wiggle of `mse_data` between consecutive ranks:
    /// twice the interquartile range of the runs at each rank.
    pub noise_tolerance: Vec<f64>,
    pub n_runs: usize,
    /// Cophenetic coefficient of the data runs; `None` where undefined
    /// (a single cluster, or fewer than three days).
    pub cophenetic: Vec<Option<f64>>,
    /// First rank after which the data curve drops more slowly than the
    /// permuted one, both measured relative to their first-rank error.
    /// Advisory only.
    pub knee: Option<usize>,
}

pub fn mse_rank_scan(x: &DMatrix<f64>, ranks: &[usize], cfg: &TsnmfConfig) -> Result<RankScanReport> {
    if ranks.is_empty() {
        return Err(Error::Parameter("rank list is empty".into()));
    }
    if ranks[0] == 0 || ranks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("ranks must be positive and strictly ascending".into()));
    }
    let permuted = permute_rows_independently(x, tsnmf::derive_seed(cfg.seed, PERMUTATION_STREAM));

    let mut data_raw = Vec::with_capacity(ranks.len());
    let mut perm_raw = Vec::with_capacity(ranks.len());
    let mut noise_tolerance = Vec::with_capacity(ranks.len());
    let mut cophenetic = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let rank_cfg = TsnmfConfig { rank, ..cfg.clone() };
        let data = tsnmf::multistart_fit(x, &rank_cfg)?;
        let perm = tsnmf::multistart_fit(&permuted, &rank_cfg)?;
        data_raw.push(median(&data.mse_per_run));
        perm_raw.push(median(&perm.mse_per_run));
        let iqr = quantile(&data.mse_per_run, 0.75) - quantile(&data.mse_per_run, 0.25);
        noise_tolerance.push(2.0 * iqr);
        cophenetic.push(cophenetic_coefficient(&weighted_consensus(&data)).ok());
    }

    let mse_data: Vec<f64> = data_raw.iter().map(|v| v - data_raw[0]).collect();
    let mse_perm: Vec<f64> = perm_raw.iter().map(|v| v - perm_raw[0]).collect();
    // compare drops as fractions of each curve's first-rank error, so the
    // permuted curve's larger overall scale does not swamp the comparison
    let frac = |curve: &[f64], i: usize| {
        if curve[0] > 0.0 {
            (curve[i] - curve[i + 1]) / curve[0]
        } else {
            0.0
        }
    };
    let knee = (0..ranks.len().saturating_sub(1))
        .find(|&i| frac(&data_raw, i) < frac(&perm_raw, i))
        .map(|i| ranks[i]);

    Ok(RankScanReport {
        ranks: ranks.to_vec(),
        mse_data,
        mse_perm,
        mse_data_raw: data_raw,
        mse_perm_raw: perm_raw,
        noise_tolerance,
        n_runs: cfg.n_restarts,
        cophenetic,
        knee,
    })
}

/// Index of the largest activation per day; ties go to the lowest index.
pub fn assignments(h: &DMatrix<f64>) -> Vec<usize> {
    (0..h.ncols())
        .map(|t| {
            h.column(t)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        })
        .collect()
}

/// `C_ij = 1` when days `i` and `j` share their argmax component.
pub fn connectivity_matrix(h: &DMatrix<f64>) -> DMatrix<f64> {
    let labels = assignments(h);
    let t = labels.len();
    DMatrix::from_fn(t, t, |i, j| if labels[i] == labels[j] { 1.0 } else { 0.0 })
}

/// Consensus of the runs' connectivity matrices, weighted by
/// `(max e − e_n) / (max e − min e)` where `e_n` is run `n`'s MSE.
pub fn weighted_consensus(ensemble: &NmfEnsemble) -> DMatrix<f64> {
    let hs: Vec<&DMatrix<f64>> = ensemble.models.iter().map(|m| &m.h).collect();
    consensus_from(&hs, &ensemble.mse_per_run)
}

pub fn consensus_from(hs: &[&DMatrix<f64>], errors: &[f64]) -> DMatrix<f64> {
    assert!(!hs.is_empty() && hs.len() == errors.len(), "one error per run required");
    let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = if max > min {
        errors.iter().map(|e| (max - e) / (max - min)).collect()
    } else {
        vec![1.0; errors.len()]
    };
    let total: f64 = weights.iter().sum();
    let t = hs[0].ncols();
    let mut c = DMatrix::zeros(t, t);
    for (h, w) in hs.iter().zip(&weights) {
        if *w > 0.0 {
            c += connectivity_matrix(h) * (*w / total);
        }
    }
    // the weights sum to one, but rounding can leave the diagonal off by an ulp
    for i in 0..t {
        c[(i, i)] = 1.0;
    }
    c.apply(|v| *v = v.clamp(0.0, 1.0));
    c
}

/// Pearson correlation between `1 − C̄` and the cophenetic distances of its
/// average-linkage hierarchy, over all pairs `i < j`.
pub fn cophenetic_coefficient(consensus: &DMatrix<f64>) -> Result<f64> {
    cophenetic_coefficient_with(consensus, Linkage::Average)
}

pub fn cophenetic_coefficient_with(consensus: &DMatrix<f64>, linkage: Linkage) -> Result<f64> {
    let t = consensus.nrows();
    if t < 3 {
        return Err(Error::UndefinedCoefficient(format!(
            "need at least 3 observations, got {t}"
        )));
    }
    let dissim = consensus.map(|c| 1.0 - c);
    let merges = hclust::agglomerate(&dissim, linkage)?;
    let coph = hclust::cophenetic_distances(&merges, t);

    let mut a = Vec::with_capacity(t * (t - 1) / 2);
    let mut b = Vec::with_capacity(a.capacity());
    for i in 0..t {
        for j in i + 1..t {
            a.push(dissim[(i, j)]);
            b.push(coph[(i, j)]);
        }
    }
    if a.iter().all(|&v| v == a[0]) {
        return Err(Error::DegenerateCorrelation("dissimilarities are constant".into()));
    }
    if a == b {
        return Ok(1.0);
    }
    pearson(&a, &b)
        .map(|r| r.clamp(-1.0, 1.0))
        .ok_or_else(|| Error::DegenerateCorrelation("cophenetic distances are constant".into()))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LCurveReport {
    pub etas: Vec<f64>,
    /// Median `‖X − WH‖²_F` over restarts.
    pub recon_cost: Vec<f64>,
    /// Median `‖HΔ‖²_F` over restarts (not multiplied by `η`).
    pub smooth_cost: Vec<f64>,
    /// Signed curvature of the log-log curve at each point (0 at the ends).
    pub curvature: Vec<f64>,
    pub selected_eta: f64,
}

pub fn l_curve_scan(x: &DMatrix<f64>, etas: &[f64], cfg: &TsnmfConfig) -> Result<LCurveReport> {
    if etas.is_empty() {
        return Err(Error::Parameter("eta list is empty".into()));
    }
    if etas.iter().any(|&e| !(e > 0.0 && e.is_finite())) || etas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("etas must be positive and strictly ascending".into()));
    }
    let mut recon_cost = Vec::with_capacity(etas.len());
    let mut smooth_cost = Vec::with_capacity(etas.len());
    for &eta in etas {
        let eta_cfg = TsnmfConfig { eta, ..cfg.clone() };
        let ens = tsnmf::multistart_fit(x, &eta_cfg)?;
        let recon: Vec<f64> = ens.models.iter().map(|m| m.cost_parts.reconstruction).collect();
        let smooth: Vec<f64> = ens
            .models
            .iter()
            .map(|m| frobenius_sq(&column_differences(&m.h)))
            .collect();
        recon_cost.push(median(&recon));
        smooth_cost.push(median(&smooth));
    }
    let curvature = log_log_curvature(&recon_cost, &smooth_cost);
    let corner = curvature
        .iter()
        .enumerate()
        .skip(1)
        .take(etas.len().saturating_sub(2))
        .filter(|(_, c)| c.is_finite())
        .fold(None::<(usize, f64)>, |best, (i, &c)| match best {
            Some((_, b)) if b >= c => best,
            _ => Some((i, c)),
        })
        .map_or(0, |(i, _)| i);
    Ok(LCurveReport {
        etas: etas.to_vec(),
        recon_cost,
        smooth_cost,
        curvature,
        selected_eta: etas[corner],
    })
}

/// Signed Menger curvature of the polyline `(log10 recon, log10 smooth)` at
/// each interior point. Positive values turn counter-clockwise, which is the
/// direction of an L-curve corner when walking toward larger `η`.
pub fn log_log_curvature(recon: &[f64], smooth: &[f64]) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = recon
        .iter()
        .zip(smooth)
        .map(|(r, s)| (r.max(f64::MIN_POSITIVE).log10(), s.max(f64::MIN_POSITIVE).log10()))
        .collect();
    let n = pts.len();
    let mut out = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        let (a, b, c) = (pts[i - 1], pts[i], pts[i + 1]);
        let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
        let ab = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let bc = ((c.0 - b.0).powi(2) + (c.1 - b.1).powi(2)).sqrt();
        let ca = ((a.0 - c.0).powi(2) + (a.1 - c.1).powi(2)).sqrt();
        let denom = ab * bc * ca;
        out[i] = if denom > 0.0 { 2.0 * cross / denom } else { 0.0 };
    }
    out
}
