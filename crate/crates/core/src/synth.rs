//! Synthetic ground truth for exercising the solvers without field data.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::echogram::{Axes, EchogramCube, Layout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_depth: usize,
    pub n_ping: usize,
    pub n_freq: usize,
    pub n_day: usize,
    /// True rank `K₀`.
    pub rank: usize,
    /// Fraction of entries hit by sparse corruption.
    pub sparsity: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Step scale of the random walks driving the activations.
    pub smoothness: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_depth: 20,
            n_ping: 24,
            n_freq: 3,
            n_day: 40,
            rank: 3,
            sparsity: 0.0,
            noise_sigma: 0.0,
            smoothness: 0.15,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn layout(&self) -> Layout {
        Layout::new(self.n_depth, self.n_ping, self.n_freq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_depth == 0 || self.n_ping == 0 || self.n_freq == 0 || self.n_day == 0 {
            return Err(Error::Parameter("all dimensions must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::Parameter("sparsity must lie in [0, 1]".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.smoothness >= 0.0) {
            return Err(Error::Parameter("noise and smoothness scales must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LowRankSparse {
    pub l0: DMatrix<f64>,
    pub s0: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

/// `L₀ = ABᵀ` with standard normal `A` (`D × K₀`) and `B` (`T × K₀`), plus
/// `S₀` supported on `round(sparsity · D · T)` uniformly chosen entries with
/// values uniform on `[−5m, 5m]`, `m = max|L₀|` (1 when `L₀ = 0`).
pub fn gen_lowrank_sparse(spec: &SynthSpec) -> Result<LowRankSparse> {
    spec.validate()?;
    let d = spec.layout().len();
    let t = spec.n_day;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = DMatrix::<f64>::from_fn(d, spec.rank, |_, _| StandardNormal.sample(&mut rng));
    let b = DMatrix::<f64>::from_fn(t, spec.rank, |_, _| StandardNormal.sample(&mut rng));
    let l0: DMatrix<f64> = a * b.transpose();
    let s0 = sparse_corruption(&l0, spec.sparsity, &mut rng);
    Ok(LowRankSparse {
        x: &l0 + &s0,
        l0,
        s0,
    })
}

/// Sparse outliers sized relative to `l0`, on an exact-count random support.
pub fn sparse_corruption(l0: &DMatrix<f64>, sparsity: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let (d, t) = l0.shape();
    let count = (sparsity * (d * t) as f64).round() as usize;
    let mag = match l0.amax() {
        m if m > 0.0 => 5.0 * m,
        _ => 5.0,
    };
    let mut s0 = DMatrix::zeros(d, t);
    let mut support: Vec<usize> = rand::seq::index::sample(rng, d * t, count).into_vec();
    support.sort_unstable();
    for idx in support {
        // a drawn zero would shrink the support; redraw
        let mut v = 0.0;
        while v == 0.0 {
            v = rng.random_range(-mag..=mag);
        }
        s0[idx] = v;
    }
    s0
}

#[derive(Debug, Clone)]
pub struct PatternedEchogram {
    /// `D × K₀` true daily patterns.
    pub w0: DMatrix<f64>,
    /// `K₀ × T` true activations.
    pub h0: DMatrix<f64>,
    /// `W₀H₀` plus clipped noise, as a `D × T` matrix.
    pub matrix: DMatrix<f64>,
    pub cube: EchogramCube,
}

const FREQS_KHZ: [f64; 5] = [38.0, 70.0, 120.0, 200.0, 333.0];

/// Frequency response of pattern shape `k` at frequency index `f`.
fn freq_response(k: usize, f: usize) -> f64 {
    const TABLE: [[f64; 3]; 3] = [[1.0, 0.7, 0.5], [0.6, 1.0, 0.8], [0.8, 0.9, 1.0]];
    TABLE[k % 3][f % 3]
}

/// Intensity of pattern `k` at normalized depth `z ∈ [0,1]` (0 = shallow)
/// and time of day `tau ∈ [0,1)`.
fn pattern_shape(k: usize, z: f64, tau: f64) -> f64 {
    let gauss = |x: f64, s: f64| (-(x / s).powi(2)).exp();
    match k {
        // migration band: shallow at night, deep around noon
        0 => {
            let center = 0.15 + 0.6 * (0.5 - 0.5 * (2.0 * std::f64::consts::PI * tau).cos());
            gauss(z - center, 0.08)
        }
        // fixed-depth layer
        1 => gauss(z - 0.5, 0.05),
        // daytime midwater aggregation
        2 => gauss(z - 0.3, 0.1) * gauss(tau - 0.5, 0.12),
        // further layers at scattered depths
        _ => gauss(z - (0.2 + 0.6 * ((k as f64 * 0.37).fract())), 0.05),
    }
}

/// Axes for a synthetic cube: 5 m depth bins, pings spread evenly over the
/// day, the first `n_freq` of a standard frequency list, days from 2015-08-17.
pub fn synthetic_axes(spec: &SynthSpec) -> Axes {
    let layout = spec.layout();
    Axes {
        depth_axis: (0..layout.n_depth).map(|i| 2.5 + 5.0 * i as f64).collect(),
        depth_bin_m: 5.0,
        time_axis: (0..layout.n_ping)
            .map(|i| i as f64 * 86_400.0 / layout.n_ping as f64)
            .collect(),
        time_bin_s: 86_400.0 / layout.n_ping as f64,
        freq_axis: (0..layout.n_freq)
            .map(|f| FREQS_KHZ.get(f).copied().unwrap_or(100.0 * f as f64))
            .collect(),
        day_axis: NaiveDate::from_ymd_opt(2015, 8, 17)
            .expect("valid date")
            .iter_days()
            .take(spec.n_day)
            .collect(),
    }
}

/// Patterns built from a migration band, a fixed layer and a daytime blob,
/// activated by nonnegative random walks.
pub fn gen_patterned_echogram(spec: &SynthSpec) -> Result<PatternedEchogram> {
    spec.validate()?;
    let layout = spec.layout();
    let (k0, t) = (spec.rank, spec.n_day);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut w0 = DMatrix::zeros(layout.len(), k0);
    for k in 0..k0 {
        for f in 0..layout.n_freq {
            for p in 0..layout.n_ping {
                let tau = p as f64 / layout.n_ping as f64;
                for d in 0..layout.n_depth {
                    let z = d as f64 / (layout.n_depth.max(2) - 1) as f64;
                    w0[(layout.index(d, p, f), k)] = freq_response(k, f) * pattern_shape(k, z, tau);
                }
            }
        }
    }

    let mut h0 = DMatrix::zeros(k0, t);
    for k in 0..k0 {
        let mut level = 0.5 + rng.random::<f64>();
        for j in 0..t {
            if j > 0 {
                let step: f64 = StandardNormal.sample(&mut rng);
                level = (level + spec.smoothness * step).max(0.0);
            }
            h0[(k, j)] = level;
        }
    }

    let mut matrix = &w0 * &h0;
    if spec.noise_sigma > 0.0 {
        matrix.apply(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v = (*v + spec.noise_sigma * e).max(0.0);
        });
    }

    let axes = synthetic_axes(spec);
    let cube = EchogramCube::from_values(axes, matrix.as_slice().to_vec())?;
    Ok(PatternedEchogram {
        w0,
        h0,
        matrix,
        cube,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::echogram::flatten;
    use crate::linalg::svd;

    fn numerical_rank(m: &DMatrix<f64>) -> usize {
        let s = svd(m, false).unwrap().singular_values;
        let top = s.max();
        s.iter().filter(|&&v| v > 1e-9 * top).count()
    }

    fn flat(d: usize, t: usize, rank: usize, sparsity: f64) -> SynthSpec {
        SynthSpec {
            n_depth: d,
            n_ping: 1,
            n_freq: 1,
            n_day: t,
            rank,
            sparsity,
            ..Default::default()
        }
    }

    #[test]
    fn lowrank_sparse_examples() {
        let g = gen_lowrank_sparse(&flat(30, 10, 2, 0.0)).unwrap();
        assert_eq!(g.s0, DMatrix::zeros(30, 10));
        assert_eq!(g.x, g.l0);

        let g = gen_lowrank_sparse(&flat(30, 10, 0, 0.1)).unwrap();
        assert_eq!(g.l0, DMatrix::zeros(30, 10));
        assert_eq!(g.x, g.s0);

        let g = gen_lowrank_sparse(&flat(500, 60, 3, 0.05)).unwrap();
        assert_eq!(numerical_rank(&g.l0), 3);
        assert_eq!(g.s0.iter().filter(|&&v| v != 0.0).count(), 1500);
        let m = g.l0.amax();
        assert!(g.s0.iter().all(|v| v.abs() <= 5.0 * m));
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = flat(40, 12, 3, 0.05);
        assert_eq!(gen_lowrank_sparse(&spec).unwrap().x, gen_lowrank_sparse(&spec).unwrap().x);
        let spec = SynthSpec {
            noise_sigma: 0.01,
            ..Default::default()
        };
        let a = gen_patterned_echogram(&spec).unwrap();
        let b = gen_patterned_echogram(&spec).unwrap();
        assert_eq!(a.cube, b.cube);
        assert!(a.matrix.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn patterned_rank_one_without_noise() {
        let spec = SynthSpec {
            rank: 1,
            ..Default::default()
        };
        let g = gen_patterned_echogram(&spec).unwrap();
        let m = flatten(&g.cube).unwrap();
        assert_eq!(numerical_rank(&m.values), 1);
    }

    #[test]
    fn zero_step_gives_constant_activations() {
        let spec = SynthSpec {
            smoothness: 0.0,
            ..Default::default()
        };
        let g = gen_patterned_echogram(&spec).unwrap();
        for k in 0..3 {
            let row = g.h0.row(k);
            assert!(row.iter().all(|&v| v == row[0]));
        }
    }

    #[test]
    fn validation() {
        assert!(gen_lowrank_sparse(&flat(0, 3, 1, 0.0)).is_err());
        assert!(gen_lowrank_sparse(&flat(3, 3, 1, 1.5)).is_err());
    }
}
