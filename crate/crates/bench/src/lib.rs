//! Shared inputs for the solver benchmarks.

use echofactor::synth::{gen_lowrank_sparse, gen_patterned_echogram, SynthSpec};
use echofactor::DMatrix;

/// `500 × 60` rank-3 matrix with 5 % sparse corruption.
pub fn pcp_input() -> DMatrix<f64> {
    let spec = SynthSpec {
        n_depth: 500,
        n_ping: 1,
        n_freq: 1,
        n_day: 60,
        rank: 3,
        sparsity: 0.05,
        seed: 11,
        ..Default::default()
    };
    gen_lowrank_sparse(&spec).expect("valid spec").x
}

/// Default-sized patterned echogram, flattened (`1440 × 40`).
pub fn nmf_input() -> DMatrix<f64> {
    let spec = SynthSpec {
        noise_sigma: 0.01,
        seed: 11,
        ..Default::default()
    };
    gen_patterned_echogram(&spec).expect("valid spec").matrix
}
