//! Property tests for the invariants every module promises.

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use echofactor::echogram::*;
use echofactor::hclust::{agglomerate, cut_tree, Linkage};
use echofactor::io::{format_f64, read_matrix_csv, write_matrix_csv};
use echofactor::model_select::*;
use echofactor::pcp::{decompose_matrix, objective, soft_threshold, PcpConfig};
use echofactor::summarize::*;
use echofactor::synth::{gen_lowrank_sparse, SynthSpec};
use echofactor::tsnmf::*;
use echofactor::DMatrix;
use proptest::prelude::*;

fn axes(n_depth: usize, n_ping: usize, n_freq: usize, n_day: usize) -> Axes {
    Axes {
        depth_axis: (0..n_depth).map(|i| 2.5 + 5.0 * i as f64).collect(),
        depth_bin_m: 5.0,
        time_axis: (0..n_ping).map(|i| 200.0 * i as f64).collect(),
        time_bin_s: 200.0,
        freq_axis: (0..n_freq).map(|f| 38.0 + 50.0 * f as f64).collect(),
        day_axis: NaiveDate::from_ymd_opt(2015, 8, 17)
            .unwrap()
            .iter_days()
            .take(n_day)
            .collect(),
    }
}

fn cube_strategy() -> impl Strategy<Value = EchogramCube> {
    (1usize..5, 1usize..5, 1usize..4, 1usize..5).prop_flat_map(|(d, p, f, t)| {
        prop::collection::vec(-150.0f64..-20.0, d * p * f * t)
            .prop_map(move |v| EchogramCube::from_values(axes(d, p, f, t), v).unwrap())
    })
}

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn sized_matrix(lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..7, 1usize..7).prop_flat_map(move |(r, c)| matrix(r, c, lo, hi))
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flatten_unflatten_round_trip(cube in cube_strategy()) {
        let m = flatten(&cube).unwrap();
        let layout = cube.layout();
        prop_assert_eq!(m.nrows(), layout.len());
        prop_assert_eq!(m.ncols(), cube.n_day());
        for t in 0..cube.n_day() {
            let images = unflatten(m.values.column(t).as_slice(), layout).unwrap();
            prop_assert_eq!(images.as_slice(), cube.day_values(t));
        }
    }

    #[test]
    fn shift_is_exact(cube in cube_strategy()) {
        let m = flatten(&cube).unwrap();
        let s = shift_nonnegative(&m).unwrap();
        prop_assert_eq!(s.values.min(), 0.0);
        prop_assert!(s.values.iter().all(|&v| v >= 0.0));
        let back = s.restored();
        for (a, b) in back.iter().zip(m.values.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn mvbs_ignores_sample_order(
        sv in prop::collection::vec(-120.0f64..-30.0, 1..12),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let t0 = NaiveDate::from_ymd_opt(2015, 8, 17).unwrap()
            .and_time(NaiveTime::from_hms_opt(1, 0, 0).unwrap());
        let grid = |values: Vec<f64>| SvGrid {
            freq_khz: vec![38.0],
            range_m: vec![1.0],
            ping_time: (0..values.len())
                .map(|i| t0 + chrono::Duration::seconds(i as i64))
                .collect::<Vec<NaiveDateTime>>(),
            sv_db: values,
        };
        let a = bin_mvbs(&grid(sv.clone()), 5.0, 200.0).unwrap();
        let mut shuffled = sv.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let b = bin_mvbs(&grid(shuffled), 5.0, 200.0).unwrap();
        prop_assert_eq!(a.values()[0].to_bits(), b.values()[0].to_bits());
        if sv.len() == 1 {
            prop_assert!((a.values()[0] - sv[0]).abs() <= 1e-12 * sv[0].abs());
        }
    }

    #[test]
    fn soft_threshold_shrinks(x in -1e3f64..1e3, tau in 0.0f64..1e3) {
        let y = soft_threshold(x, tau);
        prop_assert!(y.abs() <= x.abs());
        prop_assert!(y == 0.0 || y.signum() == x.signum());
        prop_assert_eq!(soft_threshold(x, 0.0), x);
        prop_assert!((x.abs() - y.abs() - tau.min(x.abs())).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn difference_operator_is_bitwise_exact(h in (1usize..4, 2usize..8).prop_flat_map(|(k, t)| matrix(k, t, -10.0, 10.0))) {
        let t = h.ncols();
        let hd = &h * difference_matrix(t).unwrap();
        for j in 0..t - 1 {
            for k in 0..h.nrows() {
                prop_assert_eq!(hd[(k, j)].to_bits(), (h[(k, j)] - h[(k, j + 1)]).to_bits());
            }
        }
    }

    #[test]
    fn permutation_keeps_row_multisets(x in sized_matrix(-5.0, 5.0), seed in any::<u64>()) {
        let p = permute_rows_independently(&x, seed);
        for r in 0..x.nrows() {
            let mut a: Vec<f64> = x.row(r).iter().copied().collect();
            let mut b: Vec<f64> = p.row(r).iter().copied().collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn connectivity_is_an_equivalence(h in (1usize..4, 1usize..9).prop_flat_map(|(k, t)| matrix(k, t, 0.0, 3.0))) {
        let c = connectivity_matrix(&h);
        let t = c.nrows();
        for i in 0..t {
            prop_assert_eq!(c[(i, i)], 1.0);
            for j in 0..t {
                prop_assert!(c[(i, j)] == 0.0 || c[(i, j)] == 1.0);
                prop_assert_eq!(c[(i, j)], c[(j, i)]);
                for k in 0..t {
                    if c[(i, j)] == 1.0 && c[(j, k)] == 1.0 {
                        prop_assert_eq!(c[(i, k)], 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn consensus_bounds_and_weights(
        hs in prop::collection::vec(matrix(3, 6, 0.0, 1.0), 1..5),
        errors in prop::collection::vec(0.0f64..10.0, 5),
    ) {
        let refs: Vec<&DMatrix<f64>> = hs.iter().collect();
        let e = &errors[..hs.len()];
        let c = consensus_from(&refs, e);
        prop_assert!(c.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((0..6).all(|i| c[(i, i)] == 1.0));
        prop_assert_eq!(&c, &c.transpose());
        // reordering runs leaves the consensus unchanged up to rounding
        let rev_h: Vec<&DMatrix<f64>> = refs.iter().rev().copied().collect();
        let rev_e: Vec<f64> = e.iter().rev().copied().collect();
        prop_assert!((consensus_from(&rev_h, &rev_e) - &c).amax() <= 1e-12);
    }

    #[test]
    fn cophenetic_ignores_relabeling(labels in prop::collection::vec(prop::collection::vec(0usize..3, 6), 2..4)) {
        // one-hot activations realizing each run's labels
        let onehot = |l: &Vec<usize>| DMatrix::from_fn(3, l.len(), |k, t| if l[t] == k { 1.0 } else { 0.0 });
        let relabel = |l: &Vec<usize>| l.iter().map(|v| (v + 1) % 3).collect::<Vec<_>>();
        let a: Vec<DMatrix<f64>> = labels.iter().map(onehot).collect();
        let b: Vec<DMatrix<f64>> = labels.iter().map(|l| onehot(&relabel(l))).collect();
        let e: Vec<f64> = (0..labels.len()).map(|i| i as f64).collect();
        let ca = consensus_from(&a.iter().collect::<Vec<_>>(), &e);
        let cb = consensus_from(&b.iter().collect::<Vec<_>>(), &e);
        prop_assert_eq!(&ca, &cb);
        match (cophenetic_coefficient(&ca), cophenetic_coefficient(&cb)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x, y);
                prop_assert!((-1.0..=1.0).contains(&x));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "relabeling changed definedness"),
        }
    }

    #[test]
    fn activation_distance_is_a_metric(h in (1usize..4, 2usize..9).prop_flat_map(|(k, t)| matrix(k, t, 0.0, 10.0))) {
        let d = activation_distance(&h);
        let t = d.nrows();
        for i in 0..t {
            prop_assert_eq!(d[(i, i)], 0.0);
            for j in 0..t {
                prop_assert!(d[(i, j)] >= 0.0);
                prop_assert_eq!(d[(i, j)], d[(j, i)]);
                for k in 0..t {
                    prop_assert!(d[(i, k)] <= d[(i, j)] + d[(j, k)] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn ward_tree_shape_and_nesting(h in (1usize..4, 2usize..12).prop_flat_map(|(k, t)| matrix(k, t, 0.0, 10.0))) {
        let d = activation_distance(&h);
        let t = d.nrows();
        let s = ward_cluster(&d, 1).unwrap();
        prop_assert_eq!(s.merge_tree.len(), t - 1);
        prop_assert!(s.merge_tree.windows(2).all(|w| w[1].height >= w[0].height - 1e-12));
        prop_assert_eq!(s.merge_tree.last().unwrap().size, t);
        for k in 1..t {
            let coarse = cut_tree(&s.merge_tree, t, k).unwrap();
            let fine = cut_tree(&s.merge_tree, t, k + 1).unwrap();
            prop_assert_eq!(coarse.iter().max().unwrap() + 1, k);
            for i in 0..t {
                for j in 0..t {
                    if fine[i] == fine[j] {
                        prop_assert_eq!(coarse[i], coarse[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn ward_commutes_with_day_order(
        h in (1usize..4, 3usize..10).prop_flat_map(|(k, t)| matrix(k, t, 0.0, 10.0)),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let t = h.ncols();
        let k = k.min(t);
        let mut perm: Vec<usize> = (0..t).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let hp = DMatrix::from_fn(h.nrows(), t, |r, c| h[(r, perm[c])]);
        let a = ward_cluster(&activation_distance(&h), k).unwrap().labels;
        let b = ward_cluster(&activation_distance(&hp), k).unwrap().labels;
        let mut back = vec![0; t];
        for (c, &p) in perm.iter().enumerate() {
            back[p] = b[c];
        }
        prop_assert!(same_partition(&a, &back));
    }

    #[test]
    fn average_linkage_heights_monotone(h in (1usize..3, 3usize..9).prop_flat_map(|(k, t)| matrix(k, t, 0.0, 5.0))) {
        let merges = agglomerate(&activation_distance(&h), Linkage::Average).unwrap();
        prop_assert!(merges.windows(2).all(|w| w[1].height >= w[0].height - 1e-12));
    }

    #[test]
    fn stopping_rule_needs_history(trace in prop::collection::vec(0.0f64..100.0, 0..6)) {
        prop_assert!(!stopping_rule(&trace, 0.005, 5));
    }

    #[test]
    fn csv_numbers_round_trip(m in sized_matrix(-1e6, 1e6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        prop_assert_eq!(read_matrix_csv(&path, false).unwrap(), m);
    }

    #[test]
    fn number_format_is_lossless(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn palm_descends_and_parts_add_up(
        x in (2usize..8, 2usize..8).prop_flat_map(|(d, t)| matrix(d, t, 0.0, 4.0)),
        rank in 1usize..4,
        eta in prop::sample::select(vec![0.0, 0.1, 10.0, 1e3]),
        lambda in prop::sample::select(vec![0.0, 0.05]),
        beta in prop::sample::select(vec![0.0, 0.1]),
        seed in any::<u64>(),
    ) {
        let cfg = TsnmfConfig {
            rank, eta, lambda, beta_w: beta, beta_h: beta,
            max_iter: 300, n_restarts: 1, seed,
            ..Default::default()
        };
        let m = palm_fit(&x, &cfg, seed).unwrap();
        prop_assert!(m.w.iter().chain(m.h.iter()).all(|&v| v >= 0.0));
        prop_assert!(m.cost_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let total = m.cost_parts.total();
        prop_assert!((total - m.final_cost()).abs() <= 1e-9 * total.abs().max(1.0));
        let (check, _) = tsnmf_cost(&x, &m.w, &m.h, &cfg).unwrap();
        prop_assert!((check - m.final_cost()).abs() <= 1e-9 * check.abs().max(1.0));
    }

    #[test]
    fn scale_normalize_keeps_the_product(
        x in (2usize..8, 2usize..8).prop_flat_map(|(d, t)| matrix(d, t, 0.0, 4.0)),
        seed in any::<u64>(),
    ) {
        let cfg = TsnmfConfig { rank: 2, eta: 1.0, max_iter: 50, n_restarts: 1, ..Default::default() };
        let m = palm_fit(&x, &cfg, seed).unwrap();
        let (w, h) = scale_normalize(&m);
        prop_assert!((&w * &h - m.reconstruction()).amax() <= 1e-12 * m.reconstruction().amax().max(1.0));
        for k in 0..w.ncols() {
            let n = w.column(k).norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn pcp_is_feasible(x in (3usize..12, 3usize..12).prop_flat_map(|(d, t)| matrix(d, t, -3.0, 3.0))) {
        let r = decompose_matrix(&x, &PcpConfig::default()).unwrap();
        prop_assert!(r.converged);
        let resid = (&x - &r.low_rank - &r.sparse).norm() / x.norm();
        prop_assert!(resid <= PcpConfig::default().tol);
    }

    // On unstructured matrices the fast penalty schedule can settle a few
    // percent above the optimum, so optimality is checked where PCP applies.
    #[test]
    fn pcp_beats_trivial_points(
        d in 20usize..40,
        t in 10usize..20,
        rank in 1usize..4,
        seed in any::<u64>(),
    ) {
        let spec = SynthSpec { n_depth: d, n_ping: 1, n_freq: 1, n_day: t, rank, sparsity: 0.05, seed, ..Default::default() };
        let x = gen_lowrank_sparse(&spec).unwrap().x;
        let r = decompose_matrix(&x, &PcpConfig::default()).unwrap();
        prop_assert!(r.converged);
        let zero = DMatrix::zeros(x.nrows(), x.ncols());
        let f = r.objective().unwrap();
        prop_assert!(f <= objective(&x, &zero, r.gamma).unwrap() + 1e-9);
        prop_assert!(f <= objective(&zero, &x, r.gamma).unwrap() + 1e-9);
    }
}
