use ffm_core::batch::FunctionBatch;
use ffm_core::dft::{irfft, rfft};
use ffm_core::eval::{evaluate, pointwise_stats, stats_mse};
use ffm_core::gaussian::{GaussianMeasure, Grid, KernelSpec};
use ffm_core::math::log_sum_exp;
use ffm_core::path::{conditional_flow, MarginalOracle, PathParametrization};
use ffm_core::rng;
use ffm_core::tensor::{add, broadcast_to, linear, matmul, Tensor};
use proptest::prelude::*;

fn batch(count: usize, n: usize, seed: u64) -> FunctionBatch {
    let mut r = rng::seeded(seed);
    let mut data = vec![0.0; count * n];
    rng::fill_normal(&mut r, &mut data);
    FunctionBatch::new(n, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_round_trip_any_length(n in 1usize..200, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let x: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
        let y = irfft(&rfft(&x).unwrap(), n).unwrap();
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "n = {n}: {err:e}");
    }

    #[test]
    fn responsibilities_form_a_distribution(
        t in 0.0f64..0.999,
        w in 0.05f64..0.95,
        scale in 0.1f64..5.0,
        seed in any::<u64>(),
    ) {
        let grid = Grid::unit(16).unwrap();
        let m = GaussianMeasure::new(grid, KernelSpec::reference_1d()).unwrap();
        let atoms = batch(2, 16, seed);
        for path in [PathParametrization::default_ot(), PathParametrization::default_vp()] {
            let oracle = MarginalOracle::new(&m, path, &atoms, &[w, 1.0 - w]).unwrap();
            let g: Vec<f64> = m.sample(1, seed ^ 1).row(0).iter().map(|v| v * scale).collect();
            let r = oracle.responsibilities(t, &g).unwrap();
            prop_assert!(r.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn statistics_ignore_sample_order(seed in any::<u64>(), count in 4usize..30) {
        let real = batch(40, 8, seed);
        let gen = batch(count, 8, seed.wrapping_add(1));
        let perm = rng::permutation(&mut rng::seeded(seed), count);
        let shuffled = gen.select(&perm);
        let a = stats_mse(&pointwise_stats(&real).unwrap(), &pointwise_stats(&gen).unwrap()).unwrap();
        let b = stats_mse(&pointwise_stats(&real).unwrap(), &pointwise_stats(&shuffled).unwrap()).unwrap();
        for (x, y) in a.as_array().iter().zip(b.as_array()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn a_set_compared_with_itself_scores_zero(seed in any::<u64>()) {
        let b = batch(25, 12, seed);
        let e = evaluate(&b, &b).unwrap();
        prop_assert!(e.stats.as_array().iter().all(|v| *v == 0.0));
        prop_assert_eq!(e.kde, 0.0);
        prop_assert_eq!(e.spectrum, 0.0);
    }

    #[test]
    fn refined_grids_contain_the_coarse_points(n in 2usize..60, k in 1usize..6) {
        let coarse = Grid::unit(n).unwrap();
        let fine = coarse.refine(k).unwrap();
        prop_assert_eq!(coarse.refinement_stride(&fine), Some(k));
        for j in 0..n {
            prop_assert!((fine.point(k * j) - coarse.point(j)).abs() < 1e-12);
            prop_assert_eq!(coarse.index_of(coarse.point(j)), Some(j));
        }
    }

    #[test]
    fn fused_linear_matches_matmul_plus_bias(rows in 1usize..9, k in 1usize..7, m in 1usize..7, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let mut draw = |len: usize| (0..len).map(|_| rng::normal(&mut r)).collect::<Vec<_>>();
        let x = Tensor::new([rows, k], draw(rows * k)).unwrap();
        let w = Tensor::new([k, m], draw(k * m)).unwrap();
        let b = Tensor::new([m], draw(m)).unwrap();
        let fused = linear(&x, &w, &b).unwrap();
        let plain = add(&matmul(&x, &w).unwrap(), &broadcast_to(&b, &[rows, m]).unwrap()).unwrap();
        prop_assert!(fused.max_abs_diff(&plain) < 1e-12);
    }

    #[test]
    fn log_sum_exp_is_shift_equivariant(xs in prop::collection::vec(-50.0f64..50.0, 1..10), c in -500.0f64..500.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&xs) - c).abs() < 1e-9);
    }
}

#[test]
fn ot_flow_reaches_the_target_up_to_terminal_noise() {
    let f = batch(1, 32, 1);
    let g0 = batch(1, 32, 2);
    let path = PathParametrization::default_ot();
    let end = conditional_flow(path, f.row(0), 1.0, g0.row(0)).unwrap();
    let start = conditional_flow(path, f.row(0), 0.0, g0.row(0)).unwrap();
    for j in 0..32 {
        assert!((end[j] - (f.row(0)[j] + 1e-4 * g0.row(0)[j])).abs() < 1e-14);
        assert_eq!(start[j], g0.row(0)[j]);
    }
}
