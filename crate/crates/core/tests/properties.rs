mod common;

use proptest::prelude::*;
use squeeze_core::channel::{build_squeeze_params, ChannelMatrix, SqueezeParams};
use squeeze_core::experiments::{random_channel, replication_rng};
use squeeze_core::info::{entropy, generalized_objective, kl_divergence, mutual_information};
use squeeze_core::rate::{matrix_rate, symmetric_rate};
use squeeze_core::select::{f_from_g, g_from_f, plan, Strategy as Plan};
use squeeze_core::solver::{alg2_step, alg3_step, solve, Method, SolverConfig};
use squeeze_core::waterfill::waterfill;

use common::{interior_channel, random_params, random_simplex};

fn channel(seed: u64, m: usize, n: usize) -> ChannelMatrix {
    random_channel(m, n, &mut replication_rng(seed, 0))
}

fn prob_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn row_vec_mul(p: &[f64], w: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    (0..w.ncols())
        .map(|j| (0..w.nrows()).map(|i| p[i] * w[(i, j)]).sum())
        .collect()
}

proptest! {
    #[test]
    fn kl_nonnegative(m in 2usize..8, seed in any::<u64>()) {
        let mut rng = replication_rng(seed, 1);
        let q = random_simplex(m, &mut rng);
        let s = random_simplex(m, &mut rng);
        prop_assert!(kl_divergence(&q, &s).unwrap().0 >= 0.0);
        prop_assert!(kl_divergence(&q, &q).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn entropy_bounded_by_log_m(q in prob_vec(5)) {
        let h = entropy(&q).unwrap().0;
        prop_assert!(h >= 0.0 && h <= 5f64.ln() + 1e-15);
    }

    #[test]
    fn mutual_information_permutation_invariant(
        seed in any::<u64>(),
        m in 2usize..5,
        n in 2usize..7,
        rot_in in 0usize..5,
        rot_out in 0usize..7,
    ) {
        let w = channel(seed, m, n);
        let p = random_simplex(m, &mut replication_rng(seed, 2));
        let rows = w.to_rows();
        let permuted: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let row = &rows[(i + rot_in) % m];
                (0..n).map(|j| row[(j + rot_out) % n]).collect()
            })
            .collect();
        let pp: Vec<f64> = (0..m).map(|i| p[(i + rot_in) % m]).collect();
        let a = mutual_information(&w, &p).unwrap().0;
        let b = mutual_information(&ChannelMatrix::new(&permuted).unwrap(), &pp).unwrap().0;
        prop_assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn waterfill_scale_invariant(
        r in prop::collection::vec(0.0f64..0.2, 4),
        x in prop::collection::vec(0.01f64..10.0, 4),
        c in 0.01f64..100.0,
    ) {
        let a = waterfill(&r, &x).unwrap();
        let cx: Vec<f64> = x.iter().map(|v| v * c).collect();
        let b = waterfill(&r, &cx).unwrap();
        prop_assert!((a.delta / c - b.delta).abs() <= 1e-12 * a.delta / c);
        for (u, v) in a.p.iter().zip(&b.p) {
            prop_assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn waterfill_monotone_in_weight(
        r in prop::collection::vec(0.0f64..0.2, 5),
        x in prop::collection::vec(0.01f64..10.0, 5),
        i in 0usize..5,
        bump in 0.0f64..5.0,
    ) {
        let a = waterfill(&r, &x).unwrap();
        let mut y = x.clone();
        y[i] += bump;
        let b = waterfill(&r, &y).unwrap();
        prop_assert!(b.p[i] >= a.p[i] - 1e-14);
        prop_assert!((b.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn squeezed_rows_and_output_identity(seed in any::<u64>(), m in 2usize..5, n in 2usize..8) {
        let w = channel(seed, m, n);
        let mut rng = replication_rng(seed, 3);
        let params = random_params(&w, &mut rng);
        for i in 0..m {
            prop_assert!((params.w_tilde.row(i).sum() - 1.0).abs() < 1e-10);
        }
        prop_assert!(params.r_plus <= w.column_min_sum() + 1e-12);
        // p̃W̃ + f = (1+f₊) pW for p ∈ Ω
        let p = random_simplex(m, &mut rng);
        let pt = params.squeeze(&p);
        let lhs = row_vec_mul(&pt, &params.w_tilde);
        let rhs = w.output_distribution(&p);
        for j in 0..n {
            prop_assert!((lhs[j] + params.f[j] - (1.0 + params.f_plus) * rhs[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_decomposition_identity(seed in any::<u64>(), m in 2usize..5, n in 2usize..8) {
        let w = channel(seed, m, n);
        let mut rng = replication_rng(seed, 4);
        let params = random_params(&w, &mut rng);
        let p = random_simplex(m, &mut rng);
        let pt = params.squeeze(&p);
        let lhs = mutual_information(&w, &p).unwrap().0;
        let gen = generalized_objective(&params.w_tilde, &params.f, &params.c, &pt).unwrap().0;
        let hf = entropy_of_weights(&params.f);
        let hw: f64 = (0..m)
            .map(|i| params.r[i] * entropy(&w.to_rows()[i]).unwrap().0)
            .sum();
        let rhs = (gen + hf) / (1.0 + params.f_plus)
            + (1.0 + params.f_plus).ln()
            + hw / (1.0 - params.r_plus);
        prop_assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn g_f_round_trip(seed in any::<u64>(), m in 2usize..5, n in 2usize..8) {
        let w = channel(seed, m, n);
        let params = random_params(&w, &mut replication_rng(seed, 5));
        let g = g_from_f(&w, &params.r, &params.f);
        let g_plus: f64 = g.iter().sum();
        prop_assert!((1.0 + g_plus - params.lambda).abs() < 1e-12);
        let f = f_from_g(&w, &params.r, &g).unwrap();
        for (a, b) in f.iter().zip(&params.f) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!(
            (params.f_plus - ((1.0 + g_plus) * (1.0 - params.r_plus) - 1.0)).abs() < 1e-12
        );
    }

    #[test]
    fn plans_validate(seed in any::<u64>(), m in 2usize..5, n in 2usize..8) {
        let w = channel(seed, m, n);
        for s in [Plan::None, Plan::LambdaOnly, Plan::auto(&w)] {
            let pl = plan(&w, s).unwrap();
            prop_assert!(build_squeeze_params(&w, &pl.r, &pl.f).is_ok());
        }
    }

    #[test]
    fn alg2_matches_alg3(seed in any::<u64>(), m in 2usize..5, n in 2usize..8) {
        let w = channel(seed, m, n);
        let mut rng = replication_rng(seed, 6);
        let params = random_params(&w, &mut rng);
        let q = random_simplex(m, &mut rng);
        let p = params.squeeze(&q);
        let a = alg2_step(&w, &params, &p).unwrap();
        let b = alg3_step(&params, &p).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            prop_assert!((u - v).abs() < 1e-10);
        }
    }
}

fn entropy_of_weights(f: &[f64]) -> f64 {
    f.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn methods_agree_on_capacity(seed in any::<u64>(), m in 2usize..4, n in 2usize..6) {
        let w = channel(seed, m, n);
        let eps = 1e-8;
        let cfg = SolverConfig { epsilon: eps, max_iters: 200_000, ..Default::default() };
        let pl = plan(&w, Plan::auto(&w)).unwrap();
        let methods = [
            Method::Aba,
            Method::Alg1 { lambda: pl.lambda },
            Method::Alg2 { r: pl.r.clone(), lambda: pl.lambda },
            Method::Alg3 { r: pl.r.clone(), f: pl.f.clone() },
        ];
        let caps: Vec<(f64, f64)> = methods
            .iter()
            .map(|meth| {
                let res = solve(&w, meth, &cfg).unwrap();
                (res.capacity_lower.0, res.capacity_upper.0)
            })
            .collect();
        let best_lower = caps.iter().map(|c| c.0).fold(f64::MIN, f64::max);
        let least_upper = caps.iter().map(|c| c.1).fold(f64::MAX, f64::min);
        prop_assert!(best_lower <= least_upper + 1e-12);
        for (lo, _) in &caps {
            prop_assert!(best_lower - lo <= 2.0 * eps);
        }
    }

    #[test]
    fn floors_respected_along_trace(seed in any::<u64>(), m in 2usize..5, n in 2usize..7) {
        let w = channel(seed, m, n);
        let params = random_params(&w, &mut replication_rng(seed, 7));
        let cfg = SolverConfig { record_trace: true, max_iters: 2_000, ..Default::default() };
        let res = solve(&w, &Method::Alg3 { r: params.r.clone(), f: params.f.clone() }, &cfg).unwrap();
        for rec in &res.trace {
            prop_assert!((rec.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (p, r) in rec.p.iter().zip(&params.r) {
                prop_assert!(p >= r);
            }
            prop_assert!(rec.gap.0 >= 0.0);
        }
    }

    #[test]
    fn rate_routes_agree(seed in any::<u64>(), m in 2usize..5, extra in 0usize..4) {
        let n = (m + extra).max(3);
        let mut rng = replication_rng(seed, 8);
        let (w, p_hat) = interior_channel(m, n, 1e-3, &mut rng).unwrap();
        let params = random_params(&w, &mut rng);
        let p_star = params.squeeze(&p_hat);
        let rep = matrix_rate(&w, &params, &p_star).unwrap();
        prop_assert!((rep.global_rate - rep.rate_direct).abs() < 1e-8);
        prop_assert!((rep.global_rate - rep.rate_power).abs() < 1e-6);
        for s in rep.row_sums() {
            prop_assert!(s.abs() < 1e-10);
        }
        // with f = 0 the eigenvalues are real and R rebuilds from the symmetric form
        let zero = build_squeeze_params(&w, &params.r, &vec![0.0; n]).unwrap();
        let rep0 = matrix_rate(&w, &zero, &p_star).unwrap();
        let sym = symmetric_rate(&zero, &p_star).unwrap();
        prop_assert!((sym.reconstruct_r0() - &rep0.rate_matrix).amax() < 1e-8);
        prop_assert!(rep0.max_imaginary < 1e-8);
    }

    #[test]
    fn rate_decreases_in_g_plus(seed in any::<u64>(), n in 3usize..7) {
        let mut rng = replication_rng(seed, 9);
        let (w, p_hat) = interior_channel(2, n, 1e-3, &mut rng).unwrap();
        let r = vec![0.0, 0.0];
        let identity = SqueezeParams::identity(&w);
        let full = squeeze_core::params_from_r_lambda(
            &w, &r, squeeze_core::select::lambda_upper_bound(&w).unwrap()).unwrap();
        let half_lambda = 0.5 * (1.0 + full.lambda);
        let half = squeeze_core::params_from_r_lambda(&w, &r, half_lambda).unwrap();
        let rates: Vec<f64> = [identity, half, full]
            .iter()
            .map(|pr| matrix_rate(&w, pr, &pr.squeeze(&p_hat)).unwrap().global_rate)
            .collect();
        prop_assert!(rates[1] <= rates[0] + 1e-12 && rates[2] <= rates[1] + 1e-12, "{rates:?}");
    }
}
