use csbp_core::closed_forms::{
    cb_laplace, cbi_exact_laplace, extinction_cdf, prop4_sup_law, qs_limit, thm2_exit, u_t, ExitBranch, XiExponents,
};
use csbp_core::conditioned::{weighted_sample, HKind};
use csbp_core::lamperti::{levy_from_pssmp, pssmp_from_levy, simulate_cb};
use csbp_core::mc::{effective_sample_size, MCEstimate};
use csbp_core::rng::path_rng;
use csbp_core::special_functions::{gamma, mittag_leffler, mittag_leffler_partial, scale_w};
use csbp_core::stable_levy::{phi_inverse, psi, simulate_path, Path, StableParams, StepRule, Stopping};
use csbp_core::verify::{IdentitySpec, SuiteSettings};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = StableParams> {
    (1.05f64..=2.0, 0.1f64..5.0).prop_map(|(a, c)| StableParams::new(a, c).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn phi_inverse_inverts_psi(p in params(), log_l in -6.0f64..6.0) {
        let l = 10f64.powf(log_l);
        prop_assert!(rel(phi_inverse(&p, psi(&p, l).unwrap()).unwrap(), l) < 1e-12);
    }

    #[test]
    fn scale_w_at_zero_rate_is_a_power(p in params(), x in 0.01f64..20.0) {
        let want = x.powf(p.alpha - 1.0) / (p.c_plus * gamma(p.alpha));
        prop_assert!(rel(scale_w(&p, 0.0, x).unwrap(), want) < 1e-10);
    }

    #[test]
    fn scale_w_is_nondecreasing(p in params(), q in 0.0f64..3.0, x in 0.0f64..3.0, dx in 0.0f64..1.0) {
        prop_assume!(q / p.c_plus * (x + dx).powf(p.alpha) <= 30.0);
        prop_assert!(scale_w(&p, q, x + dx).unwrap() >= scale_w(&p, q, x).unwrap());
        prop_assert_eq!(scale_w(&p, q, -x - 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn mittag_leffler_bound_covers_the_tail(alpha in 1.05f64..=2.0, x in -20.0f64..20.0) {
        let r = mittag_leffler(alpha, x).unwrap();
        // far more than twice the terms the series needs on this range
        let refined = mittag_leffler_partial(alpha, x, 2000, false);
        prop_assert!((refined - r.value).abs() <= r.abs_error_estimate + 4.0 * f64::EPSILON * refined.abs().max(1.0));
    }

    #[test]
    fn u_t_is_a_semigroup(p in params(), t in 0.01f64..5.0, s in 0.01f64..5.0, l in 0.01f64..20.0) {
        let two_step = u_t(&p, t, u_t(&p, s, l).unwrap()).unwrap();
        prop_assert!(rel(two_step, u_t(&p, t + s, l).unwrap()) < 1e-12);
    }

    #[test]
    fn exit_branches_sum_to_at_most_one(p in params(), a in 0.1f64..10.0, frac in 0.01f64..0.99, q in 0.0f64..3.0) {
        prop_assume!(q / p.c_plus * a.powf(p.alpha) <= 30.0);
        let x = frac * a;
        let up = thm2_exit(&p, x, a, q, ExitBranch::UpFirst).unwrap();
        let down = thm2_exit(&p, x, a, q, ExitBranch::ExtinctFirst).unwrap();
        prop_assert!(up >= 0.0 && down >= 0.0);
        if q == 0.0 {
            prop_assert!((up + down - 1.0).abs() < 1e-12);
        }
        prop_assert!(up + down <= 1.0 + 1e-12);
    }

    #[test]
    fn laplace_transforms_are_monotone_and_convex(
        p in params(), x in 0.1f64..5.0, t in 0.05f64..5.0, l in 0.05f64..5.0, h in 0.01f64..1.0,
    ) {
        let fs: [&dyn Fn(f64) -> f64; 3] = [
            &|l| cb_laplace(&p, x, t, l).unwrap(),
            &|l| cbi_exact_laplace(&p, x, t, l).unwrap(),
            &|l| qs_limit(&p, l).unwrap(),
        ];
        for f in fs {
            let (a, b, c) = (f(l), f(l + h), f(l + 2.0 * h));
            let tol = 1e-12 * a.abs().max(1.0);
            prop_assert!(b <= a + tol);
            prop_assert!(a - 2.0 * b + c >= -1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn extinction_cdf_is_a_distribution(p in params(), x in 0.01f64..10.0, t in 0.0f64..100.0, dt in 0.0f64..10.0) {
        let a = extinction_cdf(&p, x, t).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(extinction_cdf(&p, x, t + dt).unwrap() >= a);
    }

    #[test]
    fn cramer_zeros_of_the_xi_exponents(alpha in 1.05f64..=2.0, m in 0.1f64..5.0, m_star in 0.1f64..5.0) {
        let e = XiExponents::new(alpha, m, m_star).unwrap();
        prop_assert!(e.psi(-1.0).unwrap().abs() < 1e-12);
        prop_assert!(e.psi_star(1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sup_law_is_a_probability(m_star in 0.1f64..5.0, y in 0.1f64..5.0, k in 1.0f64..50.0) {
        let p = prop4_sup_law(m_star, y, k * y * (1.0 / m_star).max(1.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn pssmp_round_trip(seed in any::<u64>(), alpha in 1.2f64..=2.0, x in 0.1f64..10.0) {
        let p = StableParams::new(alpha, 1.0).unwrap();
        let xi = simulate_path(&p, 0.0, 1.0, 1e-2, &mut path_rng(seed, 0)).unwrap();
        let y = pssmp_from_levy(&xi, x, alpha - 1.0).unwrap();
        let back = levy_from_pssmp(&y.output, alpha - 1.0).unwrap();
        for (a, b) in back.values.iter().zip(&xi.values) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulated_paths_respect_their_invariants(seed in any::<u64>(), alpha in 1.2f64..=2.0, x0 in 0.1f64..5.0) {
        let p = StableParams::new(alpha, 1.0).unwrap();
        let rule = StepRule::adaptive(0.05, 1e-15, 0.1);
        let stop = Stopping { clock_horizon: Some(2.0), ..Stopping::default() };
        let (tc, _) = simulate_cb(&p, x0, &rule, &stop, &mut path_rng(seed, 0)).unwrap();
        prop_assert_eq!(tc.base.times.len(), tc.base.values.len());
        prop_assert_eq!(tc.base.values[0], x0);
        prop_assert!(tc.clock_values.windows(2).all(|w| w[0] <= w[1]));
        let live = tc.output.live_times();
        prop_assert!(live.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(tc.output.live_values().iter().all(|&y| y >= 0.0));
        if let Some(a) = tc.absorbed {
            prop_assert!((a - tc.clock_values.last().unwrap()).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn dead_paths_carry_no_weight(seed in any::<u64>(), x in 0.05f64..2.0) {
        let p = StableParams::new(1.5, 1.0).unwrap();
        let rule = StepRule::adaptive(0.05, 1e-15, 0.1);
        let f = |_: &Path| 1.0;
        let s = weighted_sample(HKind::SpPositive, &p, x, 1.0, &f, &[], &rule, &mut path_rng(seed, 0)).unwrap();
        if !s.alive {
            prop_assert_eq!(s.weight, 0.0);
        }
        prop_assert!(s.weight >= 0.0);
    }

    #[test]
    fn ess_is_bounded_by_the_sample_size(w in prop::collection::vec(0.0f64..10.0, 1..200)) {
        let ess = effective_sample_size(&w);
        prop_assert!(ess >= 0.0 && ess <= w.len() as f64 + 1e-9);
    }

    #[test]
    fn stderr_is_std_over_root_n(v in prop::collection::vec(-10.0f64..10.0, 2..200)) {
        let e = MCEstimate::from_samples(&v, 0).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((e.stderr - (var / n).sqrt()).abs() <= 1e-9 * (1.0 + e.stderr));
    }

    #[test]
    fn unknown_parameters_are_rejected(key in "[a-z]{3,8}") {
        prop_assume!(!["alpha", "x", "t", "lambda", "eps", "dt_min", "dt_max"].contains(&key.as_str()));
        let spec = IdentitySpec::new("cb_laplace").param(&key, 1.0);
        prop_assert!(csbp_core::verify::plan(&spec, 0, &SuiteSettings::default()).is_err());
    }
}
