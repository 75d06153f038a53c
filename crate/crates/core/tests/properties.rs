use phcs_core::bayes::{hpd_interval, point_estimate, LossSpec};
use phcs_core::censoring::{generate, scheme_from_shorthand, Case, CensoringScheme, PhcsSample};
use phcs_core::likelihood::{loglik, observed_info, profile_score, score};
use phcs_core::shrinkage::{spt_estimate, SptConfig, SptMode};
use phcs_core::simbench::EstimatorSpec;
use phcs_core::weibull::{cdf, quantile};
use phcs_core::WeibullParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn p(a: f64, b: f64) -> WeibullParams {
    WeibullParams::new(a, b).unwrap()
}

/// A random scheme: `m` failures out of `n` with removals spread at random.
fn scheme_strategy() -> impl Strategy<Value = (usize, usize, Vec<usize>)> {
    (2usize..30, 0usize..30).prop_flat_map(|(m, extra)| {
        let n = m + extra;
        prop::collection::vec(0usize..=extra, m).prop_map(move |weights| {
            // scale weights into a removal vector summing to n - m
            let mut removals = vec![0; m];
            let mut left = extra;
            for (i, w) in weights.iter().enumerate() {
                let take = (*w).min(left);
                removals[i] = take;
                left -= take;
            }
            removals[m - 1] += left;
            (n, m, removals)
        })
    })
}

fn sample_strategy() -> impl Strategy<Value = PhcsSample> {
    (scheme_strategy(), 0.2f64..3.0, 0.2f64..3.0, 0.05f64..3.0, any::<u64>()).prop_filter_map(
        "no failures before T",
        |((n, m, removals), a, b, t, seed)| {
            let scheme = CensoringScheme::new(n, m, removals, t).ok()?;
            generate(&scheme, p(a, b), &mut ChaCha8Rng::seed_from_u64(seed)).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cdf_and_quantile_invert(a in 0.1f64..10.0, b in 0.1f64..10.0, u in 0.001f64..0.999) {
        let q = p(a, b);
        let x = quantile(u, q).unwrap();
        prop_assert!((cdf(x, q).unwrap() - u).abs() < 1e-10);
    }

    #[test]
    fn generated_samples_balance(s in sample_strategy()) {
        let withdrawn: usize = s.applied_removals().iter().sum();
        prop_assert_eq!(s.r() + withdrawn + s.r_t(), s.n());
        prop_assert!(s.failures().windows(2).all(|w| w[0] < w[1]));
        match s.case() {
            Case::CaseI => {
                prop_assert_eq!(s.r(), s.m());
                prop_assert!(*s.failures().last().unwrap() <= s.t_max());
                prop_assert_eq!(s.c_end(), *s.failures().last().unwrap());
            }
            Case::CaseII => {
                prop_assert!(s.r() < s.m());
                prop_assert!(s.failures().iter().all(|&x| x < s.t_max()));
                prop_assert_eq!(s.c_end(), s.t_max());
            }
        }
    }

    #[test]
    fn sample_csv_round_trips(s in sample_strategy()) {
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = PhcsSample::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn shorthand_schemes_balance(m in 2usize..40, extra in 0usize..40) {
        let n = m + extra;
        for spec in ["(0^{m-1},n-m)", "(n-m,0^{m-1})"] {
            let r = scheme_from_shorthand(spec, n, m).unwrap();
            prop_assert_eq!(r.len(), m);
            prop_assert_eq!(r.iter().sum::<usize>() + m, n);
        }
    }

    #[test]
    fn score_matches_finite_differences(s in sample_strategy(), a in 0.3f64..3.0, b in 0.3f64..3.0) {
        let (sa, sb) = score(p(a, b), &s).unwrap();
        let h = 1e-6;
        let fa = (loglik(p(a + h, b), &s).unwrap() - loglik(p(a - h, b), &s).unwrap()) / (2.0 * h);
        let fb = (loglik(p(a, b + h), &s).unwrap() - loglik(p(a, b - h), &s).unwrap()) / (2.0 * h);
        let scale = |x: f64, y: f64| x.abs().max(y.abs()).max(1.0);
        prop_assert!((sa - fa).abs() < 1e-5 * scale(sa, fa), "{} vs {}", sa, fa);
        prop_assert!((sb - fb).abs() < 1e-5 * scale(sb, fb), "{} vs {}", sb, fb);
    }

    #[test]
    fn information_and_profile_curvature(s in sample_strategy(), a in 0.2f64..4.0, b in 0.2f64..4.0) {
        let info = observed_info(p(a, b), &s).unwrap();
        prop_assert!(info.i_bb > 0.0 && info.i_aa > 0.0);
        prop_assert!(profile_score(a, &s).1 < 0.0);
    }

    #[test]
    fn spt_lands_in_its_two_point_set(
        est in 0.01f64..10.0,
        theta0 in 0.01f64..10.0,
        w in 0.0f64..20.0,
        lambda in 0.0f64..=1.0,
        conventional in any::<bool>(),
    ) {
        let mode = if conventional { SptMode::Conventional } else { SptMode::Paper };
        let cfg = SptConfig { lambda, mode, ..SptConfig::default() };
        let v = spt_estimate(est, theta0, w, &cfg);
        let blend = lambda * theta0 + (1.0 - lambda) * est;
        let other = if conventional { est } else { lambda * theta0 };
        prop_assert!(v == blend || v == other);
        prop_assert_eq!(v == blend, w < cfg.critical_value() || blend == other);
    }

    #[test]
    fn hpd_is_the_shortest_covering_window(
        draws in prop::collection::vec(-50.0f64..50.0, 100..400),
        level in 0.5f64..0.99,
    ) {
        let iv = hpd_interval(&draws, level).unwrap();
        prop_assert!(draws.contains(&iv.lower) && draws.contains(&iv.upper));
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        let k = ((level * sorted.len() as f64 + 1e-9).floor() as usize).min(sorted.len() - 1);
        let covered = sorted.iter().filter(|&&x| iv.lower <= x && x <= iv.upper).count();
        prop_assert!(covered > k);
        let shortest = (0..sorted.len() - k).map(|j| sorted[j + k] - sorted[j]).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(iv.length(), shortest);
    }

    #[test]
    fn sel_and_linex_are_shift_equivariant(
        draws in prop::collection::vec(0.1f64..5.0, 1..200),
        shift in -3.0f64..3.0,
        nu in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0],
    ) {
        let moved: Vec<f64> = draws.iter().map(|x| x + shift).collect();
        for loss in [LossSpec::Sel, LossSpec::linex(nu).unwrap()] {
            let a = point_estimate(&draws, loss).unwrap();
            let b = point_estimate(&moved, loss).unwrap();
            prop_assert!((b - a - shift).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn gel_is_scale_equivariant(
        draws in prop::collection::vec(0.1f64..5.0, 1..200),
        scale in 0.1f64..10.0,
        kappa in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0],
    ) {
        let moved: Vec<f64> = draws.iter().map(|x| x * scale).collect();
        let loss = LossSpec::gel(kappa).unwrap();
        let a = point_estimate(&draws, loss).unwrap();
        let b = point_estimate(&moved, loss).unwrap();
        prop_assert!((b - a * scale).abs() < 1e-9 * b.abs());
    }

    #[test]
    fn bayes_estimates_stay_inside_the_draw_range(
        draws in prop::collection::vec(0.1f64..5.0, 1..200),
        shape in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0],
    ) {
        let lo = draws.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for loss in [LossSpec::Sel, LossSpec::linex(shape).unwrap(), LossSpec::gel(shape).unwrap()] {
            let e = point_estimate(&draws, loss).unwrap();
            prop_assert!(e >= lo * (1.0 - 1e-12) && e <= hi * (1.0 + 1e-12), "{} outside [{}, {}]", e, lo, hi);
        }
    }

    #[test]
    fn loss_and_estimator_labels_round_trip(shape in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0]) {
        for loss in [LossSpec::Sel, LossSpec::linex(shape).unwrap(), LossSpec::gel(shape).unwrap()] {
            prop_assert_eq!(loss.to_string().parse::<LossSpec>().unwrap(), loss);
            for label in [format!("tk:flat:{loss}"), format!("mcmc:informative:{loss}"), format!("spt:tk:flat:{loss}")] {
                let e: EstimatorSpec = label.parse().unwrap();
                prop_assert_eq!(e.to_string(), label);
            }
        }
    }
}
