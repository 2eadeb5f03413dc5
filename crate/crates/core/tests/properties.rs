//! Invariants checked over randomly drawn schedules, clouds and inputs.

use proptest::prelude::*;

use w2lab::bounds::{evaluate, BoundId, BoundInputs};
use w2lab::ot::{w2_exact_assignment, SampleCloud};
use w2lab::profiles::ScoreErrorProfile;
use w2lab::schedules::{audit_schedule, Feasibility, VarianceSchedule};
use w2lab::targets::{SphericalGaussian, Target};

fn any_schedule() -> impl Strategy<Value = VarianceSchedule> {
    prop_oneof![
        (1usize..300).prop_map(|n| VarianceSchedule::harmonic(n).unwrap()),
        (1usize..300, 0.001f64..0.9, 0.0f64..0.5)
            .prop_map(|(n, b, d)| VarianceSchedule::constant(n, b, d).unwrap()),
        (2usize..300, 0.5f64..4.0, 0.5f64..3.0, 0.0f64..0.5)
            .prop_map(|(n, c0, c1, d)| VarianceSchedule::geometric(n, c0, c1, d).unwrap()),
        (2usize..300, 0.0f64..0.05).prop_map(|(n, s)| VarianceSchedule::cosine(n, s, None).unwrap()),
        (prop::collection::vec(0.0001f64..0.99, 1..40), 0.0f64..0.5)
            .prop_map(|(b, d)| VarianceSchedule::from_betas(&b, d).unwrap()),
    ]
}

fn cloud(n: usize, d: usize) -> impl Strategy<Value = SampleCloud> {
    prop::collection::vec(-3.0f64..3.0, n * d).prop_map(move |p| SampleCloud::new(p, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn schedule_json_round_trip(s in any_schedule()) {
        let back = VarianceSchedule::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.betas(), s.betas());
        prop_assert_eq!(back.times(), s.times());
        prop_assert_eq!(back.delta(), s.delta());
    }

    #[test]
    fn terminal_time_and_step_sizes(s in any_schedule()) {
        prop_assert!((s.t_n() - (1.0 - s.delta())).abs() <= 1e-12);
        let t = s.times();
        for i in 0..s.n_steps() {
            let h = t[i + 1] - t[i];
            prop_assert!(h > 0.0);
            // h_i = beta_i t_{i+1} <= beta_i
            prop_assert!(h <= s.betas()[i] + 1e-15);
            prop_assert!((s.step(i) - h).abs() <= 1e-15);
        }
    }

    #[test]
    fn beta_cap_matches_time_ratio(s in any_schedule()) {
        let t = s.times();
        let ratio_ok = (0..s.n_steps()).all(|i| t[i + 1] <= 4.0 * t[i] * (1.0 + 1e-12));
        let beta_ok = s.max_beta() <= 0.75 + 1e-12;
        // t_{i+1} / t_i = 1 / (1 - beta_i), so beta_i <= 3/4 iff the ratio is <= 4
        let near_edge = s.betas().iter().any(|b| (b - 0.75).abs() < 1e-9);
        if !near_edge {
            prop_assert_eq!(ratio_ok, beta_ok);
        }
        prop_assert_eq!(audit_schedule(&s).beta_ok, beta_ok || near_edge && ratio_ok);
    }

    #[test]
    fn step_sum_within_log_budget(s in any_schedule()) {
        // With t_{i+1} <= 4 t_i each h_j / t_j <= (3 / ln 4) ln(t_{j+1} / t_j),
        // so the tail sum is at most 2.2 ln(1 / t_i), which 128 + ln(1 / t_i)
        // dominates whenever t_i > e^-100.
        let report = audit_schedule(&s);
        prop_assume!(report.beta_ok && s.t0() > (-100.0f64).exp());
        for (i, m) in report.stepsum_margins.iter().enumerate() {
            let tail: f64 = (i..s.n_steps()).map(|j| s.step(j) / s.times()[j]).sum();
            prop_assert!(tail <= 3.0 / 4f64.ln() * (s.t_n() / s.times()[i]).ln() + 1e-9);
            prop_assert!(*m >= 0.0, "margin {} at step {}", m, i);
        }
    }

    #[test]
    fn exact_w2_is_symmetric(x in cloud(9, 3), y in cloud(9, 3)) {
        let a = w2_exact_assignment(&x, &y).unwrap();
        let b = w2_exact_assignment(&y, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(w2_exact_assignment(&x, &x).unwrap() <= 1e-12);
    }

    #[test]
    fn exact_w2_triangle_inequality(x in cloud(12, 2), y in cloud(12, 2), z in cloud(12, 2)) {
        let xy = w2_exact_assignment(&x, &y).unwrap();
        let yz = w2_exact_assignment(&y, &z).unwrap();
        let xz = w2_exact_assignment(&x, &z).unwrap();
        prop_assert!(xz <= xy + yz + 1e-12);
    }

    #[test]
    fn gaussian_score_points_at_smoothed_mean(
        mean in prop::collection::vec(-2.0f64..2.0, 1..6),
        var in 0.05f64..5.0,
        t in 0.01f64..0.99,
        shift in prop::collection::vec(-4.0f64..4.0, 6),
    ) {
        let d = mean.len();
        let target = Target::Gaussian(SphericalGaussian::new(mean.clone(), var).unwrap());
        let y: Vec<f64> = (0..d).map(|j| t.sqrt() * mean[j] + shift[j]).collect();
        let s = target.score(t, &y).unwrap();
        // score = -(y - sqrt(t) mu) / (t var + 1 - t)
        let k = t * var + 1.0 - t;
        for j in 0..d {
            prop_assert!((s[j] + shift[j] / k).abs() <= 1e-12 * (1.0 + shift[j].abs() / k));
        }
    }

    #[test]
    fn bounds_grow_with_score_error_gap_and_eta(
        n in 4usize..200,
        var in prop::sample::select(vec![0.5, 0.8, 1.25, 2.0]),
        eps in 0.0f64..0.2,
        k in 1.0f64..3.0,
        gap in 0.0f64..2.0,
    ) {
        let s = VarianceSchedule::harmonic(n).unwrap();
        let target = SphericalGaussian::new(vec![0.0; 4], var).unwrap();
        let mut mu_hat = vec![0.0; 4];
        mu_hat[0] = gap;
        let base = BoundInputs::gaussian(s.clone(), &target, &mu_hat, ScoreErrorProfile::Constant { eps });
        let audit = audit_schedule(&s);
        let ids = [
            BoundId::TwoSidedLipschitz,
            BoundId::OneSidedLipschitz,
            BoundId::SemiLogConvex,
            BoundId::WeaklyLogConcave,
            BoundId::LogConcave,
        ];
        for id in ids {
            let Ok(v0) = evaluate(id, &base) else { continue };

            let scaled = evaluate(id, &base.with_score_error_scaled(k)).unwrap();
            prop_assert!(scaled.value >= v0.value * (1.0 - 1e-12), "{:?} eps", id);

            let mut farther = base.clone();
            farther.mu_gap = base.mu_gap + 0.5;
            let far = evaluate(id, &farther).unwrap();
            prop_assert!(far.value >= v0.value * (1.0 - 1e-12), "{:?} gap", id);

            let mut looser = base.clone();
            let grow = |f: &Feasibility| f.eta().map(|e| e * k);
            looser.eta.max_step = Some(audit.max_step * k);
            looser.eta.eta_tail = grow(&audit.eta_tail);
            looser.eta.eta_balanced = grow(&audit.eta_balanced);
            looser.eta.eta_relative = grow(&audit.eta_relative).filter(|e| *e < 1.0);
            if let Ok(loose) = evaluate(id, &looser) {
                prop_assert!(loose.value >= v0.value * (1.0 - 1e-12), "{:?} eta", id);
            }
        }
    }
}
