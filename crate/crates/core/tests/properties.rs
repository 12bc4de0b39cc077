use levy_scale::estimators::{estimate_d, estimate_gamma};
use levy_scale::laguerre::{laguerre_fn, partial_sum, psi_integral};
use levy_scale::levy_model::{laplace_exponent, laplace_exponent_deriv, lundberg_exponent};
use levy_scale::oracle::{closed_form_w, compound_geometric_grid, laplace_invert_scale, ClosedFormKind};
use levy_scale::scale_series::{build_af, coeffs_true};
use levy_scale::simulate::{make_scheme, simulate_replication};
use levy_scale::{JumpMeasure, LaguerreParams, LevyModel, ScaleApprox};
use proptest::prelude::*;

fn jumps() -> impl Strategy<Value = JumpMeasure> {
    prop_oneof![
        Just(JumpMeasure::None),
        (0.2..3.0f64, 0.2..2.0f64).prop_map(|(rate, mean)| JumpMeasure::CompoundPoissonExponential { rate, mean }),
        (0.2..3.0f64, 0.5..3.0f64, 0.1..1.0f64)
            .prop_map(|(rate, shape, scale)| JumpMeasure::CompoundPoissonGamma { rate, shape, scale }),
        (0.2..2.0f64, 0.5..4.0f64).prop_map(|(shape, rate)| JumpMeasure::GammaSubordinator { shape, rate }),
    ]
}

/// Models satisfying the net profit condition, with some slack.
fn model() -> impl Strategy<Value = LevyModel> {
    (jumps(), 0.0..1.0f64, 0.2..2.0f64, 0.0..2.0f64).prop_map(|(j, d, margin, q)| {
        let c = j.moment(1) + margin;
        LevyModel::new(0.0, c, d, j, q).unwrap()
    })
}

fn exp_model(c: f64, d: f64, q: f64) -> LevyModel {
    LevyModel::exponential(c, d, 1.0, 1.0, q).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplace_exponent_is_convex(m in model(), a in 0.0..50.0f64, b in 0.0..50.0f64, w in 0.0..1.0f64) {
        let (t1, t3) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(t3 - t1 > 1e-6);
        let t2 = t1 + w * (t3 - t1);
        let (p1, p2, p3) = (
            laplace_exponent(&m, t1).unwrap(),
            laplace_exponent(&m, t2).unwrap(),
            laplace_exponent(&m, t3).unwrap(),
        );
        let chord = p1 + (p3 - p1) * (t2 - t1) / (t3 - t1);
        prop_assert!(p2 <= chord + 1e-12 * (1.0 + p1.abs().max(p3.abs())));
    }

    #[test]
    fn lundberg_root_solves_and_is_monotone(m in model(), q1 in 0.0..5.0f64, q2 in 0.0..5.0f64) {
        let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
        let (r1, r2) = (lundberg_exponent(&m, lo).unwrap(), lundberg_exponent(&m, hi).unwrap());
        prop_assert!(r1 <= r2);
        for (q, r) in [(lo, r1), (hi, r2)] {
            prop_assert!((laplace_exponent(&m, r).unwrap() - q).abs() <= 1e-12 * q.max(1.0));
        }
    }

    #[test]
    fn derivative_matches_finite_differences(m in model(), theta in 0.05..10.0f64) {
        let h = 1e-5;
        let fd = (laplace_exponent(&m, theta + h).unwrap() - laplace_exponent(&m, theta - h).unwrap()) / (2.0 * h);
        let d = laplace_exponent_deriv(&m, theta).unwrap();
        prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{fd} vs {d}");
    }

    #[test]
    fn basis_functions_are_bounded(k in 0usize..=64, x in 0.0..100.0f64, ai in 0usize..3) {
        let p = LaguerreParams::new([0.5, 1.0, 2.0][ai], 64).unwrap();
        prop_assert!(laguerre_fn(&p, k, x).abs() <= p.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn psi_solves_its_ode(k in 0usize..30, x in 0.05..15.0f64, b in -3.0..1.5f64) {
        let p = LaguerreParams::new(1.0, 30).unwrap();
        let h = 1e-5;
        let fd = (psi_integral(&p, k, x + h, b) - psi_integral(&p, k, x - h, b)) / (2.0 * h);
        let rhs = b * psi_integral(&p, k, x, b) + laguerre_fn(&p, k, x);
        prop_assert!((fd - rhs).abs() <= 1e-6 * rhs.abs().max(1.0), "{fd} vs {rhs}");
    }

    #[test]
    fn partial_sum_is_linear(
        u in prop::collection::vec(-1.0..1.0f64, 21),
        v in prop::collection::vec(-1.0..1.0f64, 21),
        x in 0.0..30.0f64,
    ) {
        let p = LaguerreParams::new(1.0, 20).unwrap();
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let lhs = partial_sum(&w, &p, x);
        let rhs = partial_sum(&u, &p, x) + partial_sum(&v, &p, x);
        prop_assert!((lhs - rhs).abs() <= 1e-14 * (1.0 + lhs.abs()) * 21.0);
    }

    #[test]
    fn triangular_solve_residual_is_tiny(c in 1.1..3.0f64, d in 0.0..1.0f64, q in 0.0..1.0f64, k in 1usize..=40) {
        let m = exp_model(c, d, q);
        let cs = coeffs_true(&m, &LaguerreParams::new(1.0, k).unwrap()).unwrap();
        let a = build_af(&cs.a_f, 1.0);
        let scale = cs.a_big_f.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let resid = a.mul_vec(&cs.a_g).iter().zip(&cs.a_big_f).fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
        prop_assert!(resid <= 1e-12 * scale);
    }

    #[test]
    fn grid_conserves_mass(mu in 0.5..3.0f64, p in 0.0..0.8f64) {
        // atom + grid mass + tail beyond the grid = 1
        let h = 0.005 / mu;
        let n = (20.0 / (mu * (1.0 - p)) / h) as usize + 1;
        let f: Vec<f64> = (0..n).map(|i| mu * (-mu * i as f64 * h).exp()).collect();
        let g = compound_geometric_grid(&f, p, h).unwrap();
        prop_assert!((g.mass + g.gbar[n - 1] - 1.0).abs() <= 1e-4);
        prop_assert!((g.atom - (1.0 - p)).abs() < 1e-15);
        let coarse = compound_geometric_grid(&f[..n.min(400)], p, h * 8.0);
        if let Ok(c) = coarse {
            prop_assert!((c.mass - 1.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn simulation_is_deterministic_and_exact(seed in any::<u64>(), rep in 0u64..100, t in 2.0..20.0f64) {
        let m = exp_model(1.5, 0.5, 0.0);
        let s = make_scheme(t, 1.0, 0.49, 1.0).unwrap();
        let a = simulate_replication(&m, &s, seed, rep, None).unwrap();
        let b = simulate_replication(&m, &s, seed, rep, None).unwrap();
        prop_assert_eq!(&a, &b);
        let truth = a.truth.clone().unwrap();
        let end = m.x0 + m.c * s.horizon + m.sigma() * truth.brownian_end - truth.jump_sum;
        prop_assert!((a.grid[s.n] - end).abs() <= 1e-10 * (1.0 + end.abs()));
        prop_assert!(a.jumps.iter().all(|j| j.size > s.eps && j.t > 0.0 && j.t <= s.horizon));
        let prefix = simulate_replication(&m, &s, seed, rep, Some(1.0)).unwrap();
        prop_assert_eq!(&prefix.grid[..], &a.grid[..prefix.grid.len()]);
    }

    #[test]
    fn realised_variance_scales_quadratically(seed in any::<u64>(), u in 0.1..10.0f64) {
        let m = exp_model(1.5, 0.5, 0.1);
        let s = make_scheme(10.0, 1.0, 0.49, 1.0).unwrap();
        let obs = simulate_replication(&m, &s, seed, 0, None).unwrap();
        let mut scaled = obs.clone();
        scaled.grid.iter_mut().for_each(|x| *x *= u);
        scaled.jumps.iter_mut().for_each(|j| j.size *= u);
        let (a, b) = (estimate_d(&obs, 1.0).unwrap().raw, estimate_d(&scaled, 1.0).unwrap().raw);
        prop_assert!((b - u * u * a).abs() <= 1e-11 * u * u * (1.0 + a.abs()));
    }

    #[test]
    fn gamma_hat_vanishes_at_q_zero(seed in any::<u64>(), d in 0.0..2.0f64) {
        let m = exp_model(1.5, 0.5, 0.0);
        let s = make_scheme(20.0, 1.0, 0.49, 1.0).unwrap();
        let obs = simulate_replication(&m, &s, seed, 0, Some(1.0)).unwrap();
        prop_assert_eq!(estimate_gamma(&obs, 0.0, d, m.c).value, 0.0);
    }
}

fn trapezoid_integral(f: impl Fn(f64) -> f64, x: f64, n: usize) -> f64 {
    let h = x / n as f64;
    (0..=n).map(|i| {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        w * f(i as f64 * h)
    }).sum::<f64>() * h
}

#[test]
fn z_is_one_plus_q_times_integral_of_w() {
    let m = exp_model(1.5, 0.5, 0.1);
    let approx = ScaleApprox::for_model(&m, &LaguerreParams::new(1.0, 40).unwrap()).unwrap();
    for x in [0.5, 1.0, 2.5, 5.0, 10.0] {
        let trap = trapezoid_integral(|y| approx.w(y).unwrap(), x, 4000);
        assert!((approx.z(x).unwrap() - 1.0 - 0.1 * trap).abs() < 1e-4, "x = {x}");
    }
}

#[test]
fn truncated_w_is_nearly_nonnegative_and_ruin_in_range() {
    let models = [exp_model(1.5, 0.5, 0.1), exp_model(1.5, 0.0, 0.1), exp_model(1.5, 0.5, 0.0), exp_model(1.5, 0.0, 0.0)];
    for m in &models {
        for k in [40, 60] {
            let approx = ScaleApprox::for_model(m, &LaguerreParams::new(1.0, k).unwrap()).unwrap();
            let mut sup: f64 = 0.0;
            for i in 0..=400 {
                let w = approx.w(i as f64 * 0.025).unwrap();
                sup = sup.max(w);
                assert!(w >= -0.02 * sup);
            }
            if m.q == 0.0 {
                let slope = laplace_exponent_deriv(m, 0.0).unwrap();
                for i in 0..=100 {
                    let ruin = 1.0 - slope * approx.w(i as f64 * 0.1).unwrap();
                    assert!((-0.02..=1.02).contains(&ruin));
                }
            }
        }
    }
}

#[test]
fn three_way_agreement_on_cramer_lundberg() {
    let m = exp_model(1.5, 0.0, 0.1);
    let approx = ScaleApprox::for_model(&m, &LaguerreParams::new(1.0, 40).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=99 {
        let x = 0.1 + i as f64 * 0.1;
        let closed = closed_form_w(ClosedFormKind::CramerLundbergExponential, &m, 0.1, x).unwrap().w;
        let talbot = laplace_invert_scale(&m, 0.1, x).unwrap().value;
        let series = approx.w(x).unwrap();
        worst = worst.max((closed - talbot).abs()).max((closed - series).abs()).max((talbot - series).abs());
    }
    assert!(worst < 2e-2, "{worst}");
}
