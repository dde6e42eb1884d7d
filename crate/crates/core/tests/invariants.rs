//! Cross-module invariants: chart geometry, period-map structure, grading
//! closure of the bracket algebra, and the generator-flow conjugacy.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;

use oscnf::aa::{from_action_angle, to_action_angle, ActionAngleState};
use oscnf::coeffexpr::CoeffExpr;
use oscnf::flow::{
    integrate_cartesian, period_map, period_map_jacobian, unforced_return_time, det2,
    IntegratorConfig,
};
use oscnf::forcing::{Forcing, ForcingConfig};
use oscnf::gentrig::{build_gentrig, GenTrig};
use oscnf::nf::{
    generator_transport, normal_form, poisson_bracket, series_orbit, NFTerm, NormalFormOptions,
    ProfileSeries, TransportDirection,
};
use oscnf::scalar::cast;

fn g2() -> &'static GenTrig<f64> {
    static G: OnceLock<GenTrig<f64>> = OnceLock::new();
    G.get_or_init(|| build_gentrig(2, 64, 1e-10).unwrap())
}

fn g3() -> &'static GenTrig<f64> {
    static G: OnceLock<GenTrig<f64>> = OnceLock::new();
    G.get_or_init(|| build_gentrig(3, 64, 1e-10).unwrap())
}

fn forcing(s: &str) -> Forcing<f64> {
    let cfg: ForcingConfig = serde_json::from_str(s).unwrap();
    Forcing::from_config(&cfg).unwrap()
}

fn full_n2() -> Forcing<f64> {
    forcing(
        r#"{"n":2,"T":1.0,"p":[{"j":0,"cos":[1.0]},{"j":1,"sin":[0.3]},{"j":2,"cos":[0.0,0.2]}]}"#,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chart_round_trip_is_identity(k in 0.5f64..50.0, frac in 0.0f64..1.0) {
        let g = g2();
        let kappa = g.period() * frac;
        let c = from_action_angle(g, ActionAngleState { k, kappa, t: 0.0 }).unwrap();
        let a = to_action_angle(g, c).unwrap();
        prop_assert!((a.k - k).abs() / k < 1e-8);
        let per = g.period();
        let mut d = (a.kappa - kappa).abs() % per;
        d = d.min(per - d);
        prop_assert!(d < 1e-7, "angle mismatch {d}");
    }

    #[test]
    fn level_set_identity(k in 0.5f64..100.0, frac in 0.0f64..1.0) {
        let g = g2();
        let kappa = g.period() * frac;
        let c = from_action_angle(g, ActionAngleState { k, kappa, t: 0.0 }).unwrap();
        let level = c.y * c.y + c.x.powi(4);
        let want = k.powf(4.0 / 3.0);
        prop_assert!(((level - want) / want).abs() < 1e-10);
    }
}

#[test]
fn bracket_grading_closure_on_random_terms() {
    // {P_r, R_s} ⊂ P_{r+s} as exponent bookkeeping, over many random shapes
    let g = g2();
    let omega = g.omega();
    let n = 2u32;
    let mut lcg = 0x2545F4914F6CDD1Du64;
    let mut next = move || {
        lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((lcg >> 33) as f64) / (2f64.powi(31))
    };
    let mut checked = 0usize;
    for _ in 0..500 {
        let qa = (next() * 7.0) as i64 - 2; // row a = 4 - qa
        let qb = (next() * 5.0) as i64 - 1;
        let mut pa = ProfileSeries::zero(omega);
        let mut pb = ProfileSeries::zero(omega);
        for k in 1..=4usize {
            if next() > 0.5 {
                pa.add_cos(k, CoeffExpr::scalar(next() - 0.5));
            }
            if next() > 0.5 {
                pa.add_sin(k, CoeffExpr::scalar(next() - 0.5));
            }
            if next() > 0.5 {
                pb.add_cos(k, CoeffExpr::scalar(next() - 0.5));
            }
            if next() > 0.5 {
                pb.add_sin(k, CoeffExpr::scalar(next() - 0.5));
            }
        }
        let a = NFTerm::new(qa, pa);
        let b = NFTerm::new(qb, pb);
        let row_a = 2 * n as i64 - qa;
        let row_b = n as i64 + 1 - qb; // R_s membership: q_b = n - s + 1
        let mut dropped = BTreeMap::new();
        for t in poisson_bracket(&a, &b, n, 16, &mut dropped) {
            assert_eq!(
                2 * n as i64 - t.q,
                row_a + row_b,
                "bracket left the expected row"
            );
            checked += 1;
        }
    }
    assert!(checked > 100, "not enough nonzero brackets exercised");
}

#[test]
fn area_preservation_over_random_states() {
    let g = g2();
    let cfg = IntegratorConfig::default();
    let morris = forcing(r#"{"n":2,"T":1.0,"p":[{"j":0,"cos":[1.0]}]}"#);
    let full = full_n2();
    let mut lcg = 99u64;
    let mut next = move || {
        lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1);
        ((lcg >> 33) as f64) / (2f64.powi(31))
    };
    for f in [&morris, &full] {
        let mut worst = 0.0f64;
        for _ in 0..25 {
            let k = 1.0 + 999.0 * next();
            let kappa = g.period() * next();
            let j = period_map_jacobian(
                g,
                f,
                &cfg,
                ActionAngleState { k, kappa, t: 0.0 },
                1e-5,
            )
            .unwrap();
            worst = worst.max((det2(&j) - 1.0).abs());
        }
        assert!(worst < 1e-5, "worst |det-1| = {worst}");
    }
}

#[test]
fn twist_consistency_for_zero_forcing() {
    let g = g2();
    let zero = forcing(r#"{"n":2,"T":1.0,"p":[]}"#);
    let cfg = IntegratorConfig::default();
    for k in [1.0, 64.0, 1000.0] {
        let s = period_map(g, &zero, &cfg, ActionAngleState { k, kappa: 0.7, t: 0.0 }).unwrap();
        assert!(s.g_shift.abs() < 1e-6, "K={k}: twist defect {}", s.g_shift);
    }
}

#[test]
fn return_time_scaling_measured_by_integration() {
    // locate the actual return to the section x = 0 (y < 0) and compare with
    // the closed form
    for (g, n) in [(g2(), 2u32), (g3(), 3u32)] {
        let zero = forcing(&format!(r#"{{"n":{n},"T":1.0,"p":[]}}"#));
        let cfg = IntegratorConfig::default();
        for k in [0.5f64, 1.0, 8.0, 100.0] {
            let predicted = unforced_return_time(g, k).unwrap();
            let y0 = -k.powf(n as f64 / (n as f64 + 1.0));
            let start = oscnf::aa::CartesianState { x: 0.0, y: y0, t: 0.0 };
            // integrate to the predicted time, then Newton in time on x(t) = 0
            let mut state = integrate_cartesian(&zero, &cfg, start, predicted).unwrap();
            let mut t_ret = predicted;
            for _ in 0..5 {
                let (dx, _) = oscnf::flow::vf_xy(&zero, t_ret, state.x, state.y).unwrap();
                let dt = -state.x / dx;
                if dt.abs() < 1e-16 * predicted {
                    break;
                }
                state = integrate_cartesian(&zero, &cfg, state, t_ret + dt).unwrap();
                t_ret += dt;
            }
            let rel = ((t_ret - predicted) / predicted).abs();
            assert!(rel < 1e-7, "n={n}, K={k}: relative return-time error {rel}");
        }
    }
}

#[test]
fn generator_flow_conjugacy_shadows_the_original_orbit() {
    let g = g2();
    let f = full_n2();
    let opts = NormalFormOptions::for_n(2);
    let nf = normal_form(g, &f, &opts).unwrap();
    let kk = nf.convergence.threshold;
    let k_star = 4.0 * kk;
    let bound = nf.truncation.residual_bound(&f, k_star);
    assert!(bound.is_finite() && bound > 0.0, "unusable bound {bound}");

    let to_original = |k: f64, kappa: f64, t: f64| -> (f64, f64) {
        let (k1, kap1) =
            generator_transport(&nf.w_stage2, 2, &f, t, k, kappa, TransportDirection::NewToOld)
                .unwrap();
        generator_transport(&nf.w_stage1, 2, &f, t, k1, kap1, TransportDirection::NewToOld)
            .unwrap()
    };

    let t_end = -f.period();
    let mut worst: f64 = 0.0;
    for frac in [0.0, 0.37, 0.71] {
        let kappa0 = g.period() * frac;
        // original-coordinates start matching the normalized start
        let (k_orig, kap_orig) = to_original(k_star, kappa0, 0.0);
        // true orbit (integrated in Cartesian coordinates for accuracy)
        let cfg = IntegratorConfig::default();
        let c0 = from_action_angle(
            g,
            ActionAngleState { k: k_orig, kappa: kap_orig, t: 0.0 },
        )
        .unwrap();
        let c1 = integrate_cartesian(&f, &cfg, c0, t_end).unwrap();
        let a1 = to_action_angle(g, c1).unwrap();
        // normalized orbit transported back at the final time
        let (kn, kapn) = series_orbit(&nf.h_special, &f, k_star, kappa0, 0.0, t_end).unwrap();
        let (k_pred, kap_pred) = to_original(kn, kapn, t_end);
        // compare in (Λ, κ) with the angle wrapped
        let lam_true = a1.k.powf(1.0 / 3.0);
        let lam_pred = k_pred.powf(1.0 / 3.0);
        let per = g.period();
        let mut dk = (kap_pred - a1.kappa).abs() % per;
        dk = dk.min(per - dk);
        let err = ((lam_true - lam_pred).powi(2) + dk * dk).sqrt();
        worst = worst.max(err);
    }
    assert!(
        worst <= 10.0 * bound,
        "shadowing error {worst} vs allowance {}",
        10.0 * bound
    );
    println!("conjugacy: worst shadowing error {worst:.3e}, truncation bound {bound:.3e}");
}

#[test]
fn transport_is_monotone_in_the_threshold_sense() {
    // doubling the forcing amplitude cannot lower the convergence threshold
    let g = g2();
    let opts = NormalFormOptions::for_n(2);
    let f1 = forcing(r#"{"n":2,"T":1.0,"p":[{"j":2,"cos":[0.0,0.2]}]}"#);
    let f2 = forcing(r#"{"n":2,"T":1.0,"p":[{"j":2,"cos":[0.0,0.4]}]}"#);
    let r1 = normal_form(g, &f1, &opts).unwrap();
    let r2 = normal_form(g, &f2, &opts).unwrap();
    assert!(r2.convergence.threshold >= r1.convergence.threshold - 1e-12);
    assert!(r1.convergence.threshold > 1.0);
}

#[test]
fn remainder_rows_sit_at_the_documented_exponents() {
    // R_0^j carries exponent numerator n - j
    let g = g2();
    let f = full_n2();
    let opts = NormalFormOptions::for_n(2);
    let nf = normal_form(g, &f, &opts).unwrap();
    for (rows, label) in [
        (&nf.remainder_stage1, "stage 1"),
        (&nf.remainder_stage2, "stage 2"),
    ] {
        for (j, cell) in rows.iter().enumerate() {
            for t in cell {
                assert_eq!(
                    t.q,
                    2 - j as i64,
                    "{label}: R_0^{j} landed at exponent {}",
                    t.q
                );
            }
        }
    }
}

#[test]
fn truncation_bound_scales_down_with_action() {
    let g = g2();
    let f = full_n2();
    let opts = NormalFormOptions::for_n(2);
    let nf = normal_form(g, &f, &opts).unwrap();
    let b_small = nf.truncation.residual_bound(&f, 5.0);
    let b_large = nf.truncation.residual_bound(&f, 500.0);
    assert!(b_large < b_small, "bound must shrink with K: {b_small} vs {b_large}");
    let _ = cast::<f64>(0.0);
}
