//! Built-in invariant battery behind `oscnf verify`.

use oscnf::aa::{aa_hamiltonian, from_action_angle, to_action_angle, ActionAngleState};
use oscnf::diagnostics::{boundedness_scan, scan_seeds};
use oscnf::flow::{det2, period_map, period_map_jacobian, unforced_return_time, IntegratorConfig};
use oscnf::forcing::Forcing;
use oscnf::fourier::Coeff;
use oscnf::gentrig::GenTrig;
use oscnf::nf::{normal_form, NFSeries};

use crate::config::RunConfig;

struct Battery {
    failures: usize,
}

impl Battery {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            println!("ok   {name} ({detail})");
        } else {
            println!("FAIL {name} ({detail})");
            self.failures += 1;
        }
    }
}

pub fn run(
    cfg: &RunConfig,
    g: &GenTrig<f64>,
    forcing: &Forcing<f64>,
    icfg: &IntegratorConfig<f64>,
) -> anyhow::Result<usize> {
    let mut b = Battery { failures: 0 };
    let n = g.n();

    // reference-function identity and symmetries
    let mut worst = 0.0f64;
    for i in 0..20_000 {
        let k = g.period() * i as f64 / 20_000.0;
        let (s, c) = g.sn_cn(k);
        worst = worst.max((c * c + s.powi(2 * n as i32) - 1.0).abs());
    }
    b.check("pythagorean identity", worst < 1e-10, format!("max residual {worst:.2e}"));

    let mut worst = 0.0f64;
    for i in 0..500 {
        let k = g.period() * (i as f64 / 500.0);
        worst = worst.max((g.sn(-k) + g.sn(k)).abs());
        worst = worst.max((g.sn(g.tau() + k) - g.sn(g.tau() - k)).abs());
        worst = worst.max((g.sn(k + g.period()) - g.sn(k)).abs());
    }
    b.check("symmetry relations", worst < 1e-10, format!("max defect {worst:.2e}"));

    // chart round trip
    let mut worst = 0.0f64;
    for i in 0..100 {
        let k = 0.5 + 30.0 * (i as f64 * 0.7661).fract();
        let kap = g.period() * (i as f64 * 0.3917).fract();
        let c = from_action_angle(g, ActionAngleState { k, kappa: kap, t: 0.0 })?;
        let a = to_action_angle(g, c)?;
        worst = worst.max((a.k - k).abs() / k);
    }
    b.check("chart round trip", worst < 1e-8, format!("worst action error {worst:.2e}"));

    // chart Hamiltonian consistency with the multiplier
    if !forcing.is_zero() || true {
        let mult = (n as f64 + 1.0) / n as f64;
        let mut worst = 0.0f64;
        for i in 0..200 {
            let k = 0.5 + 10.0 * (i as f64 * 0.377).fract();
            let kap = g.period() * (i as f64 * 0.911).fract();
            let t = (i as f64 * 0.131).fract();
            let h_aa = aa_hamiltonian(g, forcing, k, kap, t)?;
            let c = from_action_angle(g, ActionAngleState { k, kappa: kap, t })?;
            let h_c = oscnf::aa::cartesian_hamiltonian(forcing, c)?;
            worst = worst.max(((h_aa - mult * h_c) / h_aa.abs().max(1.0)).abs());
        }
        b.check(
            "hamiltonian chart consistency",
            worst < 1e-9,
            format!("worst relative defect {worst:.2e}"),
        );
    }

    if n >= 2 {
        // unforced structure of the period map
        let zero = Forcing::zero(n, forcing.period());
        let s = period_map(g, &zero, icfg, ActionAngleState { k: 8.0, kappa: 0.9, t: 0.0 })?;
        b.check(
            "unforced twist",
            s.f_shift.abs() < 1e-8 && s.g_shift.abs() < 1e-6,
            format!("|F| = {:.2e}, |G| = {:.2e}", s.f_shift.abs(), s.g_shift.abs()),
        );

        let mut worst = 0.0f64;
        for k in [1.0, 20.0, 400.0] {
            let j = period_map_jacobian(
                g,
                forcing,
                icfg,
                ActionAngleState { k, kappa: 1.0, t: 0.0 },
                1e-5,
            )?;
            worst = worst.max((det2(&j) - 1.0).abs());
        }
        b.check("area preservation", worst < 1e-5, format!("worst |det-1| {worst:.2e}"));

        // return-time law against direct integration at one action
        let predicted = unforced_return_time(g, 2.0)?;
        let c0 = from_action_angle(g, ActionAngleState { k: 2.0, kappa: 0.0, t: 0.0 })?;
        let c1 = oscnf::flow::integrate_cartesian(&zero, icfg, c0, predicted)?;
        let err = ((c1.x - c0.x).powi(2) + (c1.y - c0.y).powi(2)).sqrt()
            / (c0.x * c0.x + c0.y * c0.y).sqrt();
        b.check("return-time law", err < 1e-6, format!("closure defect {err:.2e}"));

        // normalization structure for the configured forcing
        let opts = cfg.normal_form.to_core(n);
        let r = normal_form(g, forcing, &opts)?;
        let shape_ok = |h: &NFSeries<f64>, q_from: i64| -> bool {
            (q_from..=(2 * n as i64 - 1)).all(|q| h.kappa_dependent_mass(q).is_zero())
        };
        b.check(
            "intermediate-form shape",
            shape_ok(&r.h_intermediate, n as i64 + 1),
            "angle-free at exponents above n".into(),
        );
        b.check(
            "special-form shape",
            shape_ok(&r.h_special, 2),
            "angle-free at exponents above 1".into(),
        );
        let lie_ok = r
            .lie_exact_stage1
            .iter()
            .chain(&r.lie_exact_stage2)
            .all(|(_, ok)| *ok);
        b.check(
            "lie-equation residuals",
            lie_ok,
            format!(
                "{} solved rows, all identically zero: {}",
                r.lie_exact_stage1.len() + r.lie_exact_stage2.len(),
                lie_ok
            ),
        );
        let ledger_ok = r.smoothness_ledger.iter().all(|(j, d)| {
            *d <= oscnf::forcing::theorem_minimum(*j, n).order()
        });
        b.check(
            "smoothness ledger",
            ledger_ok,
            format!("{:?}", r.smoothness_ledger),
        );
        // the graded original series must agree with the chart Hamiltonian
        let mut worst = 0.0f64;
        for i in 0..100 {
            let k = 1.0 + 10.0 * (i as f64 * 0.713).fract();
            let kap = g.period() * (i as f64 * 0.291).fract();
            let t = (i as f64 * 0.173).fract();
            let a = r.h_original.evaluate(forcing, k, kap, t)?;
            let h = aa_hamiltonian(g, forcing, k, kap, t)?;
            worst = worst.max((a - h).abs() / h.abs().max(1.0));
        }
        b.check(
            "graded series consistency",
            worst < 1e-9,
            format!("worst relative defect {worst:.2e}"),
        );

        // short deterministic scan
        let seeds = scan_seeds(g, 4, cfg.scan.k_min, cfg.scan.k_max, cfg.scan.rng_seed);
        let rep1 = boundedness_scan(g, forcing, icfg, &seeds, 100, cfg.scan.k_ceiling)?;
        let rep2 = boundedness_scan(g, forcing, icfg, &seeds, 100, cfg.scan.k_ceiling)?;
        let deterministic = rep1
            .seeds
            .iter()
            .zip(&rep2.seeds)
            .all(|(a, c)| a.k_min.to_bits() == c.k_min.to_bits() && a.k_max.to_bits() == c.k_max.to_bits());
        b.check(
            "scan determinism",
            deterministic && rep1.escapes == 0,
            format!("escapes {}, bit-identical rerun {}", rep1.escapes, deterministic),
        );
    }

    Ok(b.failures)
}
