//! Quantitative checks tying the normal form to the numeric flow: twist
//! coefficients and their measured counterpart, decay-order fits for the
//! period-map perturbations, and long boundedness scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aa::ActionAngleState;
use crate::error::{Error, Result};
use crate::flow::{period_map, IntegratorConfig};
use crate::forcing::Forcing;
use crate::gentrig::GenTrig;
use crate::nf::NFSeries;
use crate::scalar::{cast, int, Real};

/// Twist data extracted from the special-form Hamiltonian: the angle advance
/// of the period map is α(Λ) = TΛ + Σ_j σ_j Λ^((j-n-1)/(n-1)).
#[derive(Debug, Clone)]
pub struct TwistData<T> {
    pub n: u32,
    pub t_period: T,
    /// (j, σ_j) for j = 2..2n-1.
    pub sigmas: Vec<(usize, T)>,
}

impl<T: Real> TwistData<T> {
    pub fn alpha(&self, lambda: T) -> T {
        let n = self.n as i64;
        let mut acc = self.t_period * lambda;
        for (j, s) in &self.sigmas {
            let e = int::<T>(*j as i64 - n - 1) / int::<T>(n - 1);
            acc = acc + *s * lambda.powf(e);
        }
        acc
    }

    pub fn dalpha(&self, lambda: T) -> T {
        let n = self.n as i64;
        let mut acc = self.t_period;
        for (j, s) in &self.sigmas {
            let e = int::<T>(*j as i64 - n - 1) / int::<T>(n - 1);
            if *j as i64 != n + 1 {
                acc = acc + *s * e * lambda.powf(e - T::one());
            }
        }
        acc
    }
}

/// Integrate the angle-free coefficients of the special form over one
/// backward period: σ_j = (j/(n+1)) ∫_0^{-T} f̄_j dt.
///
/// Angular content at exponents j >= 2 is a shape error here; the input must
/// come out of the second transformation.
pub fn twist_coefficients<T: Real>(
    h_special: &NFSeries<T>,
    f: &Forcing<T>,
) -> Result<TwistData<T>> {
    let n = h_special.n();
    if n < 2 {
        return Err(Error::Domain("twist data requires n >= 2".into()));
    }
    let t_period = f.period();
    let mut sigmas = Vec::new();
    // time mean by a uniform rule, exact for trigonometric polynomials of
    // degree below half the sample count
    let samples = 1024usize;
    for j in 2..=(2 * n as usize - 1) {
        let terms = h_special.terms_at_exponent(j as i64);
        let mut integral = T::zero();
        for (w, term) in &terms {
            if !term.is_kappa_free() {
                return Err(Error::Shape(format!(
                    "exponent {j} still carries angular content; run the second transformation first"
                )));
            }
            let mut mean = T::zero();
            for i in 0..samples {
                let t = t_period * cast::<T>(i as f64 / samples as f64);
                mean = mean + term.profile.a0.eval(f, t)?;
            }
            mean = mean / cast::<T>(samples as f64);
            // ∫_0^{-T} f dt = -T · mean
            integral = integral + *w * mean * (-t_period);
        }
        let sigma = int::<T>(j as i64) / int::<T>(n as i64 + 1) * integral;
        sigmas.push((j, sigma));
    }
    Ok(TwistData {
        n,
        t_period,
        sigmas,
    })
}

/// Finite-difference ∂κ*/∂Λ of the numeric period map, averaged over an
/// angular grid.
pub fn twist_measure<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    lambda: T,
    kappa_grid: &[T],
    h: T,
) -> Result<T> {
    if kappa_grid.is_empty() {
        return Err(Error::Domain("empty angular grid".into()));
    }
    let n = g.n();
    let n1 = int::<T>(n as i64 + 1);
    let nm1 = int::<T>(n as i64 - 1);
    let k_of = |l: T| l.powf(n1 / nm1);
    let mut acc = T::zero();
    for &kappa in kappa_grid {
        let plus = period_map(
            g,
            f,
            cfg,
            ActionAngleState {
                k: k_of(lambda + h),
                kappa,
                t: T::zero(),
            },
        )?;
        let minus = period_map(
            g,
            f,
            cfg,
            ActionAngleState {
                k: k_of(lambda - h),
                kappa,
                t: T::zero(),
            },
        )?;
        acc = acc + (plus.kappa_out - minus.kappa_out) / (h + h);
    }
    Ok(acc / cast::<T>(kappa_grid.len() as f64))
}

/// One Λ sample of the decay measurement.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayPoint<T> {
    pub lambda: T,
    pub max_f: T,
    pub max_g: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit<T> {
    pub points: Vec<DecayPoint<T>>,
    pub slope_f: T,
    pub slope_g: T,
    /// Points dropped because |F| or |G| fell below the noise floor.
    pub dropped_f: usize,
    pub dropped_g: usize,
    /// Set when too few usable points were left for a meaningful fit.
    pub degenerate: bool,
}

fn fit_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = cast::<T>(xs.len() as f64);
    let mx = xs.iter().fold(T::zero(), |a, b| a + *b) / n;
    let my = ys.iter().fold(T::zero(), |a, b| a + *b) / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (x, y) in xs.iter().zip(ys) {
        num = num + (*x - mx) * (*y - my);
        den = den + (*x - mx) * (*x - mx);
    }
    num / den
}

/// Measure max_κ |F| and max_κ |G - (α(Λ) - TΛ)| on a log-spaced Λ range and
/// fit log-log slopes. `twist` refines the angle prediction beyond TΛ; pass
/// `None` to measure against TΛ alone (the single-coefficient convention).
pub fn decay_fit<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    lambda_min: T,
    lambda_max: T,
    points: usize,
    kappa_phases: usize,
    twist: Option<&TwistData<T>>,
) -> Result<DecayFit<T>> {
    if points < 6 {
        return Err(Error::Domain("need at least 6 Λ points".into()));
    }
    if !(lambda_min >= cast(5.0)) {
        return Err(Error::Domain("Λ range must start at 5 or above".into()));
    }
    let n = g.n();
    let n1 = int::<T>(n as i64 + 1);
    let nm1 = int::<T>(n as i64 - 1);
    let floor = cast::<T>(1e-13);

    let mut out = Vec::with_capacity(points);
    let ratio = (lambda_max / lambda_min).powf(T::one() / cast::<T>((points - 1) as f64));
    for i in 0..points {
        let lambda = lambda_min * ratio.powi(i as i32);
        let k = lambda.powf(n1 / nm1);
        let mut max_f = T::zero();
        let mut max_g = T::zero();
        for ik in 0..kappa_phases {
            let kappa = g.period() * cast::<T>(ik as f64 / kappa_phases as f64);
            let s = period_map(
                g,
                f,
                cfg,
                ActionAngleState {
                    k,
                    kappa,
                    t: T::zero(),
                },
            )?;
            // g_shift is measured against TΛ; refine with the twist series
            let correction = match twist {
                Some(t) => t.alpha(lambda) - t.t_period * lambda,
                None => T::zero(),
            };
            max_f = max_f.max(s.f_shift.abs());
            max_g = max_g.max((s.g_shift - correction).abs());
        }
        out.push(DecayPoint {
            lambda,
            max_f,
            max_g,
        });
    }

    let lf: Vec<(T, T)> = out
        .iter()
        .filter(|p| p.max_f > floor)
        .map(|p| (p.lambda.ln(), p.max_f.ln()))
        .collect();
    let lg: Vec<(T, T)> = out
        .iter()
        .filter(|p| p.max_g > floor)
        .map(|p| (p.lambda.ln(), p.max_g.ln()))
        .collect();
    // with no perturbation at all, F and G measure integrator noise and a
    // slope through them is meaningless
    let degenerate = f.is_zero() || lf.len() < 3 || lg.len() < 3;
    let slope_f = if lf.len() >= 2 {
        fit_slope(
            &lf.iter().map(|p| p.0).collect::<Vec<_>>(),
            &lf.iter().map(|p| p.1).collect::<Vec<_>>(),
        )
    } else {
        T::nan()
    };
    let slope_g = if lg.len() >= 2 {
        fit_slope(
            &lg.iter().map(|p| p.0).collect::<Vec<_>>(),
            &lg.iter().map(|p| p.1).collect::<Vec<_>>(),
        )
    } else {
        T::nan()
    };
    Ok(DecayFit {
        dropped_f: out.len() - lf.len(),
        dropped_g: out.len() - lg.len(),
        points: out,
        slope_f,
        slope_g,
        degenerate,
    })
}

/// Per-seed outcome of a boundedness scan.
#[derive(Debug, Clone, Serialize)]
pub struct SeedEnvelope<T> {
    pub k0: T,
    pub kappa0: T,
    pub k_min: T,
    pub k_max: T,
    pub iterations: usize,
    pub escaped: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport<T> {
    pub seeds: Vec<SeedEnvelope<T>>,
    pub escapes: usize,
    pub failures: usize,
    /// max over seeds of (k_max / k_min).
    pub worst_envelope_ratio: T,
}

/// Deterministic seed states for a scan.
pub fn scan_seeds<T: Real>(
    g: &GenTrig<T>,
    count: usize,
    k_min: T,
    k_max: T,
    rng_seed: u64,
) -> Vec<(T, T)> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..count)
        .map(|_| {
            let a: f64 = rng.gen();
            let b: f64 = rng.gen();
            let k = k_min + (k_max - k_min) * cast::<T>(a);
            let kappa = g.period() * cast::<T>(b);
            (k, kappa)
        })
        .collect()
}

/// Iterate the period map and record action envelopes per seed.
///
/// Escape means K exceeded the ceiling or the chart failed; both are
/// recorded, never raised. Seeds are processed independently (in parallel
/// when a rayon pool is configured) and aggregated in input order, so the
/// report does not depend on scheduling.
pub fn boundedness_scan<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    seeds: &[(T, T)],
    iters: usize,
    k_ceiling: T,
) -> Result<ScanReport<T>> {
    if iters > 1_000_000 {
        return Err(Error::Domain("iteration budget capped at 1e6".into()));
    }
    use rayon::prelude::*;
    let envelopes: Vec<SeedEnvelope<T>> = seeds
        .par_iter()
        .map(|&(k0, kappa0)| scan_one(g, f, cfg, k0, kappa0, iters, k_ceiling))
        .collect();
    let escapes = envelopes.iter().filter(|e| e.escaped).count();
    let failures = envelopes.iter().filter(|e| e.failure.is_some()).count();
    let worst = envelopes
        .iter()
        .filter(|e| e.k_min > T::zero())
        .map(|e| e.k_max / e.k_min)
        .fold(T::one(), |a, b| a.max(b));
    Ok(ScanReport {
        seeds: envelopes,
        escapes,
        failures,
        worst_envelope_ratio: worst,
    })
}

fn scan_one<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    k0: T,
    kappa0: T,
    iters: usize,
    k_ceiling: T,
) -> SeedEnvelope<T> {
    use crate::flow::Direction;
    let n = g.n();
    let n1 = int::<T>(n as i64 + 1);
    // iterate in Cartesian coordinates; only the action is tracked, so the
    // angle inversion machinery stays out of the hot loop
    let start = match crate::aa::from_action_angle(
        g,
        ActionAngleState {
            k: k0,
            kappa: kappa0,
            t: T::zero(),
        },
    ) {
        Ok(c) => c,
        Err(e) => {
            return SeedEnvelope {
                k0,
                kappa0,
                k_min: k0,
                k_max: k0,
                iterations: 0,
                escaped: false,
                failure: Some(e.to_string()),
            }
        }
    };
    let step = match cfg.direction {
        Direction::Backward => -f.period(),
        Direction::Forward => f.period(),
    };
    let opts = crate::ode::OdeOptions {
        rtol: cfg.rtol,
        atol: cfg.atol,
        max_step: cfg.max_step,
        max_steps: 100_000_000,
    };
    let mut z = [start.x, start.y];
    let mut k_lo = k0;
    let mut k_hi = k0;
    let mut done = 0usize;
    let mut escaped = false;
    let mut failure = None;
    let two_n = 2 * n as i32;
    for it in 0..iters {
        let t0 = step * cast::<T>(it as f64);
        let t1 = step * cast::<T>((it + 1) as f64);
        match crate::ode::dopri5(
            |t, y: &[T; 2]| {
                let (dx, dy) = crate::flow::vf_xy(f, t, y[0], y[1])
                    .expect("forcing evaluation at order 0");
                [dx, dy]
            },
            t0,
            t1,
            z,
            &opts,
            |_, _| {},
        ) {
            Ok(out) => z = out,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
        let level = z[1] * z[1] + z[0].powi(two_n);
        let k = level.powf(n1 / int::<T>(2 * n as i64));
        k_lo = k_lo.min(k);
        k_hi = k_hi.max(k);
        done = it + 1;
        if k > k_ceiling {
            escaped = true;
            break;
        }
        if k < cast(crate::flow::K_FLOOR) {
            escaped = true;
            failure = Some("trajectory reached the chart floor".into());
            break;
        }
    }
    SeedEnvelope {
        k0,
        kappa0,
        k_min: k_lo,
        k_max: k_hi,
        iterations: done,
        escaped,
        failure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::ForcingConfig;
    use crate::gentrig::build_gentrig;
    use crate::nf::{normal_form, NormalFormOptions};

    fn g2() -> GenTrig<f64> {
        build_gentrig(2, 64, 1e-10).unwrap()
    }

    fn forcing(s: &str) -> Forcing<f64> {
        let cfg: ForcingConfig = serde_json::from_str(s).unwrap();
        Forcing::from_config(&cfg).unwrap()
    }

    #[test]
    fn zero_forcing_has_zero_twist_coefficients() {
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[]}"#);
        let r = normal_form(&g, &f, &NormalFormOptions::for_n(2)).unwrap();
        let tw = twist_coefficients(&r.h_special, &f).unwrap();
        for (_, s) in &tw.sigmas {
            assert_eq!(*s, 0.0);
        }
        assert!((tw.alpha(3.0) - 3.0).abs() < 1e-15);
        assert!((tw.dalpha(3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_p1_twist_oracle() {
        // n=2, p₁ ≡ 1: f̄₂ = -(3/4)·mean(sn²) ≈ -0.342710, σ₂ ≈ +0.228473
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[{"j":1,"const":1.0}]}"#);
        let r = normal_form(&g, &f, &NormalFormOptions::for_n(2)).unwrap();
        let tw = twist_coefficients(&r.h_special, &f).unwrap();
        let sigma2 = tw.sigmas.iter().find(|(j, _)| *j == 2).unwrap().1;
        assert!(
            (sigma2 - 0.228_473_290_522_232).abs() < 1e-9,
            "σ₂ = {sigma2}"
        );
        let f2 = -0.75 * g.sn_power_mean(2, 0).unwrap();
        assert!((f2 + 0.342_709_935_783_348).abs() < 1e-9);
    }

    #[test]
    fn morris_twist_coefficients_vanish() {
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[{"j":0,"cos":[1.0]}]}"#);
        let r = normal_form(&g, &f, &NormalFormOptions::for_n(2)).unwrap();
        let tw = twist_coefficients(&r.h_special, &f).unwrap();
        for (j, s) in &tw.sigmas {
            assert!(s.abs() < 1e-12, "σ_{j} = {s}");
        }
    }

    #[test]
    fn unforced_twist_measure_is_exactly_the_period() {
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[]}"#);
        let cfg = IntegratorConfig::default();
        let grid: Vec<f64> = (0..4).map(|i| g.period() * i as f64 / 4.0).collect();
        let tm = twist_measure(&g, &f, &cfg, 10.0, &grid, 1e-3).unwrap();
        assert!((tm - 1.0).abs() < 1e-6, "got {tm}");
    }

    #[test]
    fn zero_forcing_decay_is_degenerate() {
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[]}"#);
        let cfg = IntegratorConfig::default();
        let fit = decay_fit(&g, &f, &cfg, 10.0, 40.0, 6, 4, None).unwrap();
        assert!(fit.degenerate, "noise-floor points must be dropped: {fit:?}");
    }

    #[test]
    fn scan_is_deterministic_and_conserves_unforced_action() {
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[]}"#);
        let cfg = IntegratorConfig::default();
        let seeds = scan_seeds(&g, 4, 5.0, 20.0, 7);
        let a = boundedness_scan(&g, &f, &cfg, &seeds, 20, 1e4).unwrap();
        let b = boundedness_scan(&g, &f, &cfg, &seeds, 20, 1e4).unwrap();
        for (x, y) in a.seeds.iter().zip(&b.seeds) {
            assert_eq!(x.k_min.to_bits(), y.k_min.to_bits());
            assert_eq!(x.k_max.to_bits(), y.k_max.to_bits());
        }
        assert_eq!(a.escapes, 0);
        // unforced envelopes collapse
        assert!(a.worst_envelope_ratio < 1.0 + 1e-8);
    }
}
