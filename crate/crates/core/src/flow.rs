//! Trajectory integration and the period map of the forced oscillator.
//!
//! Integration always runs in Cartesian coordinates by default: the
//! action-angle chart has a reduction seam at κ ≡ 0 (mod 4τ) and a
//! singularity at the origin, and there is no reason to drag either through
//! an ODE solver. Conversion happens at endpoints only. The continuous angle
//! (winding included) is recovered by unwrapping κ across accepted steps,
//! with the step size capped well below a quarter period so no wrap can be
//! missed.

use crate::aa::{from_action_angle, ActionAngleState, CartesianState};
use crate::error::{Error, Result};
use crate::forcing::Forcing;
use crate::gentrig::GenTrig;
use crate::ode::{dopri5, OdeOptions};
use crate::scalar::{cast, int, Real};

/// Action floor below which chart conversions refuse to run.
pub const K_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Integrate one period forward: 0 → T.
    Forward,
    /// Integrate one period backward: 0 → -T (the convention under which the
    /// unforced twist TΛ comes out positive).
    Backward,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig<T> {
    pub rtol: T,
    pub atol: T,
    pub max_step: T,
    pub direction: Direction,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            rtol: cast(1e-10),
            atol: cast(1e-12),
            max_step: T::infinity(),
            direction: Direction::Backward,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let cap = cast::<T>(1e-6);
        if !(self.rtol > T::zero() && self.rtol <= cap) || !(self.atol > T::zero() && self.atol <= cap)
        {
            return Err(Error::Domain(
                "integrator tolerances must lie in (0, 1e-6]".into(),
            ));
        }
        Ok(())
    }

    fn ode_options(&self) -> OdeOptions<T> {
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step,
            max_steps: 100_000_000,
        }
    }
}

/// One evaluation of the period map.
#[derive(Debug, Clone, Copy)]
pub struct PeriodMapSample<T> {
    pub lambda_in: T,
    pub kappa_in: T,
    pub lambda_out: T,
    /// Unwrapped angle after one period (continuous continuation of κ_in).
    pub kappa_out: T,
    /// Completed 4τ periods inside κ_out: κ_out = wrap(κ_out) + 4τ·winding.
    pub winding: i64,
    pub k_out: T,
    /// F = Λ* - Λ.
    pub f_shift: T,
    /// G measured against the unforced twist: κ* - κ - TΛ.
    pub g_shift: T,
}

/// Cartesian vector field: ẋ = y, ẏ = -n x^(2n-1) + Σ p_j(t) x^j.
pub fn vf_xy<T: Real>(f: &Forcing<T>, t: T, x: T, y: T) -> Result<(T, T)> {
    let n = f.n();
    let mut acc = -int::<T>(n as i64) * x.powi(2 * n as i32 - 1);
    let mut xp = T::one();
    for j in 0..=(2 * n as usize - 2) {
        let p = f.eval_p(j, t, 0)?;
        if p != T::zero() {
            acc = acc + p * xp;
        }
        xp = xp * x;
    }
    Ok((y, acc))
}

/// Action-angle vector field in (Λ, κ) with Λ = K^((n-1)/(n+1)).
///
/// Derived from K̇ = ∂H/∂κ, κ̇ = -∂H/∂K for the chart Hamiltonian; for zero
/// forcing it reduces to (Λ̇, κ̇) = (0, -Λ). Requires n ≥ 2 (Λ degenerates
/// for the harmonic oscillator).
pub fn vf_aa<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    t: T,
    lambda: T,
    kappa: T,
) -> Result<(T, T)> {
    let n = g.n();
    if n < 2 {
        return Err(Error::Domain("Λ requires n >= 2".into()));
    }
    if !(lambda > T::zero()) {
        return Err(Error::Domain("Λ must be positive".into()));
    }
    let n_t = int::<T>(n as i64);
    let n1 = int::<T>(n as i64 + 1);
    let nm1 = int::<T>(n as i64 - 1);
    let k = lambda.powf(n1 / nm1);
    let (sn, cn) = g.sn_cn(kappa);

    let mut k_dot = T::zero();
    let mut kappa_dot = -lambda;
    let mut sn_pow_jm1 = T::one(); // sn^(j-1)
    for j in 1..=(2 * n as usize - 1) {
        let p = f.eval_p(j - 1, t, 0)?;
        if p != T::zero() {
            let j_t = int::<T>(j as i64);
            // f_j = -(n+1)/(j n) sn^j p,   ∂f_j/∂κ = -(n+1)/n sn^(j-1) cn p
            let fj = -n1 / (j_t * n_t) * sn_pow_jm1 * sn * p;
            let dfj = -n1 / n_t * sn_pow_jm1 * cn * p;
            k_dot = k_dot + k.powf(j_t / n1) * dfj;
            kappa_dot = kappa_dot - j_t / n1 * k.powf((j_t - n1) / n1) * fj;
        }
        sn_pow_jm1 = sn_pow_jm1 * sn;
    }
    let lambda_dot = nm1 / n1 * k.powf(cast::<T>(-2.0) / n1) * k_dot;
    Ok((lambda_dot, kappa_dot))
}

/// Integrate the forced oscillator in Cartesian coordinates from `state.t`
/// to `t1`.
pub fn integrate_cartesian<T: Real>(
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    state: CartesianState<T>,
    t1: T,
) -> Result<CartesianState<T>> {
    cfg.validate()?;
    let y = dopri5(
        |t, z: &[T; 2]| {
            let (dx, dy) = vf_xy(f, t, z[0], z[1]).expect("forcing evaluation at order 0");
            [dx, dy]
        },
        state.t,
        t1,
        [state.x, state.y],
        &cfg.ode_options(),
        |_, _| {},
    )?;
    Ok(CartesianState {
        x: y[0],
        y: y[1],
        t: t1,
    })
}

/// Integrate in the (Λ, κ) chart directly (n ≥ 2, trajectory must stay away
/// from the origin).
pub fn integrate_action_angle<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    state: ActionAngleState<T>,
    t1: T,
) -> Result<ActionAngleState<T>> {
    cfg.validate()?;
    let n = g.n();
    let n1 = int::<T>(n as i64 + 1);
    let nm1 = int::<T>(n as i64 - 1);
    let lambda0 = state.k.powf(nm1 / n1);
    let y = dopri5(
        |t, z: &[T; 2]| {
            let (dl, dk) = vf_aa(g, f, t, z[0], z[1]).expect("action-angle vector field");
            [dl, dk]
        },
        state.t,
        t1,
        [lambda0, state.kappa],
        &cfg.ode_options(),
        |_, _| {},
    )?;
    Ok(ActionAngleState {
        k: y[0].powf(n1 / nm1),
        kappa: y[1],
        t: t1,
    })
}

/// Unforced return time 4τ K^(-(n-1)/(n+1)).
pub fn unforced_return_time<T: Real>(g: &GenTrig<T>, k: T) -> Result<T> {
    if !(k > T::zero()) {
        return Err(Error::Domain("action must be positive".into()));
    }
    let n = g.n() as i64;
    let expo = -int::<T>(n - 1) / int::<T>(n + 1);
    Ok(g.period() * k.powf(expo))
}

fn k_of_xy<T: Real>(n: u32, x: T, y: T) -> T {
    let level = y * y + x.powi(2 * n as i32);
    level.powf(int::<T>(n as i64 + 1) / int::<T>(2 * n as i64))
}

/// One period of the forced flow viewed in (Λ, κ), with winding tracked.
///
/// The trajectory is integrated in Cartesian coordinates; the angle is
/// unwrapped at every accepted step. A step cap of an eighth of the current
/// return time makes quarter-period skips impossible. K is monitored against
/// [`K_FLOOR`] along the whole trajectory.
pub fn period_map<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    state: ActionAngleState<T>,
) -> Result<PeriodMapSample<T>> {
    cfg.validate()?;
    let n = g.n();
    if n < 2 {
        return Err(Error::Domain("the period map in Λ requires n >= 2".into()));
    }
    let floor = cast::<T>(K_FLOOR);
    if state.k < floor {
        return Err(Error::ChartSingularity {
            k: state.k.to_f64().unwrap_or(f64::NAN),
            floor: K_FLOOR,
        });
    }
    let t_end = match cfg.direction {
        Direction::Backward => state.t - f.period(),
        Direction::Forward => state.t + f.period(),
    };

    let n1 = int::<T>(n as i64 + 1);
    let nm1 = int::<T>(n as i64 - 1);
    let lambda_in = state.k.powf(nm1 / n1);
    let start = from_action_angle(g, state)?;

    // cap the step so the angle cannot advance more than ~half a quarter
    // period between observer calls
    let ret = unforced_return_time(g, state.k)?;
    let mut opts = cfg.ode_options();
    opts.max_step = opts.max_step.min(ret / cast::<T>(8.0));

    let per = g.period();
    let half_per = per * cast::<T>(0.5);
    let mut kappa_cont = state.kappa;
    let mut chart_failure: Option<Error> = None;
    let end = dopri5(
        |t, z: &[T; 2]| {
            let (dx, dy) = vf_xy(f, t, z[0], z[1]).expect("forcing evaluation at order 0");
            [dx, dy]
        },
        state.t,
        t_end,
        [start.x, start.y],
        &opts,
        |_t, z| {
            if chart_failure.is_some() {
                return;
            }
            let k = k_of_xy(n, z[0], z[1]);
            if k < floor {
                chart_failure = Some(Error::ChartSingularity {
                    k: k.to_f64().unwrap_or(f64::NAN),
                    floor: K_FLOOR,
                });
                return;
            }
            let sn = z[0] * k.powf(-T::one() / n1);
            let cn = -z[1] * k.powf(-int::<T>(n as i64) / n1);
            match g.kappa_from_sncn(sn, cn) {
                Ok(kw) => {
                    // nearest continuation of the running angle
                    let base = kappa_cont - per * (kappa_cont / per).floor();
                    let mut d = kw - base;
                    if d > half_per {
                        d = d - per;
                    } else if d < -half_per {
                        d = d + per;
                    }
                    kappa_cont = kappa_cont + d;
                }
                Err(e) => chart_failure = Some(e),
            }
        },
    )?;
    if let Some(e) = chart_failure {
        return Err(e);
    }

    let k_out = k_of_xy(n, end[0], end[1]);
    let lambda_out = k_out.powf(nm1 / n1);
    let wrapped = kappa_cont - per * (kappa_cont / per).floor();
    let winding = ((kappa_cont - wrapped) / per).round().to_i64().unwrap_or(0);
    // unforced angle advance over one period: +TΛ backward, -TΛ forward
    let twist = match cfg.direction {
        Direction::Backward => f.period() * lambda_in,
        Direction::Forward => -f.period() * lambda_in,
    };
    Ok(PeriodMapSample {
        lambda_in,
        kappa_in: state.kappa,
        lambda_out,
        kappa_out: kappa_cont,
        winding,
        k_out,
        f_shift: lambda_out - lambda_in,
        g_shift: kappa_cont - state.kappa - twist,
    })
}

/// One output row of a sampled trajectory.
#[derive(Debug, Clone, Copy)]
pub struct OrbitSample<T> {
    pub t: T,
    pub x: T,
    pub y: T,
    pub k: T,
    /// Angle reduced to [0, 4τ).
    pub kappa: T,
    pub lambda: T,
    /// Completed 4τ periods of the continuous angle.
    pub winding: i64,
}

/// Integrate a trajectory and report chart data at `points + 1` uniformly
/// spaced times, with the angle unwrapped continuously across the whole
/// span.
pub fn orbit_samples<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    state: ActionAngleState<T>,
    t1: T,
    points: usize,
) -> Result<Vec<OrbitSample<T>>> {
    cfg.validate()?;
    let n = g.n();
    if points == 0 {
        return Err(Error::Domain("need at least one sample interval".into()));
    }
    let floor = cast::<T>(K_FLOOR);
    let n1 = int::<T>(n as i64 + 1);
    let nm1 = int::<T>(n as i64 - 1);
    let per = g.period();
    let half_per = per * cast::<T>(0.5);

    let mut kappa_cont = state.kappa;
    let mut chart_failure: Option<Error> = None;
    let start = from_action_angle(g, state)?;
    let mut z = [start.x, start.y];

    let ret = unforced_return_time(g, state.k)?;
    let mut opts = cfg.ode_options();
    opts.max_step = opts.max_step.min(ret / cast::<T>(8.0));

    let mut out = Vec::with_capacity(points + 1);
    let mut push_sample = |t: T, z: &[T; 2], kappa_cont: T| -> Result<()> {
        let k = k_of_xy(n, z[0], z[1]);
        if k < floor {
            return Err(Error::ChartSingularity {
                k: k.to_f64().unwrap_or(f64::NAN),
                floor: K_FLOOR,
            });
        }
        let wrapped = kappa_cont - per * (kappa_cont / per).floor();
        let winding = ((kappa_cont - wrapped) / per).round().to_i64().unwrap_or(0);
        let lambda = if n >= 2 {
            k.powf(nm1 / n1)
        } else {
            T::one()
        };
        out.push(OrbitSample {
            t,
            x: z[0],
            y: z[1],
            k,
            kappa: wrapped,
            lambda,
            winding,
        });
        Ok(())
    };
    push_sample(state.t, &z, kappa_cont)?;

    for i in 0..points {
        let ta = state.t + (t1 - state.t) * cast::<T>(i as f64 / points as f64);
        let tb = if i + 1 == points {
            t1
        } else {
            state.t + (t1 - state.t) * cast::<T>((i + 1) as f64 / points as f64)
        };
        z = dopri5(
            |t, y: &[T; 2]| {
                let (dx, dy) = vf_xy(f, t, y[0], y[1]).expect("forcing evaluation at order 0");
                [dx, dy]
            },
            ta,
            tb,
            z,
            &opts,
            |_t, y| {
                if chart_failure.is_some() {
                    return;
                }
                let k = k_of_xy(n, y[0], y[1]);
                if k < floor {
                    chart_failure = Some(Error::ChartSingularity {
                        k: k.to_f64().unwrap_or(f64::NAN),
                        floor: K_FLOOR,
                    });
                    return;
                }
                let sn = y[0] * k.powf(-T::one() / n1);
                let cn = -y[1] * k.powf(-int::<T>(n as i64) / n1);
                match g.kappa_from_sncn(sn, cn) {
                    Ok(kw) => {
                        let base = kappa_cont - per * (kappa_cont / per).floor();
                        let mut d = kw - base;
                        if d > half_per {
                            d = d - per;
                        } else if d < -half_per {
                            d = d + per;
                        }
                        kappa_cont = kappa_cont + d;
                    }
                    Err(e) => chart_failure = Some(e),
                }
            },
        )?;
        if let Some(e) = chart_failure.take() {
            return Err(e);
        }
        push_sample(tb, &z, kappa_cont)?;
    }
    Ok(out)
}

/// Jacobian of the period map in the (K, κ) chart by central differences.
pub fn period_map_jacobian<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    cfg: &IntegratorConfig<T>,
    state: ActionAngleState<T>,
    h: T,
) -> Result<[[T; 2]; 2]> {
    if !(h >= cast(1e-7) && h <= cast(1e-3)) {
        return Err(Error::Domain(
            "finite-difference step must lie in [1e-7, 1e-3]".into(),
        ));
    }
    let hk = h * state.k.max(T::one());
    let sample = |k: T, kappa: T| -> Result<(T, T)> {
        let s = period_map(
            g,
            f,
            cfg,
            ActionAngleState {
                k,
                kappa,
                t: state.t,
            },
        )?;
        Ok((s.k_out, s.kappa_out))
    };
    let (kp, ap) = sample(state.k + hk, state.kappa)?;
    let (km, am) = sample(state.k - hk, state.kappa)?;
    let (kp2, ap2) = sample(state.k, state.kappa + h)?;
    let (km2, am2) = sample(state.k, state.kappa - h)?;
    let two = cast::<T>(2.0);
    Ok([
        [(kp - km) / (two * hk), (kp2 - km2) / (two * h)],
        [(ap - am) / (two * hk), (ap2 - am2) / (two * h)],
    ])
}

pub fn det2<T: Real>(m: &[[T; 2]; 2]) -> T {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}
