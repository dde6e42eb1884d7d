//! Adaptive embedded Runge-Kutta integration, Dormand-Prince 5(4).
//!
//! One fixed method is enough for this crate: every trajectory here is smooth
//! and non-stiff, and the acceptance tolerances sit comfortably inside what a
//! 5th order pair delivers. The stepper is FSAL and fully deterministic.

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};

/// Dormand-Prince a-coefficients (strictly lower triangular part, rows 2..7).
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
/// b - b̂: weights of the embedded error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    /// Upper bound on |h|; infinity disables the cap.
    pub max_step: T,
    pub max_steps: usize,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        Self {
            rtol: cast(1e-10),
            atol: cast(1e-12),
            max_step: T::infinity(),
            max_steps: 100_000_000,
        }
    }
}

/// Integrate y' = rhs(t, y) from t0 to t1 (either direction).
///
/// `observer` fires after every accepted step with the new (t, y); it also
/// fires once for the initial state.
pub fn dopri5<T: Real, const N: usize, F, O>(
    rhs: F,
    t0: T,
    t1: T,
    y0: [T; N],
    opt: &OdeOptions<T>,
    mut observer: O,
) -> Result<[T; N]>
where
    F: Fn(T, &[T; N]) -> [T; N],
    O: FnMut(T, &[T; N]),
{
    if t1 == t0 {
        return Err(Error::Integration("empty time span".into()));
    }
    let span = t1 - t0;
    let dir = span.signum();

    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    observer(t, &y);

    // deterministic initial step: a small fraction of the span, capped;
    // spans near rounding scale are taken in one step
    let mut h = (span.abs() / cast::<T>(100.0)).min(opt.max_step) * dir;
    if h.abs() < cast::<T>(16.0) * T::epsilon() * t0.abs().max(T::one()) {
        h = span;
    }

    let mut steps = 0usize;
    let mut k = [[T::zero(); N]; 7];

    while (t1 - t) * dir > T::zero() {
        steps += 1;
        if steps > opt.max_steps {
            return Err(Error::Integration(format!(
                "step budget exhausted at t = {t}"
            )));
        }
        // do not overshoot the endpoint
        if (t + h - t1) * dir > T::zero() {
            h = t1 - t;
        }
        let h_floor = cast::<T>(16.0) * T::epsilon() * t.abs().max(T::one());
        let remaining = (t1 - t).abs();
        if remaining <= cast::<T>(4.0) * h_floor {
            // endpoint within rounding distance: finish in one step
            h = t1 - t;
        } else if h.abs() < h_floor {
            return Err(Error::Integration(format!(
                "step size underflow at t = {t} (h = {h})"
            )));
        }

        k[0] = k1;
        for stage in 0..6 {
            let mut ys = y;
            for (j, row) in A[stage].iter().enumerate().take(stage + 1) {
                let a = cast::<T>(*row);
                if a != T::zero() {
                    for i in 0..N {
                        ys[i] = ys[i] + k[j][i] * (a * h);
                    }
                }
            }
            k[stage + 1] = rhs(t + cast::<T>(C[stage]) * h, &ys);
        }
        // 5th order solution is the last stage state (FSAL: a-row 7 == b)
        let mut y_new = y;
        for (j, row) in A[5].iter().enumerate().take(6) {
            let a = cast::<T>(*row);
            if a != T::zero() {
                for i in 0..N {
                    y_new[i] = y_new[i] + k[j][i] * (a * h);
                }
            }
        }
        let k_last = rhs(t + h, &y_new);
        k[6] = k_last;

        // weighted RMS error norm
        let mut err_sq = T::zero();
        for i in 0..N {
            let mut e = T::zero();
            for (j, kj) in k.iter().enumerate() {
                e = e + kj[i] * cast::<T>(E[j]);
            }
            e = e * h;
            let sc = opt.atol + opt.rtol * y[i].abs().max(y_new[i].abs());
            let r = e / sc;
            err_sq = err_sq + r * r;
        }
        let err = (err_sq / cast::<T>(N as f64)).sqrt();

        if err <= T::one() {
            t = t + h;
            y = y_new;
            k1 = k_last;
            observer(t, &y);
        }

        // PI-free elementary controller
        let scale = if err == T::zero() {
            cast::<T>(5.0)
        } else {
            (cast::<T>(0.9) * err.powf(cast::<T>(-0.2)))
                .min(cast::<T>(5.0))
                .max(cast::<T>(0.2))
        };
        h = h * scale;
        if h.abs() > opt.max_step {
            h = opt.max_step * dir;
        }
    }
    Ok(y)
}
