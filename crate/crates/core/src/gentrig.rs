//! Generalized sine/cosine pair for the reference equation
//!
//! ```text
//! ξ'' + n ξ^(2n-1) = 0,   ξ(0) = 0,  ξ'(0) = 1,
//! ```
//!
//! written `sn(κ)` with `cn = sn'`. For n = 1 these are sine and cosine; for
//! larger n they keep the same symmetry skeleton with the quarter period τ
//! playing the role of π/2. Everything here rests on two facts:
//!
//! * `cn² + sn^(2n) = 1` (energy of the reference flow), and
//! * τ has the closed form `B(1/(2n), 1/2) / (2n)`, cross-checked at build
//!   time against direct quadrature of `∫₀¹ (1-ξ^(2n))^(-1/2) dξ`.
//!
//! Only `[0, τ]` is ever integrated; evaluation anywhere else goes through the
//! symmetry relations, so error never accumulates over periods.

use crate::error::{Error, Result};
use crate::fourier::TrigSeries;
use crate::ode::{dopri5, OdeOptions};
use crate::scalar::{cast, int, Real};
use crate::special::{beta, tanh_sinh_01};

/// Dense-table resolution over `[0, τ]` (intervals).
const TABLE_INTERVALS: usize = 2048;
/// Uniform s-resolution of the inverse table.
const INVERSE_POINTS: usize = 1025;
/// Sample count for the Fourier analysis of one full period.
const DFT_SAMPLES: usize = 4096;

/// Precomputed model of sn/cn for one degree parameter n.
#[derive(Debug, Clone)]
pub struct GenTrig<T: Real> {
    n: u32,
    tau: T,
    step: T,
    sn_table: Vec<T>,
    cn_table: Vec<T>,
    sn_harmonics: TrigSeries<T, T>,
    cn_harmonics: TrigSeries<T, T>,
    /// κ values at uniform s ∈ [0,1]; strictly increasing.
    inverse_table: Vec<T>,
    build_tolerance: T,
    harmonic_count: usize,
}

/// A truncated angular profile of sn^a cn^b together with its quality report.
#[derive(Debug, Clone)]
pub struct Profile<T: Real> {
    pub series: TrigSeries<T, T>,
    /// l2 mass of the harmonics beyond the truncation order.
    pub tail_residual: T,
    /// |DFT mean - closed-form mean|; the closed form wins.
    pub mean_shift: T,
}

/// Construct the model: quarter period, dense tables, inverse map, harmonics.
pub fn build_gentrig<T: Real>(n: u32, harmonics: usize, tol: T) -> Result<GenTrig<T>> {
    if n < 1 {
        return Err(Error::Domain("degree parameter n must be >= 1".into()));
    }
    if harmonics < 8 {
        return Err(Error::Domain("harmonic count must be >= 8".into()));
    }
    if !(tol > T::zero()) || tol > cast(1e-8) {
        return Err(Error::Domain(
            "build tolerance must lie in (0, 1e-8]".into(),
        ));
    }

    // closed form first, quadrature as the independent cross-check
    let two_n = int::<T>(2 * n as i64);
    let tau = beta(T::one() / two_n, cast::<T>(0.5)) / two_n;
    let q = tanh_sinh_01(
        |x: T, omx: T| {
            // 1 - x^(2n) = (1-x) Σ x^k, stable at both endpoints
            let mut geom = T::one();
            let mut acc = T::one();
            for _ in 1..(2 * n) {
                geom = geom * x;
                acc = acc + geom;
            }
            (omx * acc).sqrt().recip()
        },
        tol * cast(0.01),
    )?;
    if (q.value - tau).abs() > cast::<T>(10.0) * tol {
        return Err(Error::Construction(format!(
            "quarter period mismatch: closed form {tau} vs quadrature {} (integrator misconfiguration?)",
            q.value
        )));
    }

    // integrate the reference equation across [0, τ], landing on grid nodes
    let intervals = TABLE_INTERVALS;
    let step = tau / cast::<T>(intervals as f64);
    let mut sn_table = Vec::with_capacity(intervals + 1);
    let mut cn_table = Vec::with_capacity(intervals + 1);
    sn_table.push(T::zero());
    cn_table.push(T::one());
    let rk = OdeOptions {
        rtol: cast::<T>(1e-12).max(cast::<T>(50.0) * T::epsilon()),
        atol: cast::<T>(1e-14).max(cast::<T>(50.0) * T::epsilon()),
        ..OdeOptions::default()
    };
    let pow = (2 * n - 1) as i32;
    let rhs = |_t: T, y: &[T; 2]| [y[1], -int::<T>(n as i64) * y[0].powi(pow)];
    let mut y = [T::zero(), T::one()];
    for i in 0..intervals {
        let t0 = step * cast::<T>(i as f64);
        let t1 = if i + 1 == intervals {
            tau
        } else {
            step * cast::<T>((i + 1) as f64)
        };
        y = dopri5(rhs, t0, t1, y, &rk, |_, _| {})?;
        sn_table.push(y[0]);
        cn_table.push(y[1]);
    }

    // boundary and identity sanity on the raw table
    if (sn_table[intervals] - T::one()).abs() > tol || cn_table[intervals].abs() > tol {
        return Err(Error::Construction(format!(
            "reference solution missed the quarter-period endpoint: sn(τ)={}, cn(τ)={}",
            sn_table[intervals], cn_table[intervals]
        )));
    }
    for i in 0..=intervals {
        let s = sn_table[i];
        let c = cn_table[i];
        let r = (c * c + s.powi(2 * n as i32) - T::one()).abs();
        if r > tol {
            return Err(Error::Construction(format!(
                "energy identity residual {r} above tolerance at table node {i}"
            )));
        }
    }

    let mut g = GenTrig {
        n,
        tau,
        step,
        sn_table,
        cn_table,
        sn_harmonics: TrigSeries::zero(T::one()),
        cn_harmonics: TrigSeries::zero(T::one()),
        inverse_table: Vec::new(),
        build_tolerance: tol,
        harmonic_count: harmonics,
    };

    // inverse table at uniform s, strictly increasing by construction
    let mut inv = Vec::with_capacity(INVERSE_POINTS);
    for i in 0..INVERSE_POINTS {
        let s = cast::<T>(i as f64 / (INVERSE_POINTS - 1) as f64);
        inv.push(g.asn_search(s));
    }
    for w in inv.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Construction(
                "inverse table failed to be strictly increasing".into(),
            ));
        }
    }
    g.inverse_table = inv;

    g.sn_harmonics = g.profile(1, 0, harmonics)?.series;
    g.cn_harmonics = g.profile(0, 1, harmonics)?.series;
    Ok(g)
}

impl<T: Real> GenTrig<T> {
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Quarter period τ.
    pub fn tau(&self) -> T {
        self.tau
    }

    /// Full period 4τ.
    pub fn period(&self) -> T {
        cast::<T>(4.0) * self.tau
    }

    /// Base angular frequency π/(2τ).
    pub fn omega(&self) -> T {
        T::FRAC_PI_2() / self.tau
    }

    pub fn build_tolerance(&self) -> T {
        self.build_tolerance
    }

    pub fn harmonic_count(&self) -> usize {
        self.harmonic_count
    }

    pub fn sn_harmonics(&self) -> &TrigSeries<T, T> {
        &self.sn_harmonics
    }

    pub fn cn_harmonics(&self) -> &TrigSeries<T, T> {
        &self.cn_harmonics
    }

    /// Fold κ into the table range via the symmetry relations.
    /// Returns (κ_folded, sn_sign, cn_sign).
    fn fold(&self, kappa: T) -> (T, T, T) {
        let per = self.period();
        let mut r = kappa - per * (kappa / per).floor();
        if r < T::zero() {
            r = T::zero();
        }
        let two_tau = self.tau + self.tau;
        let mut sn_sign = T::one();
        let mut cn_sign = T::one();
        if r >= two_tau {
            r = r - two_tau;
            sn_sign = -sn_sign;
            cn_sign = -cn_sign;
        }
        if r > self.tau {
            r = two_tau - r;
            cn_sign = -cn_sign;
        }
        (r, sn_sign, cn_sign)
    }

    /// Degree-5 local Lagrange interpolation on a dense table.
    fn interp(table: &[T], step: T, x: T) -> T {
        let m = table.len();
        let fi = x / step;
        let i = (fi.to_usize().unwrap_or(0)).min(m - 1);
        let lo = i.saturating_sub(2).min(m - 6);
        let mut acc = T::zero();
        for a in 0..6 {
            let xa = cast::<T>((lo + a) as f64);
            let mut w = T::one();
            for b in 0..6 {
                if a != b {
                    let xb = cast::<T>((lo + b) as f64);
                    w = w * (fi - xb) / (xa - xb);
                }
            }
            acc = acc + w * table[lo + a];
        }
        acc
    }

    /// sn and cn at any real κ.
    pub fn sn_cn(&self, kappa: T) -> (T, T) {
        let (r, ss, cs) = self.fold(kappa);
        let s = Self::interp(&self.sn_table, self.step, r);
        let c = Self::interp(&self.cn_table, self.step, r);
        (ss * s, cs * c)
    }

    pub fn sn(&self, kappa: T) -> T {
        self.sn_cn(kappa).0
    }

    pub fn cn(&self, kappa: T) -> T {
        self.sn_cn(kappa).1
    }

    /// Mean of sn^a cn^b over one period.
    ///
    /// Zero whenever the integrand is angularly odd (a odd or b = 1);
    /// otherwise the closed Beta-ratio form.
    pub fn sn_power_mean(&self, a: u32, b: u32) -> Result<T> {
        if b > 1 {
            return Err(Error::Domain(
                "profiles are kept cn-reduced: b must be 0 or 1".into(),
            ));
        }
        if a % 2 == 1 || b == 1 {
            return Ok(T::zero());
        }
        let two_n = int::<T>(2 * self.n as i64);
        let half = cast::<T>(0.5);
        Ok(beta((int::<T>(a as i64) + T::one()) / two_n, half)
            / beta(T::one() / two_n, half))
    }

    /// Truncated Fourier profile of sn^a cn^b with base frequency π/(2τ).
    ///
    /// The harmonic-0 slot is the closed-form mean; the DFT value is only
    /// used to report how far the table analysis drifted from it. Harmonics
    /// that vanish by parity are zeroed structurally rather than left at
    /// rounding noise.
    pub fn profile(&self, a: u32, b: u32, m: usize) -> Result<Profile<T>> {
        if b > 1 {
            return Err(Error::Domain(
                "profiles are kept cn-reduced: b must be 0 or 1".into(),
            ));
        }
        let nsamp = DFT_SAMPLES;
        let per = self.period();
        let mut f = Vec::with_capacity(nsamp);
        for i in 0..nsamp {
            let kappa = per * cast::<T>(i as f64 / nsamp as f64);
            let (s, c) = self.sn_cn(kappa);
            let mut v = T::one();
            for _ in 0..a {
                v = v * s;
            }
            if b == 1 {
                v = v * c;
            }
            f.push(v);
        }

        // parity of sn^a cn^b decides which half of the basis survives:
        //   b=0, a even: cos, even k      b=0, a odd: sin, odd k
        //   b=1, a even: cos, odd k       b=1, a odd: sin, even k
        let use_cos = a % 2 == 0;
        let keep = |k: usize| -> bool {
            let odd = k % 2 == 1;
            match (a % 2 == 0, b) {
                (true, 0) => !odd,
                (false, 0) => odd,
                (true, _) => odd,
                (false, _) => !odd,
            }
        };

        let kmax = (2 * m).min(nsamp / 2 - 1);
        let two_over = cast::<T>(2.0 / nsamp as f64);
        let mut series = TrigSeries::zero(self.omega());
        let mut tail_sq = T::zero();
        let two_pi = cast::<T>(2.0) * T::PI();
        for k in 1..=kmax {
            if !keep(k) {
                continue;
            }
            let mut acc = T::zero();
            for (i, fv) in f.iter().enumerate() {
                let idx = (i * k) % nsamp;
                let ang = two_pi * cast::<T>(idx as f64 / nsamp as f64);
                let basis = if use_cos { ang.cos() } else { ang.sin() };
                acc = acc + *fv * basis;
            }
            let mut coeff = acc * two_over;
            // analysis noise from the table sits around 1e-16; snap it out
            if coeff.abs() <= cast(1e-14) {
                coeff = T::zero();
            }
            if k <= m {
                if use_cos {
                    series.add_cos(k, coeff);
                } else {
                    series.add_sin(k, coeff);
                }
            } else {
                tail_sq = tail_sq + coeff * coeff;
            }
        }
        series.trim();

        let exact_mean = self.sn_power_mean(a, b)?;
        let dft_mean = f.iter().fold(T::zero(), |acc, v| acc + *v) / cast::<T>(nsamp as f64);
        series.a0 = exact_mean;
        Ok(Profile {
            series,
            tail_residual: tail_sq.sqrt(),
            mean_shift: (dft_mean - exact_mean).abs(),
        })
    }

    /// Inverse of sn restricted to [0, τ], for s ∈ [0, 1].
    pub fn asn(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        if s >= T::one() {
            return self.tau;
        }
        if self.inverse_table.is_empty() {
            return self.asn_search(s);
        }
        // bracket from the inverse table, then bisect the interpolant
        let fs = s * cast::<T>((INVERSE_POINTS - 1) as f64);
        let i = fs.to_usize().unwrap_or(0).min(INVERSE_POINTS - 2);
        let lo = self.inverse_table[i];
        let hi = self.inverse_table[i + 1];
        self.bisect_sn(s, lo, hi)
    }

    /// Table-free inverse used during construction.
    fn asn_search(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        if s >= T::one() {
            return self.tau;
        }
        // the raw table is sorted; narrow to one cell, then bisect
        let idx = self
            .sn_table
            .partition_point(|v| *v < s)
            .clamp(1, self.sn_table.len() - 1);
        let lo = self.step * cast::<T>((idx - 1) as f64);
        let hi = (self.step * cast::<T>(idx as f64)).min(self.tau);
        self.bisect_sn(s, lo, hi)
    }

    fn bisect_sn(&self, s: T, mut lo: T, mut hi: T) -> T {
        let half = cast::<T>(0.5);
        for _ in 0..60 {
            let mid = (lo + hi) * half;
            if mid <= lo || mid >= hi {
                break;
            }
            let v = Self::interp(&self.sn_table, self.step, mid);
            if v < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * half
    }

    /// Recover κ ∈ [0, 4τ) from a (sn, cn) pair.
    ///
    /// Inputs are renormalized onto the oval cn² + sn^(2n) = 1 before
    /// inversion; the quadrant comes from the signs via the symmetry
    /// relations.
    pub fn kappa_from_sncn(&self, s: T, c: T) -> Result<T> {
        let level = c * c + s.powi(2 * self.n as i32);
        if (level - T::one()).abs() > cast(1e-6) {
            return Err(Error::Domain(format!(
                "(sn, cn) = ({s}, {c}) is too far off the unit oval (level {level})"
            )));
        }
        let inv2n = T::one() / int::<T>(2 * self.n as i64);
        let s = s * level.powf(-inv2n);
        let c = c * level.powf(cast(-0.5));
        let two_tau = self.tau + self.tau;
        let four_tau = self.period();
        let k = if s >= T::zero() && c > T::zero() {
            self.asn(s)
        } else if s > T::zero() && c <= T::zero() {
            two_tau - self.asn(s)
        } else if s <= T::zero() && c < T::zero() {
            two_tau + self.asn(-s)
        } else {
            four_tau - self.asn(-s)
        };
        Ok(if k >= four_tau { k - four_tau } else { k })
    }
}
