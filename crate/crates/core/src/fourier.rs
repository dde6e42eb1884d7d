//! Real trigonometric series with pluggable coefficients.
//!
//! One series type serves two roles. With scalar coefficients it represents
//! the reference-function profiles and the periodic forcing coefficients.
//! With formal-polynomial coefficients (see [`crate::coeffexpr`]) it is the
//! angular profile algebra of the normal-form engine, where products,
//! derivatives and zero-mean antiderivatives must be exact in coefficient
//! space.

use crate::scalar::{cast, Real};

/// Coefficient ring for [`TrigSeries`].
pub trait Coeff<T: Real>: Clone + PartialEq + core::fmt::Debug {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale(&self, factor: T) -> Self;
    fn mul(&self, other: &Self) -> Self;
    /// Coefficient with every scalar replaced by its absolute value
    /// (used for truncation-mass accounting).
    fn abs(&self) -> Self;
}

impl<T: Real> Coeff<T> for T {
    fn zero() -> Self {
        T::zero()
    }
    fn is_zero(&self) -> bool {
        *self == T::zero()
    }
    fn add(&self, other: &Self) -> Self {
        *self + *other
    }
    fn neg(&self) -> Self {
        -*self
    }
    fn scale(&self, factor: T) -> Self {
        *self * factor
    }
    fn mul(&self, other: &Self) -> Self {
        *self * *other
    }
    fn abs(&self) -> Self {
        num_traits::Float::abs(*self)
    }
}

/// Truncated series  a0 + Σ_{k=1..M} ( c_k cos(kωθ) + s_k sin(kωθ) ).
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries<T: Real, C: Coeff<T>> {
    /// Base frequency ω.
    pub omega: T,
    pub a0: C,
    pub cos: Vec<C>,
    pub sin: Vec<C>,
}

impl<T: Real, C: Coeff<T>> TrigSeries<T, C> {
    pub fn zero(omega: T) -> Self {
        Self {
            omega,
            a0: C::zero(),
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn constant(omega: T, value: C) -> Self {
        Self {
            omega,
            a0: value,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn harmonics(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn is_zero(&self) -> bool {
        self.a0.is_zero()
            && self.cos.iter().all(C::is_zero)
            && self.sin.iter().all(C::is_zero)
    }

    /// True when the series carries no angular dependence.
    pub fn is_constant(&self) -> bool {
        self.cos.iter().all(C::is_zero) && self.sin.iter().all(C::is_zero)
    }

    pub fn cos_coeff(&self, k: usize) -> C {
        if k == 0 {
            self.a0.clone()
        } else {
            self.cos.get(k - 1).cloned().unwrap_or_else(C::zero)
        }
    }

    pub fn sin_coeff(&self, k: usize) -> C {
        if k == 0 {
            C::zero()
        } else {
            self.sin.get(k - 1).cloned().unwrap_or_else(C::zero)
        }
    }

    fn grow(&mut self, k: usize) {
        if k == 0 {
            return;
        }
        if self.cos.len() < k {
            self.cos.resize(k, C::zero());
        }
        if self.sin.len() < k {
            self.sin.resize(k, C::zero());
        }
    }

    pub fn add_cos(&mut self, k: usize, v: C) {
        if k == 0 {
            self.a0 = self.a0.add(&v);
        } else {
            self.grow(k);
            self.cos[k - 1] = self.cos[k - 1].add(&v);
        }
    }

    pub fn add_sin(&mut self, k: usize, v: C) {
        if k == 0 {
            return; // sin(0) contributes nothing
        }
        self.grow(k);
        self.sin[k - 1] = self.sin[k - 1].add(&v);
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.a0 = out.a0.add(&other.a0);
        out.grow(other.harmonics());
        for (k, v) in other.cos.iter().enumerate() {
            if !v.is_zero() {
                out.cos[k] = out.cos[k].add(v);
            }
        }
        for (k, v) in other.sin.iter().enumerate() {
            if !v.is_zero() {
                out.sin[k] = out.sin[k].add(v);
            }
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self {
            omega: self.omega,
            a0: self.a0.neg(),
            cos: self.cos.iter().map(C::neg).collect(),
            sin: self.sin.iter().map(C::neg).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            omega: self.omega,
            a0: self.a0.scale(factor),
            cos: self.cos.iter().map(|c| c.scale(factor)).collect(),
            sin: self.sin.iter().map(|c| c.scale(factor)).collect(),
        }
    }

    /// Harmonic-0 coefficient, i.e. the angular mean.
    pub fn mean(&self) -> C {
        self.a0.clone()
    }

    /// Series minus its mean.
    pub fn remove_mean(&self) -> Self {
        let mut out = self.clone();
        out.a0 = C::zero();
        out
    }

    /// d/dθ, exact in coefficient space.
    pub fn derivative(&self) -> Self {
        let m = self.harmonics();
        let mut out = Self::zero(self.omega);
        out.grow(m);
        for k in 1..=m {
            let kw = cast::<T>(k as f64) * self.omega;
            let c = self.cos_coeff(k);
            let s = self.sin_coeff(k);
            if !c.is_zero() {
                out.sin[k - 1] = out.sin[k - 1].add(&c.scale(-kw));
            }
            if !s.is_zero() {
                out.cos[k - 1] = out.cos[k - 1].add(&s.scale(kw));
            }
        }
        out
    }

    /// Antiderivative in θ with zero mean.
    ///
    /// Only valid on zero-mean input; the harmonic-0 slot of the input is
    /// ignored, which is what every caller in the normal-form engine wants.
    pub fn antiderivative_zero_mean(&self) -> Self {
        let m = self.harmonics();
        let mut out = Self::zero(self.omega);
        out.grow(m);
        for k in 1..=m {
            let inv = T::one() / (cast::<T>(k as f64) * self.omega);
            let c = self.cos_coeff(k);
            let s = self.sin_coeff(k);
            if !c.is_zero() {
                out.sin[k - 1] = out.sin[k - 1].add(&c.scale(inv));
            }
            if !s.is_zero() {
                out.cos[k - 1] = out.cos[k - 1].add(&s.scale(-inv));
            }
        }
        out
    }

    /// Product via the product-to-sum identities, truncated back to `mmax`
    /// harmonics. Returns the truncated series and the absolute mass of the
    /// dropped harmonics.
    pub fn mul(&self, other: &Self, mmax: usize) -> (Self, C) {
        let ma = self.harmonics();
        let mb = other.harmonics();
        let mut out = Self::zero(self.omega);
        let mut dropped = C::zero();
        let half = cast::<T>(0.5);

        let emit_cos = |out: &mut Self, dropped: &mut C, k: i64, v: C| {
            if v.is_zero() {
                return;
            }
            let k = k.unsigned_abs() as usize; // cos is even
            if k <= mmax {
                out.add_cos(k, v);
            } else {
                *dropped = dropped.add(&v.abs());
            }
        };
        let emit_sin = |out: &mut Self, dropped: &mut C, k: i64, v: C| {
            if v.is_zero() {
                return;
            }
            let (k, v) = if k < 0 { (-k, v.neg()) } else { (k, v) }; // sin is odd
            let k = k as usize;
            if k == 0 {
                return;
            }
            if k <= mmax {
                out.add_sin(k, v);
            } else {
                *dropped = dropped.add(&v.abs());
            }
        };

        for ka in 0..=ma {
            let ca = self.cos_coeff(ka);
            let sa = self.sin_coeff(ka);
            if ca.is_zero() && sa.is_zero() {
                continue;
            }
            for kb in 0..=mb {
                let cb = other.cos_coeff(kb);
                let sb = other.sin_coeff(kb);
                if cb.is_zero() && sb.is_zero() {
                    continue;
                }
                let kd = ka as i64 - kb as i64;
                let ks = (ka + kb) as i64;
                // cos·cos = ½cos(ka-kb) + ½cos(ka+kb)
                if !ca.is_zero() && !cb.is_zero() {
                    let p = ca.mul(&cb).scale(half);
                    emit_cos(&mut out, &mut dropped, kd, p.clone());
                    emit_cos(&mut out, &mut dropped, ks, p);
                }
                // sin·sin = ½cos(ka-kb) - ½cos(ka+kb)
                if !sa.is_zero() && !sb.is_zero() {
                    let p = sa.mul(&sb).scale(half);
                    emit_cos(&mut out, &mut dropped, kd, p.clone());
                    emit_cos(&mut out, &mut dropped, ks, p.neg());
                }
                // sin·cos = ½sin(ka+kb) + ½sin(ka-kb)
                if !sa.is_zero() && !cb.is_zero() {
                    let p = sa.mul(&cb).scale(half);
                    emit_sin(&mut out, &mut dropped, ks, p.clone());
                    emit_sin(&mut out, &mut dropped, kd, p);
                }
                // cos·sin = ½sin(ka+kb) - ½sin(ka-kb)
                if !ca.is_zero() && !sb.is_zero() {
                    let p = ca.mul(&sb).scale(half);
                    emit_sin(&mut out, &mut dropped, ks, p.clone());
                    emit_sin(&mut out, &mut dropped, kd, p.neg());
                }
            }
        }
        (out, dropped)
    }

    /// Evaluate with a coefficient-to-scalar map (identity for scalar series,
    /// forcing substitution for formal coefficients).
    pub fn eval_with<E: Fn(&C) -> T>(&self, theta: T, eval: E) -> T {
        let mut acc = eval(&self.a0);
        for k in 1..=self.harmonics() {
            let ang = cast::<T>(k as f64) * self.omega * theta;
            let c = self.cos_coeff(k);
            let s = self.sin_coeff(k);
            if !c.is_zero() {
                acc = acc + eval(&c) * ang.cos();
            }
            if !s.is_zero() {
                acc = acc + eval(&s) * ang.sin();
            }
        }
        acc
    }

    /// Drop trailing zero harmonics.
    pub fn trim(&mut self) {
        while self
            .cos
            .last()
            .map(|c| c.is_zero())
            .unwrap_or(false)
            && self.sin.last().map(|s| s.is_zero()).unwrap_or(false)
        {
            self.cos.pop();
            self.sin.pop();
        }
    }

    /// Sum of |coefficients| (an upper bound for sup |series|).
    pub fn abs_mass(&self) -> C {
        let mut acc = self.a0.abs();
        for c in &self.cos {
            if !c.is_zero() {
                acc = acc.add(&c.abs());
            }
        }
        for s in &self.sin {
            if !s.is_zero() {
                acc = acc.add(&s.abs());
            }
        }
        acc
    }
}

impl<T: Real> TrigSeries<T, T> {
    /// Plain scalar evaluation.
    pub fn eval(&self, theta: T) -> T {
        self.eval_with(theta, |c| *c)
    }

    /// Evaluate the d-th derivative (d ≤ 2), exact in coefficient space.
    pub fn eval_derivative(&self, theta: T, d: u8) -> T {
        let mut acc = if d == 0 { self.a0 } else { T::zero() };
        for k in 1..=self.harmonics() {
            let kw = cast::<T>(k as f64) * self.omega;
            let ang = kw * theta;
            let c = self.cos_coeff(k);
            let s = self.sin_coeff(k);
            let (cc, ss) = match d {
                0 => (c, s),
                1 => (s * kw, -c * kw),
                2 => (-c * kw * kw, -s * kw * kw),
                _ => panic!("derivative order above 2 unsupported"),
            };
            acc = acc + cc * ang.cos() + ss * ang.sin();
        }
        acc
    }

    /// Σ |a_k| (kω)^d: a sup-norm bound on the d-th derivative.
    pub fn sup_bound(&self, d: u8) -> T {
        let mut acc = if d == 0 {
            num_traits::Float::abs(self.a0)
        } else {
            T::zero()
        };
        for k in 1..=self.harmonics() {
            let kw = cast::<T>(k as f64) * self.omega;
            let f = kw.powi(d as i32);
            acc = acc
                + (num_traits::Float::abs(self.cos_coeff(k))
                    + num_traits::Float::abs(self.sin_coeff(k)))
                    * f;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(omega: f64, a0: f64, cos: &[f64], sin: &[f64]) -> TrigSeries<f64, f64> {
        TrigSeries {
            omega,
            a0,
            cos: cos.to_vec(),
            sin: sin.to_vec(),
        }
    }

    #[test]
    fn product_of_sines_has_the_textbook_mean() {
        // sin(θ)² = ½ - ½cos(2θ)
        let s = series(1.0, 0.0, &[], &[1.0]);
        let (p, dropped) = s.mul(&s, 8);
        assert_eq!(dropped, 0.0);
        assert!((p.a0 - 0.5).abs() < 1e-15);
        assert!((p.cos_coeff(2) + 0.5).abs() < 1e-15);
        assert!(p.sin_coeff(2).abs() < 1e-15);
    }

    #[test]
    fn truncated_product_reports_dropped_mass() {
        let s = series(1.0, 0.0, &[0.0, 0.0, 1.0], &[]); // cos(3θ)
        let (p, dropped) = s.mul(&s, 4); // cos²(3θ) = ½ + ½cos(6θ)
        assert!((p.a0 - 0.5).abs() < 1e-15);
        assert!((dropped - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_and_antiderivative_are_mutually_inverse_on_zero_mean() {
        let s = series(0.7, 0.0, &[0.3, -0.2], &[0.1, 0.5]);
        let rt = s.antiderivative_zero_mean().derivative();
        for k in 1..=2 {
            assert!((rt.cos_coeff(k) - s.cos_coeff(k)).abs() < 1e-15);
            assert!((rt.sin_coeff(k) - s.sin_coeff(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn eval_matches_closed_form() {
        let s = series(2.0, 1.0, &[0.5], &[-0.25]);
        let th = 0.37_f64;
        let want = 1.0 + 0.5 * (2.0 * th).cos() - 0.25 * (2.0 * th).sin();
        assert!((s.eval(th) - want).abs() < 1e-15);
        let want1 = -0.5 * 2.0 * (2.0 * th).sin() - 0.25 * 2.0 * (2.0 * th).cos();
        assert!((s.eval_derivative(th, 1) - want1).abs() < 1e-15);
    }
}
