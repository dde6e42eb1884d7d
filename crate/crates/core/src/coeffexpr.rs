//! Formal polynomials in the forcing symbols p_j^(d).
//!
//! The normal-form engine never commits to a concrete forcing while it runs:
//! profile coefficients are polynomials in symbols s_{j,d} standing for the
//! d-th time derivative of p_j. Time differentiation is Leibniz on the
//! symbols, capped at d = 2. Numeric evaluation substitutes a concrete
//! [`Forcing`](crate::forcing::Forcing) at a time t.

use crate::error::{Error, Result};
use crate::forcing::Forcing;
use crate::fourier::Coeff;
use crate::scalar::{cast, Real};

/// Hard cap on derivative orders carried by any symbol.
pub const MAX_DERIVATIVE: u8 = 2;

/// Scalar coefficients below this threshold are pruned.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Symbol p_j^(d).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Sym {
    pub j: u8,
    pub d: u8,
}

/// Product of symbol powers, kept sorted by symbol.
pub type Monomial = Vec<(Sym, u8)>;

fn mul_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = a.clone();
    for &(sym, pow) in b {
        match out.binary_search_by(|(s, _)| s.cmp(&sym)) {
            Ok(i) => out[i].1 += pow,
            Err(i) => out.insert(i, (sym, pow)),
        }
    }
    out
}

/// Polynomial over the symbols with scalar coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffExpr<T> {
    /// Terms sorted by monomial; no zero coefficients; no duplicate monomials.
    terms: Vec<(T, Monomial)>,
}

impl<T: Real> CoeffExpr<T> {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn scalar(c: T) -> Self {
        let mut out = Self {
            terms: vec![(c, Vec::new())],
        };
        out.prune();
        out
    }

    /// c · p_j^(d)
    pub fn symbol(c: T, j: u8, d: u8) -> Self {
        assert!(d <= MAX_DERIVATIVE, "derivative order above the cap");
        let mut out = Self {
            terms: vec![(c, vec![(Sym { j, d }, 1)])],
        };
        out.prune();
        out
    }

    pub fn terms(&self) -> &[(T, Monomial)] {
        &self.terms
    }

    /// The scalar value when the expression is a pure constant.
    pub fn as_scalar(&self) -> Option<T> {
        match self.terms.len() {
            0 => Some(T::zero()),
            1 if self.terms[0].1.is_empty() => Some(self.terms[0].0),
            _ => None,
        }
    }

    fn prune(&mut self) {
        let thresh = cast::<T>(PRUNE_THRESHOLD);
        self.terms
            .retain(|(c, _)| num_traits::Float::abs(*c) > thresh);
    }

    fn normalized(mut terms: Vec<(T, Monomial)>) -> Self {
        terms.sort_by(|a, b| a.1.cmp(&b.1));
        let mut out: Vec<(T, Monomial)> = Vec::with_capacity(terms.len());
        for (c, m) in terms {
            match out.last_mut() {
                Some((lc, lm)) if *lm == m => *lc = *lc + c,
                _ => out.push((c, m)),
            }
        }
        let mut expr = Self { terms: out };
        expr.prune();
        expr
    }

    /// Leibniz derivative in t; raises the symbol orders by one.
    pub fn t_derivative(&self) -> Result<Self> {
        let mut terms = Vec::new();
        for (c, mono) in &self.terms {
            for (fi, &(sym, pow)) in mono.iter().enumerate() {
                if sym.d + 1 > MAX_DERIVATIVE {
                    return Err(Error::SmoothnessPolicy {
                        j: sym.j as usize,
                        requested: sym.d + 1,
                        declared: MAX_DERIVATIVE,
                    });
                }
                let mut m = Vec::with_capacity(mono.len() + 1);
                for (gi, &(s, p)) in mono.iter().enumerate() {
                    if gi == fi {
                        if p > 1 {
                            m.push((s, p - 1));
                        }
                    } else {
                        m.push((s, p));
                    }
                }
                let bumped = Sym {
                    j: sym.j,
                    d: sym.d + 1,
                };
                let m = mul_monomials(&m, &vec![(bumped, 1)]);
                terms.push((*c * cast::<T>(pow as f64), m));
            }
        }
        Ok(Self::normalized(terms))
    }

    /// Substitute a concrete forcing at time t.
    pub fn eval(&self, f: &Forcing<T>, t: T) -> Result<T> {
        let mut acc = T::zero();
        for (c, mono) in &self.terms {
            let mut v = *c;
            for &(sym, pow) in mono {
                let pv = f.eval_p(sym.j as usize, t, sym.d)?;
                for _ in 0..pow {
                    v = v * pv;
                }
            }
            acc = acc + v;
        }
        Ok(acc)
    }

    /// Upper bound of |expr| over all t, from per-symbol sup-norm bounds.
    pub fn sup_bound(&self, f: &Forcing<T>) -> T {
        let mut acc = T::zero();
        for (c, mono) in &self.terms {
            let mut v = num_traits::Float::abs(*c);
            for &(sym, pow) in mono {
                let b = f.sup_bound(sym.j as usize, sym.d);
                for _ in 0..pow {
                    v = v * b;
                }
            }
            acc = acc + v;
        }
        acc
    }

    /// Drop every term containing a symbol the predicate marks as the zero
    /// function (used to bind the formal algebra to a concrete forcing whose
    /// coefficients may be constant or absent).
    pub fn drop_zero_symbols<F: Fn(Sym) -> bool>(&self, is_zero: F) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|(_, mono)| !mono.iter().any(|(sym, _)| is_zero(*sym)))
                .cloned()
                .collect(),
        }
    }

    /// Record the maximum derivative order seen per symbol index.
    pub fn record_orders(&self, ledger: &mut std::collections::BTreeMap<usize, u8>) {
        for (_, mono) in &self.terms {
            for &(sym, _) in mono {
                let e = ledger.entry(sym.j as usize).or_insert(0);
                *e = (*e).max(sym.d);
            }
        }
    }
}

impl<T: Real> Coeff<T> for CoeffExpr<T> {
    fn zero() -> Self {
        CoeffExpr::zero()
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::normalized(terms)
    }

    fn neg(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|(c, m)| (-*c, m.clone())).collect(),
        }
    }

    fn scale(&self, factor: T) -> Self {
        let mut out = Self {
            terms: self
                .terms
                .iter()
                .map(|(c, m)| (*c * factor, m.clone()))
                .collect(),
        };
        out.prune();
        out
    }

    fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ca, ma) in &self.terms {
            for (cb, mb) in &other.terms {
                terms.push((*ca * *cb, mul_monomials(ma, mb)));
            }
        }
        Self::normalized(terms)
    }

    fn abs(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(c, m)| (num_traits::Float::abs(*c), m.clone()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{Forcing, ForcingConfig};

    fn morris() -> Forcing<f64> {
        let cfg: ForcingConfig = serde_json::from_str(
            r#"{"n":2,"T":1.0,"p":[{"j":0,"const":0.0,"cos":[1.0],"sin":[]}]}"#,
        )
        .unwrap();
        Forcing::from_config(&cfg).unwrap()
    }

    #[test]
    fn add_cancels_exactly() {
        let a = CoeffExpr::symbol(0.25, 2, 0);
        let b = a.neg();
        assert!(a.add(&b).is_zero());
    }

    #[test]
    fn leibniz_on_a_square() {
        // (p_0)² -> 2 p_0 p_0'
        let p = CoeffExpr::symbol(1.0, 0, 0);
        let sq = p.mul(&p);
        let d = sq.t_derivative().unwrap();
        assert_eq!(d.terms().len(), 1);
        let (c, m) = &d.terms()[0];
        assert_eq!(*c, 2.0);
        assert_eq!(
            m.as_slice(),
            &[(Sym { j: 0, d: 0 }, 1), (Sym { j: 0, d: 1 }, 1)]
        );
    }

    #[test]
    fn derivative_cap_is_enforced() {
        let p = CoeffExpr::<f64>::symbol(1.0, 1, 2);
        assert!(p.t_derivative().is_err());
    }

    #[test]
    fn eval_substitutes_the_forcing() {
        let f = morris();
        // 3·p_0(t)² at t = 0 is 3
        let p = CoeffExpr::symbol(1.0, 0, 0);
        let e = p.mul(&p).scale(3.0);
        assert!((e.eval(&f, 0.0).unwrap() - 3.0).abs() < 1e-15);
        // derivatives beyond the declared class are a policy error, even
        // though the series itself is smooth
        let d = CoeffExpr::symbol(1.0, 0, 1);
        assert!(d.eval(&f, 0.0).is_err());
    }
}
