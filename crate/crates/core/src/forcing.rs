//! T-periodic polynomial forcing coefficients p_0(t) .. p_{2n-2}(t).
//!
//! Each coefficient is a finite trigonometric series in t, so it is smooth and
//! time differentiation is exact in coefficient space. The smoothness labels
//! exist as a policy layer: an operation may only consume the derivative
//! orders granted by the declared class, and validation rejects declarations
//! below the minimum the boundedness theory needs
//! (p_0: C0, p_1..p_{n-1}: C1, p_n..p_{2n-2}: C2).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::TrigSeries;
use crate::scalar::{cast, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Smoothness {
    C0,
    C1,
    C2,
}

impl Smoothness {
    pub fn order(self) -> u8 {
        match self {
            Smoothness::C0 => 0,
            Smoothness::C1 => 1,
            Smoothness::C2 => 2,
        }
    }

    fn from_order(d: u8) -> Self {
        match d {
            0 => Smoothness::C0,
            1 => Smoothness::C1,
            _ => Smoothness::C2,
        }
    }
}

/// Minimum class required of p_j for degree parameter n.
pub fn theorem_minimum(j: usize, n: u32) -> Smoothness {
    let n = n as usize;
    if j == 0 {
        Smoothness::C0
    } else if j < n {
        Smoothness::C1
    } else {
        Smoothness::C2
    }
}

/// JSON schema for one coefficient series.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffConfig {
    pub j: usize,
    #[serde(default, rename = "const")]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
    /// Optional smoothness label; defaults to the theorem minimum for j.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<Smoothness>,
}

/// JSON schema for a full forcing: `{"n":2,"T":1.0,"p":[...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub n: u32,
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(default)]
    pub p: Vec<CoeffConfig>,
}

/// One finding from [`Forcing::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationIssue {
    pub what: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Clone)]
pub struct Forcing<T: Real> {
    n: u32,
    period: T,
    /// Index j holds p_j; absent coefficients are identically zero.
    coeffs: Vec<TrigSeries<T, T>>,
    declared: Vec<Smoothness>,
}

impl<T: Real> Forcing<T> {
    /// Build from the JSON-schema struct. Duplicate or out-of-range j is a
    /// config error; range/smoothness issues beyond that go through
    /// [`Forcing::validate`].
    pub fn from_config(cfg: &ForcingConfig) -> Result<Self> {
        if cfg.n < 1 {
            return Err(Error::Domain("degree parameter n must be >= 1".into()));
        }
        if !(cfg.period > 0.0) {
            return Err(Error::Config("forcing period must be positive".into()));
        }
        let degree = (2 * cfg.n as usize).saturating_sub(2);
        let mut max_j = degree;
        for e in &cfg.p {
            max_j = max_j.max(e.j);
        }
        let omega = cast::<T>(2.0 * std::f64::consts::PI / cfg.period);
        let mut coeffs = vec![TrigSeries::zero(omega); max_j + 1];
        let mut declared: Vec<Smoothness> = (0..=max_j)
            .map(|j| theorem_minimum(j, cfg.n))
            .collect();
        let mut seen = vec![false; max_j + 1];
        for e in &cfg.p {
            if seen[e.j] {
                return Err(Error::Config(format!("duplicate forcing entry j = {}", e.j)));
            }
            seen[e.j] = true;
            let s = &mut coeffs[e.j];
            s.a0 = cast(e.constant);
            for (k, &a) in e.cos.iter().enumerate() {
                s.add_cos(k + 1, cast(a));
            }
            for (k, &b) in e.sin.iter().enumerate() {
                s.add_sin(k + 1, cast(b));
            }
            s.trim();
            if let Some(sm) = e.smoothness {
                declared[e.j] = sm;
            }
        }
        Ok(Self {
            n: cfg.n,
            period: cast(cfg.period),
            coeffs,
            declared,
        })
    }

    /// Zero forcing of the given degree parameter.
    pub fn zero(n: u32, period: T) -> Self {
        let degree = (2 * n as usize).saturating_sub(2);
        let omega = T::from_f64(2.0 * std::f64::consts::PI).unwrap() / period;
        Self {
            n,
            period,
            coeffs: vec![TrigSeries::zero(omega); degree + 1],
            declared: (0..=degree).map(|j| theorem_minimum(j, n)).collect(),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn period(&self) -> T {
        self.period
    }

    /// Highest j actually carrying a nonzero series.
    pub fn max_degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|s| !s.is_zero())
    }

    pub fn declared_smoothness(&self, j: usize) -> Option<Smoothness> {
        self.declared.get(j).copied()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|s| s.is_zero())
    }

    /// d-th time derivative of p_j at t (exact differentiation of the series).
    ///
    /// Requesting more derivatives than declared for j is a policy error even
    /// though the series itself is smooth.
    pub fn eval_p(&self, j: usize, t: T, d: u8) -> Result<T> {
        if d > 2 {
            return Err(Error::Domain(format!(
                "derivative order {d} above the supported cap"
            )));
        }
        let Some(series) = self.coeffs.get(j) else {
            return Ok(T::zero());
        };
        let declared = self.declared[j].order();
        if d > declared {
            return Err(Error::SmoothnessPolicy {
                j,
                requested: d,
                declared,
            });
        }
        Ok(series.eval_derivative(t, d))
    }

    /// Sup-norm bound on |p_j^(d)| over t (no policy check; used for
    /// truncation accounting only).
    pub fn sup_bound(&self, j: usize, d: u8) -> T {
        self.coeffs
            .get(j)
            .map(|s| s.sup_bound(d))
            .unwrap_or_else(T::zero)
    }

    /// Is p_j^(d) identically zero for this forcing? True for absent or zero
    /// series, and for any derivative of a constant one.
    pub fn derivative_is_zero(&self, j: usize, d: u8) -> bool {
        match self.coeffs.get(j) {
            None => true,
            Some(s) => {
                if s.is_zero() {
                    true
                } else {
                    d >= 1 && s.is_constant()
                }
            }
        }
    }

    pub fn series(&self, j: usize) -> Option<&TrigSeries<T, T>> {
        self.coeffs.get(j)
    }

    /// Structural checks: degree bound, period, smoothness table.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let degree = (2 * self.n as usize).saturating_sub(2);
        for (j, s) in self.coeffs.iter().enumerate() {
            if j > degree && !s.is_zero() {
                issues.push(ValidationIssue {
                    what: format!(
                        "p_{j} present but the degree bound for n = {} is {degree}",
                        self.n
                    ),
                });
            }
        }
        if !(self.period > T::zero()) {
            issues.push(ValidationIssue {
                what: "period must be positive".into(),
            });
        }
        for (j, &decl) in self.declared.iter().enumerate() {
            if j <= degree {
                let min = theorem_minimum(j, self.n);
                if decl < min {
                    issues.push(ValidationIssue {
                        what: format!(
                            "p_{j} declared {:?} but the smoothness table requires at least {:?}",
                            decl, min
                        ),
                    });
                }
            }
        }
        ValidationReport {
            valid: issues.is_empty(),
            issues,
        }
    }
}

/// Convenience: declared smoothness as a label for reports.
pub fn smoothness_label(d: u8) -> Smoothness {
    Smoothness::from_order(d)
}
