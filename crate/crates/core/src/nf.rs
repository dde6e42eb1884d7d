//! Two-stage Lie-transform normalization of the forced-oscillator Hamiltonian.
//!
//! Terms are graded by the exponent numerator q (a term scales as
//! K^(q/(n+1))) and live in rows r = 2n - q of a triangle recursion
//!
//! ```text
//! H_j^i = H_{j+1}^{i-1} + Σ_k C(j,k) {H_{j-k}^{i-1}, W_{k+1}},
//! ```
//!
//! whose diagonal is the transformed Hamiltonian. At each active row the
//! generator term W_i is chosen so the diagonal entry loses its angular
//! dependence: the homological equation B = D + {H_0^0, C} is solved by
//! taking B as the angular mean of D and C as the zero-mean antiderivative
//! of -(D - B). Time dependence of the generator is repaid afterwards by
//! pushing -∂W/∂t through the same triangle (the remainder).
//!
//! Stage one clears rows 1..n-1, stage two rows n..2n-2. The first stage
//! leaves angular dependence at exponents q <= n, the second at q <= 1,
//! which is the shape the twist analysis needs.
//!
//! Exactness matters in two places and both are arranged structurally
//! rather than by tolerance. The angular mean extracted into B is the same
//! coefficient object that is subtracted from D, so D - B cancels exactly;
//! and a generator term remembers the series it was antidifferentiated
//! from, so bracketing it back with H_0^0 reproduces that series bit for
//! bit instead of round-tripping through 1/(kω) factors.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::coeffexpr::CoeffExpr;
use crate::error::{Error, Result};
use crate::forcing::{theorem_minimum, Forcing};
use crate::fourier::{Coeff, TrigSeries};
use crate::gentrig::GenTrig;
use crate::ode::{dopri5, OdeOptions};
use crate::scalar::{cast, factorial, int, Real};

pub type ProfileSeries<T> = TrigSeries<T, CoeffExpr<T>>;

/// One graded term c(p-symbols) · K^(q/(n+1)) · (angular profile).
#[derive(Debug, Clone)]
pub struct NFTerm<T: Real> {
    /// Exponent numerator: the term scales as K^(q/(n+1)).
    pub q: i64,
    pub profile: ProfileSeries<T>,
    /// Exact angular derivative, recorded when the profile was produced by
    /// antidifferentiation. Keeps the Lie-equation residual identically zero.
    exact_dk: Option<Arc<ProfileSeries<T>>>,
}

impl<T: Real> NFTerm<T> {
    pub fn new(q: i64, profile: ProfileSeries<T>) -> Self {
        Self {
            q,
            profile,
            exact_dk: None,
        }
    }

    /// The leading action term (n+1)/(2n) K^(2n/(n+1)).
    pub fn kinetic(n: u32, omega: T) -> Self {
        let c = int::<T>(n as i64 + 1) / int::<T>(2 * n as i64);
        Self::new(2 * n as i64, ProfileSeries::constant(omega, CoeffExpr::scalar(c)))
    }

    pub fn is_kinetic(&self, n: u32) -> bool {
        self.q == 2 * n as i64
            && self.profile.is_constant()
            && self.profile.a0.as_scalar()
                == Some(int::<T>(n as i64 + 1) / int::<T>(2 * n as i64))
    }

    pub fn is_zero(&self) -> bool {
        self.profile.is_zero()
    }

    /// ∂/∂κ of the profile, exact when the term is a generator term.
    pub fn derivative_series(&self) -> ProfileSeries<T> {
        match &self.exact_dk {
            Some(d) => (**d).clone(),
            None => self.profile.derivative(),
        }
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            q: self.q,
            profile: self.profile.scale(factor),
            exact_dk: self
                .exact_dk
                .as_ref()
                .map(|d| Arc::new(d.scale(factor))),
        }
    }

    /// Merge another term of the same exponent into this one.
    pub fn merge(&mut self, other: &Self) {
        debug_assert_eq!(self.q, other.q);
        self.profile = self.profile.add(&other.profile);
        self.exact_dk = match (&self.exact_dk, &other.exact_dk) {
            (Some(a), Some(b)) => Some(Arc::new(a.add(b))),
            _ => None,
        };
    }

    /// Is the profile free of angular dependence?
    pub fn is_kappa_free(&self) -> bool {
        self.profile.is_constant()
    }
}

/// Row-indexed collection of graded terms with the factorial convention:
/// row i stores H_i^0 and the series value is Σ_i (1/i!) row_i at ε = 1.
#[derive(Debug, Clone)]
pub struct NFSeries<T: Real> {
    n: u32,
    omega: T,
    rows: BTreeMap<usize, Vec<NFTerm<T>>>,
}

impl<T: Real> NFSeries<T> {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn rows(&self) -> &BTreeMap<usize, Vec<NFTerm<T>>> {
        &self.rows
    }

    fn row_of_q(&self, q: i64) -> usize {
        (2 * self.n as i64 - q) as usize
    }

    fn insert(&mut self, term: NFTerm<T>) {
        if term.is_zero() {
            return;
        }
        let row = self.row_of_q(term.q);
        let slot = self.rows.entry(row).or_default();
        match slot.iter_mut().find(|t| t.q == term.q) {
            Some(t) => t.merge(&term),
            None => slot.push(term),
        }
        slot.retain(|t| !t.is_zero());
    }

    /// All terms at a given exponent with their assembly weight 1/i!.
    pub fn terms_at_exponent(&self, q: i64) -> Vec<(T, &NFTerm<T>)> {
        let row = self.row_of_q(q);
        let inv_fact = T::one() / factorial::<T>(row as u32);
        self.rows
            .get(&row)
            .map(|ts| {
                ts.iter()
                    .filter(|t| t.q == q)
                    .map(|t| (inv_fact, t))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Absolute angular (non-mean) mass at an exponent, as a bound polynomial.
    pub fn kappa_dependent_mass(&self, q: i64) -> CoeffExpr<T> {
        let mut acc = CoeffExpr::zero();
        for (_, t) in self.terms_at_exponent(q) {
            let m = t.profile.remove_mean().abs_mass();
            acc = acc.add(&m);
        }
        acc
    }

    /// The original Hamiltonian in the (K, κ) chart as a graded series:
    /// row i holds i! K^((2n-i)/(n+1)) f_{2n-i} with
    /// f_j = -(n+1)/(j n) sn^j(κ) p_{j-1}(t).
    pub fn original(g: &GenTrig<T>, f: &Forcing<T>, harmonics: usize) -> Result<Self> {
        let n = g.n();
        if f.n() != n {
            return Err(Error::Domain(
                "forcing and reference functions disagree on n".into(),
            ));
        }
        let omega = g.omega();
        let mut out = Self {
            n,
            omega,
            rows: BTreeMap::new(),
        };
        out.insert(NFTerm::kinetic(n, omega));
        for i in 1..=(2 * n as usize - 1) {
            let j = 2 * n as usize - i; // exponent q = j
            let p_index = j - 1;
            if f.series(p_index).map(|s| s.is_zero()).unwrap_or(true) {
                continue;
            }
            let base = g.profile(j as u32, 0, harmonics)?.series;
            let scale = -int::<T>(n as i64 + 1) * factorial::<T>(i as u32)
                / (int::<T>(j as i64) * int::<T>(n as i64));
            let mut profile = ProfileSeries::zero(omega);
            profile.a0 = CoeffExpr::symbol(base.a0 * scale, p_index as u8, 0);
            for k in 1..=base.harmonics() {
                let c = base.cos_coeff(k);
                if c != T::zero() {
                    profile.add_cos(k, CoeffExpr::symbol(c * scale, p_index as u8, 0));
                }
                let s = base.sin_coeff(k);
                if s != T::zero() {
                    profile.add_sin(k, CoeffExpr::symbol(s * scale, p_index as u8, 0));
                }
            }
            out.insert(NFTerm::new(j as i64, profile));
        }
        Ok(out)
    }

    /// Numeric value at (K, κ, t) with a concrete forcing.
    pub fn evaluate(&self, f: &Forcing<T>, k: T, kappa: T, t: T) -> Result<T> {
        if !(k > T::zero()) {
            return Err(Error::Domain("action must be positive".into()));
        }
        let n1 = int::<T>(self.n as i64 + 1);
        let mut acc = T::zero();
        for (row, terms) in &self.rows {
            let w = T::one() / factorial::<T>(*row as u32);
            for term in terms {
                let p = eval_profile(&term.profile, f, kappa, t)?;
                acc = acc + w * p * k.powf(int::<T>(term.q) / n1);
            }
        }
        Ok(acc)
    }

    /// (∂H/∂κ, ∂H/∂K) at a point; used for the equations of motion of the
    /// truncated normal form.
    pub fn gradient(&self, f: &Forcing<T>, k: T, kappa: T, t: T) -> Result<(T, T)> {
        let n1 = int::<T>(self.n as i64 + 1);
        let mut dk = T::zero();
        let mut dkappa = T::zero();
        for (row, terms) in &self.rows {
            let w = T::one() / factorial::<T>(*row as u32);
            for term in terms {
                let q = int::<T>(term.q);
                let p = eval_profile(&term.profile, f, kappa, t)?;
                let dp = eval_profile(&term.profile.derivative(), f, kappa, t)?;
                dkappa = dkappa + w * dp * k.powf(q / n1);
                dk = dk + w * p * (q / n1) * k.powf(q / n1 - T::one());
            }
        }
        Ok((dkappa, dk))
    }
}

/// Evaluate a profile whose coefficients are forcing polynomials.
pub fn eval_profile<T: Real>(
    p: &ProfileSeries<T>,
    f: &Forcing<T>,
    kappa: T,
    t: T,
) -> Result<T> {
    let mut acc = p.a0.eval(f, t)?;
    for k in 1..=p.harmonics() {
        let ang = int::<T>(k as i64) * p.omega * kappa;
        let c = p.cos_coeff(k);
        if !c.is_zero() {
            acc = acc + c.eval(f, t)? * ang.cos();
        }
        let s = p.sin_coeff(k);
        if !s.is_zero() {
            acc = acc + s.eval(f, t)? * ang.sin();
        }
    }
    Ok(acc)
}

/// Poisson bracket {A, B} = ∂A/∂K ∂B/∂κ - ∂A/∂κ ∂B/∂K of two graded terms.
///
/// The exponent arithmetic is q_A + q_B - (n+1); the profile combination is
/// (q_A a b' - q_B a' b)/(n+1) with products convolved and truncated back to
/// `mmax` harmonics. Bracketing the kinetic term against a generator term is
/// routed through the recorded exact derivative, with no scalar factors at
/// all.
pub fn poisson_bracket<T: Real>(
    a: &NFTerm<T>,
    b: &NFTerm<T>,
    n: u32,
    mmax: usize,
    dropped: &mut BTreeMap<i64, CoeffExpr<T>>,
) -> Vec<NFTerm<T>> {
    let q_out = a.q + b.q - (n as i64 + 1);
    if a.is_kinetic(n) {
        let d = b.derivative_series();
        if d.is_zero() {
            return Vec::new();
        }
        return vec![NFTerm::new(q_out, d)];
    }
    if b.is_kinetic(n) {
        let d = a.derivative_series();
        if d.is_zero() {
            return Vec::new();
        }
        return vec![NFTerm::new(q_out, d.neg())];
    }

    let n1 = int::<T>(n as i64 + 1);
    let mut result = ProfileSeries::zero(a.profile.omega);
    let mut lost = CoeffExpr::zero();
    if a.q != 0 {
        let db = b.derivative_series();
        if !db.is_zero() {
            let (prod, drop) = a.profile.mul(&db, mmax);
            result = result.add(&prod.scale(int::<T>(a.q) / n1));
            lost = lost.add(&drop.abs().scale(num_traits::Float::abs(int::<T>(a.q) / n1)));
        }
    }
    if b.q != 0 {
        let da = a.derivative_series();
        if !da.is_zero() {
            let (prod, drop) = da.mul(&b.profile, mmax);
            result = result.sub(&prod.scale(int::<T>(b.q) / n1));
            lost = lost.add(&drop.abs().scale(num_traits::Float::abs(int::<T>(b.q) / n1)));
        }
    }
    if !lost.is_zero() {
        let slot = dropped.entry(q_out).or_insert_with(CoeffExpr::zero);
        *slot = slot.add(&lost);
    }
    let mut result = result;
    result.trim();
    if result.is_zero() {
        Vec::new()
    } else {
        vec![NFTerm::new(q_out, result)]
    }
}

/// Solve the homological equation B = D + {H_0^0, C} for a row term D.
///
/// B carries the angular mean of D; C sits at exponent q_D - n + 1 and its
/// profile is the zero-mean antiderivative of -(D - B). The returned C
/// remembers -(D - B) as its exact angular derivative, so re-substitution
/// into the Lie equation cancels exactly at the coefficient level.
pub fn solve_homological<T: Real>(d: &NFTerm<T>, n: u32) -> (NFTerm<T>, Option<NFTerm<T>>) {
    let mean = d.profile.mean();
    let b = NFTerm::new(
        d.q,
        ProfileSeries::constant(d.profile.omega, mean),
    );
    let oscillating = d.profile.remove_mean();
    if oscillating.is_zero() {
        return (b, None);
    }
    let neg = oscillating.neg();
    let mut c = NFTerm::new(d.q - n as i64 + 1, neg.antiderivative_zero_mean());
    c.exact_dk = Some(Arc::new(neg));
    (b, Some(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalFormOptions {
    /// Number of triangle rows processed (defaults to 3n).
    pub i_max: usize,
    /// Terms with exponent numerator below this are dropped and tallied
    /// (defaults to -2n).
    pub q_min: i64,
    /// Angular truncation order of all profiles.
    pub harmonics: usize,
    /// Also build a stage-1 generator term at row n (harmless, off by
    /// default).
    pub stage1_include_row_n: bool,
}

impl NormalFormOptions {
    pub fn for_n(n: u32) -> Self {
        Self {
            i_max: 3 * n as usize,
            q_min: -2 * n as i64,
            harmonics: 64,
            stage1_include_row_n: false,
        }
    }
}

type Cell<T> = Vec<NFTerm<T>>;

fn add_to_cell<T: Real>(
    cell: &mut Cell<T>,
    term: NFTerm<T>,
    q_min: i64,
    dropped: &mut BTreeMap<i64, CoeffExpr<T>>,
) {
    if term.is_zero() {
        return;
    }
    if term.q < q_min {
        let slot = dropped.entry(term.q).or_insert_with(CoeffExpr::zero);
        *slot = slot.add(&term.profile.abs_mass());
        return;
    }
    match cell.iter_mut().find(|t| t.q == term.q) {
        Some(t) => t.merge(&term),
        None => cell.push(term),
    }
    cell.retain(|t| !t.is_zero());
}

struct TriangleOutput<T: Real> {
    /// Generator terms by row index (solve mode only).
    w: BTreeMap<usize, NFTerm<T>>,
    /// Diagonal entries H_0^i (or R_0^i) for i = 0..=i_max.
    diagonal: Vec<Cell<T>>,
    /// Per solved row: did B - D - {H_0^0, C} cancel identically?
    lie_exact: Vec<(usize, bool)>,
}

/// Run the triangle recursion.
///
/// With `solve_rows = Some(active)` generator terms are produced at the
/// active rows and the corresponding diagonal entries become angular means
/// (the column is patched with {H_0^0, W_i} once W_i exists). With
/// `solve_rows = None` the fixed generator `w` transforms the left column
/// (remainder mode).
fn run_triangle<T: Real>(
    n: u32,
    left: Vec<Cell<T>>,
    solve_rows: Option<&BTreeSet<usize>>,
    w_fixed: &BTreeMap<usize, NFTerm<T>>,
    opts: &NormalFormOptions,
    dropped: &mut BTreeMap<i64, CoeffExpr<T>>,
) -> TriangleOutput<T> {
    let i_max = opts.i_max;
    // input rows beyond the processed depth are unreachable: tally them
    for (j, cell) in left.iter().enumerate() {
        if j > i_max {
            for t in cell {
                let slot = dropped.entry(t.q).or_insert_with(CoeffExpr::zero);
                *slot = slot.add(&t.profile.abs_mass());
            }
        }
    }

    let mut cols: Vec<Vec<Cell<T>>> = Vec::with_capacity(i_max + 1);
    let mut col0: Vec<Cell<T>> = Vec::with_capacity(i_max + 1);
    for j in 0..=i_max {
        col0.push(left.get(j).cloned().unwrap_or_default());
    }
    cols.push(col0);
    for ip in 1..=i_max {
        cols.push(vec![Vec::new(); i_max - ip + 1]);
    }

    let mut w: BTreeMap<usize, NFTerm<T>> = w_fixed.clone();
    let mut w_solved: BTreeMap<usize, NFTerm<T>> = BTreeMap::new();
    let mut lie_exact: Vec<(usize, bool)> = Vec::new();

    for i in 1..=i_max {
        for ip in 1..=i {
            let j = i - ip;
            let mut cell = cols[ip - 1][j + 1].clone();
            for k in 0..=j {
                let Some(wk) = w.get(&(k + 1)) else { continue };
                let bin = crate::scalar::binomial::<T>(j as u32, k as u32);
                for a in cols[ip - 1][j - k].clone() {
                    for t in poisson_bracket(&a, wk, n, opts.harmonics, dropped) {
                        add_to_cell(&mut cell, t.scale(bin), opts.q_min, dropped);
                    }
                }
            }
            cols[ip][j] = cell;
        }

        if let Some(active) = solve_rows {
            if active.contains(&i) {
                let d_terms = cols[i][0].clone();
                let mut wi: Option<NFTerm<T>> = None;
                for d in &d_terms {
                    let (_b, c) = solve_homological(d, n);
                    if let Some(c) = c {
                        match &mut wi {
                            Some(acc) => acc.merge(&c),
                            None => wi = Some(c),
                        }
                    }
                }
                if let Some(wi) = wi {
                    // every cell of this antidiagonal carries {H_0^0, W_i}
                    // exactly once; it could not be included before W_i existed
                    let kin = NFTerm::kinetic(n, wi.profile.omega);
                    let patch = poisson_bracket(&kin, &wi, n, opts.harmonics, dropped);
                    for ip in 1..=i {
                        let j = i - ip;
                        for t in &patch {
                            add_to_cell(&mut cols[ip][j], t.clone(), opts.q_min, dropped);
                        }
                    }
                    // residual B - D - {H_0^0, W_i} at the coefficient level
                    let mut resid: Cell<T> = Vec::new();
                    let mut scratch = BTreeMap::new();
                    let minus_one = -T::one();
                    for d in &d_terms {
                        let (b, _) = solve_homological(d, n);
                        add_to_cell(&mut resid, b, i64::MIN, &mut scratch);
                        add_to_cell(&mut resid, d.scale(minus_one), i64::MIN, &mut scratch);
                    }
                    for t in &patch {
                        add_to_cell(&mut resid, t.scale(minus_one), i64::MIN, &mut scratch);
                    }
                    lie_exact.push((i, resid.is_empty()));
                    w.insert(i, wi.clone());
                    w_solved.insert(i, wi);
                }
            }
        }
    }

    let mut diagonal = Vec::with_capacity(i_max + 1);
    for col in cols.iter().take(i_max + 1) {
        diagonal.push(col[0].clone());
    }
    TriangleOutput {
        w: if solve_rows.is_some() { w_solved } else { BTreeMap::new() },
        diagonal,
        lie_exact,
    }
}

/// -∂W/∂t rows for the remainder triangle: R_j^0 = -∂W_{j+1}/∂t.
///
/// The differentiation is bound to the concrete forcing: derivative symbols
/// of constant (or absent) coefficients are the zero function and their
/// terms are dropped on the spot, so a t-constant forcing yields no
/// remainder at all and the smoothness ledger only records derivatives that
/// are actually nonzero.
fn remainder_inputs<T: Real>(
    w: &BTreeMap<usize, NFTerm<T>>,
    i_max: usize,
    f: &Forcing<T>,
) -> Result<Vec<Cell<T>>> {
    let is_zero_sym =
        |sym: crate::coeffexpr::Sym| f.derivative_is_zero(sym.j as usize, sym.d);
    let diff = |c: &CoeffExpr<T>| -> Result<CoeffExpr<T>> {
        Ok(c.t_derivative()?.drop_zero_symbols(is_zero_sym).neg())
    };
    let mut left: Vec<Cell<T>> = vec![Vec::new(); i_max + 1];
    for (row, term) in w {
        let j = row - 1;
        if j > i_max {
            continue;
        }
        let mut series = ProfileSeries::zero(term.profile.omega);
        series.a0 = diff(&term.profile.a0)?;
        for k in 1..=term.profile.harmonics() {
            let c = term.profile.cos_coeff(k);
            if !c.is_zero() {
                series.add_cos(k, diff(&c)?);
            }
            let s = term.profile.sin_coeff(k);
            if !s.is_zero() {
                series.add_sin(k, diff(&s)?);
            }
        }
        series.trim();
        if !series.is_zero() {
            left[j].push(NFTerm::new(term.q, series));
        }
    }
    Ok(left)
}

/// Assemble H_0^0 + Σ_{i>=1} (1/i!)(H_0^i + R_0^{i-1}) into a row-keyed
/// series under the factorial convention (stored row r carries r! times its
/// assembly weight, exact in integer arithmetic).
fn assemble<T: Real>(
    n: u32,
    omega: T,
    diagonal: &[Cell<T>],
    remainder: &[Cell<T>],
) -> NFSeries<T> {
    let mut out = NFSeries {
        n,
        omega,
        rows: BTreeMap::new(),
    };
    out.insert(NFTerm::kinetic(n, omega));
    let two_n = 2 * n as i64;
    for (i, cell) in diagonal.iter().enumerate().skip(1) {
        for t in cell {
            // stored row is r = 2n - q; scale by r!/i! (exact ratio)
            let r = (two_n - t.q) as u32;
            out.insert(t.scale(factorial_ratio::<T>(r, i as u32)));
        }
        if let Some(rem) = remainder.get(i - 1) {
            for t in rem {
                let r = (two_n - t.q) as u32;
                out.insert(t.scale(factorial_ratio::<T>(r, i as u32)));
            }
        }
    }
    out
}

/// r!/i! computed exactly in integers (requires r >= i or small values).
fn factorial_ratio<T: Real>(r: u32, i: u32) -> T {
    if r >= i {
        let mut acc: u128 = 1;
        for v in (i as u128 + 1)..=(r as u128) {
            acc *= v;
        }
        T::from_u128(acc).expect("factorial ratio representable")
    } else {
        factorial::<T>(r) / factorial::<T>(i)
    }
}

/// Outcome of one normalization stage.
#[derive(Debug, Clone)]
pub struct StageResult<T: Real> {
    /// Generator terms W_r by row index.
    pub w: BTreeMap<usize, NFTerm<T>>,
    /// Transformed, assembled Hamiltonian.
    pub hamiltonian: NFSeries<T>,
    /// Remainder diagonal rows R_0^i for i = 0..
    pub remainder: Vec<Vec<NFTerm<T>>>,
    /// Absolute mass dropped by this stage, per exponent.
    pub dropped: BTreeMap<i64, CoeffExpr<T>>,
    /// Per solved row: whether the Lie-equation residual cancelled
    /// identically at the coefficient level.
    pub lie_exact: Vec<(usize, bool)>,
}

fn run_stage<T: Real>(
    input: &NFSeries<T>,
    active: BTreeSet<usize>,
    opts: &NormalFormOptions,
) -> Result<StageResult<T>> {
    let n = input.n;
    let i_max = opts.i_max;
    let max_row = input.rows.keys().max().copied().unwrap_or(0);
    let mut left: Vec<Cell<T>> = vec![Vec::new(); max_row.max(i_max) + 1];
    for (row, terms) in &input.rows {
        left[*row] = terms.clone();
    }

    let mut dropped = BTreeMap::new();
    let solve = run_triangle(n, left, Some(&active), &BTreeMap::new(), opts, &mut dropped);
    let rem_left = remainder_inputs(&solve.w, i_max)?;
    let rem = run_triangle(n, rem_left, None, &solve.w, opts, &mut dropped);
    let hamiltonian = assemble(n, input.omega, &solve.diagonal, &rem.diagonal);
    Ok(StageResult {
        w: solve.w,
        hamiltonian,
        remainder: rem.diagonal,
        dropped,
        lie_exact: solve.lie_exact,
    })
}

/// First transformation: clear angular dependence at rows 1..n-1
/// (optionally n), producing the intermediate form that is angle-free at
/// exponents q >= n+1.
pub fn stage1<T: Real>(input: &NFSeries<T>, opts: &NormalFormOptions) -> Result<StageResult<T>> {
    let n = input.n as usize;
    let mut active: BTreeSet<usize> = (1..n).collect();
    if opts.stage1_include_row_n && n >= 1 {
        active.insert(n);
    }
    run_stage(input, active, opts)
}

/// Second transformation: clear rows n..2n-2, producing the special form
/// that is angle-free at exponents q >= 2.
pub fn stage2<T: Real>(input: &NFSeries<T>, opts: &NormalFormOptions) -> Result<StageResult<T>> {
    let n = input.n as usize;
    let active: BTreeSet<usize> = (n..=(2 * n).saturating_sub(2)).collect();
    run_stage(input, active, opts)
}

/// Truncation accounting: absolute dropped mass per exponent, as bound
/// polynomials in the forcing symbols.
#[derive(Debug, Clone)]
pub struct TruncationReport<T: Real> {
    pub n: u32,
    pub i_max: usize,
    pub q_min: i64,
    pub dropped: BTreeMap<i64, CoeffExpr<T>>,
    /// Sup-level band masses of the final series by exponent (used for the
    /// geometric tail extrapolation).
    pub band_mass: BTreeMap<i64, T>,
    /// Whether either stage actually produced generator terms. An identity
    /// transformation neglects nothing beyond the tallied drops.
    pub transformed: bool,
}

impl<T: Real> TruncationReport<T> {
    /// Bound on everything not represented in the final series at action K.
    ///
    /// Two contributions: the exactly tallied dropped terms, and a geometric
    /// extrapolation of the diagonal rows beyond the processed depth. For the
    /// latter, the sup-level band masses of the perturbation part (q <= n)
    /// decay close to geometrically in q; a least-squares envelope through
    /// them gives the per-step factor, padded by 2x, and the tail sums the
    /// implied series in K^(-1/(n+1)).
    pub fn residual_bound(&self, f: &Forcing<T>, k: T) -> T {
        let n1 = int::<T>(self.n as i64 + 1);
        let mut acc = T::zero();
        for (q, mass) in &self.dropped {
            acc = acc + mass.sup_bound(f) * k.powf(int::<T>(*q) / n1);
        }
        if !self.transformed {
            return acc;
        }
        let bands: Vec<(T, T)> = self
            .band_mass
            .iter()
            .filter(|(q, m)| **q <= self.n as i64 && **m > T::zero())
            .map(|(q, m)| (int::<T>(*q), m.ln()))
            .collect();
        if bands.len() < 2 {
            return acc;
        }
        // least-squares envelope ln m = a + s q over the perturbation bands
        let len = cast::<T>(bands.len() as f64);
        let mq = bands.iter().fold(T::zero(), |a, b| a + b.0) / len;
        let mm = bands.iter().fold(T::zero(), |a, b| a + b.1) / len;
        let mut num = T::zero();
        let mut den = T::zero();
        for (q, m) in &bands {
            num = num + (*q - mq) * (*m - mm);
            den = den + (*q - mq) * (*q - mq);
        }
        let slope = num / den;
        // mass multiplies by exp(-slope) per unit decrease in q
        let step = (-slope).exp();
        let q_deep = self
            .band_mass
            .iter()
            .filter(|(_, m)| **m > T::zero())
            .map(|(q, _)| *q)
            .min()
            .unwrap_or(0);
        let m_deep = self.band_mass[&q_deep];
        let rho = step * k.powf(-T::one() / n1);
        if rho >= T::one() {
            return T::infinity();
        }
        let first_neglected =
            cast::<T>(2.0) * m_deep * step * k.powf(int::<T>(q_deep - 1) / n1);
        acc + first_neglected / (T::one() - rho)
    }
}

/// Convergence data in the sense of the generator-flow lemma.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceBound<T> {
    /// Action threshold above which the ε-flow of the generator is
    /// guaranteed to reach ε = 1.
    pub threshold: T,
    /// Bound on the angular displacement of the transformation.
    pub kappa_displacement: T,
}

/// Evaluate the lemma constants on a grid: (n+1)A = max |∂F̃_r/∂κ|,
/// C = max |F̃_r|, B = Σ_{j<n} 1/j!, threshold = (1 + nAB)^((n+1)/n).
pub fn convergence_threshold<T: Real>(
    w: &BTreeMap<usize, NFTerm<T>>,
    n: u32,
    f: &Forcing<T>,
) -> Result<ConvergenceBound<T>> {
    let mut max_dk = T::zero();
    let mut max_val = T::zero();
    let kappa_samples = 128usize;
    let t_samples = 48usize;
    for term in w.values() {
        let deriv = term.derivative_series();
        let per = cast::<T>(2.0) * T::PI() / term.profile.omega;
        for it in 0..t_samples {
            let t = f.period() * cast::<T>(it as f64 / t_samples as f64);
            for ik in 0..kappa_samples {
                let kappa = per * cast::<T>(ik as f64 / kappa_samples as f64);
                let dv = eval_profile(&deriv, f, kappa, t)?;
                let v = eval_profile(&term.profile, f, kappa, t)?;
                max_dk = max_dk.max(dv.abs());
                max_val = max_val.max(v.abs());
            }
        }
    }
    let n1 = int::<T>(n as i64 + 1);
    let a = max_dk / n1;
    let mut b = T::zero();
    for j in 0..n {
        b = b + T::one() / factorial::<T>(j);
    }
    let threshold = (T::one() + int::<T>(n as i64) * a * b).powf(n1 / int::<T>(n as i64));
    Ok(ConvergenceBound {
        threshold,
        kappa_displacement: b * max_val,
    })
}

/// Full two-stage normalization output.
#[derive(Debug, Clone)]
pub struct NormalFormResult<T: Real> {
    pub n: u32,
    pub h_original: NFSeries<T>,
    pub h_intermediate: NFSeries<T>,
    pub h_special: NFSeries<T>,
    pub w_stage1: BTreeMap<usize, NFTerm<T>>,
    pub w_stage2: BTreeMap<usize, NFTerm<T>>,
    pub remainder_stage1: Vec<Vec<NFTerm<T>>>,
    pub remainder_stage2: Vec<Vec<NFTerm<T>>>,
    /// Max derivative order of each p_j consumed anywhere in the output.
    pub smoothness_ledger: BTreeMap<usize, u8>,
    pub convergence: ConvergenceBound<T>,
    pub truncation: TruncationReport<T>,
    /// Per solved row of each stage: Lie-equation residual cancelled
    /// identically?
    pub lie_exact_stage1: Vec<(usize, bool)>,
    pub lie_exact_stage2: Vec<(usize, bool)>,
}

/// Run both transformations and all bookkeeping.
pub fn normal_form<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    opts: &NormalFormOptions,
) -> Result<NormalFormResult<T>> {
    let report = f.validate();
    if !report.valid {
        return Err(Error::Config(format!(
            "forcing failed validation: {}",
            report
                .issues
                .iter()
                .map(|i| i.what.as_str())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    let n = g.n();
    let h0 = NFSeries::original(g, f, opts.harmonics)?;

    let s1 = stage1(&h0, opts)?;
    let s2 = stage2(&s1.hamiltonian, opts)?;
    let mut dropped = s1.dropped.clone();
    for (q, mass) in &s2.dropped {
        let slot = dropped.entry(*q).or_insert_with(CoeffExpr::zero);
        *slot = slot.add(mass);
    }

    // smoothness ledger over everything the construction produced
    let mut ledger: BTreeMap<usize, u8> = BTreeMap::new();
    let record_series = |s: &ProfileSeries<T>, ledger: &mut BTreeMap<usize, u8>| {
        s.a0.record_orders(ledger);
        for k in 1..=s.harmonics() {
            s.cos_coeff(k).record_orders(ledger);
            s.sin_coeff(k).record_orders(ledger);
        }
    };
    for w in s1.w.values().chain(s2.w.values()) {
        record_series(&w.profile, &mut ledger);
    }
    for rows in [&s1.remainder, &s2.remainder] {
        for cell in rows.iter() {
            for t in cell {
                record_series(&t.profile, &mut ledger);
            }
        }
    }
    for series in [&s1.hamiltonian, &s2.hamiltonian] {
        for terms in series.rows.values() {
            for t in terms {
                record_series(&t.profile, &mut ledger);
            }
        }
    }
    for j in 0..=(2 * n as usize).saturating_sub(2) {
        ledger.entry(j).or_insert(0);
    }
    for (j, d) in &ledger {
        let allowed = theorem_minimum(*j, n).order();
        if *d > allowed {
            return Err(Error::SmoothnessPolicy {
                j: *j,
                requested: *d,
                declared: allowed,
            });
        }
    }

    let c1 = convergence_threshold(&s1.w, n, f)?;
    let c2 = convergence_threshold(&s2.w, n, f)?;
    let convergence = ConvergenceBound {
        threshold: c1.threshold.max(c2.threshold),
        kappa_displacement: c1.kappa_displacement.max(c2.kappa_displacement),
    };

    let mut band_mass = BTreeMap::new();
    for terms in s2.hamiltonian.rows.values() {
        for t in terms {
            let m = t.profile.abs_mass().sup_bound(f);
            let row = (2 * n as i64 - t.q) as u32;
            let v = m / factorial::<T>(row);
            let e = band_mass.entry(t.q).or_insert_with(T::zero);
            *e = *e + v;
        }
    }
    let transformed = !(s1.w.is_empty() && s2.w.is_empty());
    let lie_exact_stage1 = s1.lie_exact.clone();
    let lie_exact_stage2 = s2.lie_exact.clone();

    Ok(NormalFormResult {
        n,
        h_original: h0,
        h_intermediate: s1.hamiltonian,
        h_special: s2.hamiltonian,
        w_stage1: s1.w,
        w_stage2: s2.w,
        remainder_stage1: s1.remainder,
        remainder_stage2: s2.remainder,
        smoothness_ledger: ledger,
        convergence,
        truncation: TruncationReport {
            n,
            i_max: opts.i_max,
            q_min: opts.q_min,
            dropped,
            band_mass,
            transformed,
        },
        lie_exact_stage1,
        lie_exact_stage2,
    })
}

/// Integrate the equations of motion of a truncated series Hamiltonian in
/// the (K, κ) chart: K̇ = +∂H/∂κ, κ̇ = -∂H/∂K. The angle is left unreduced.
pub fn series_orbit<T: Real>(
    h: &NFSeries<T>,
    f: &Forcing<T>,
    k: T,
    kappa: T,
    t0: T,
    t1: T,
) -> Result<(T, T)> {
    if !(k > T::zero()) {
        return Err(Error::Domain("action must be positive".into()));
    }
    let opts = OdeOptions {
        rtol: cast(1e-11),
        atol: cast(1e-13),
        ..OdeOptions::default()
    };
    let out = dopri5(
        |t, z: &[T; 2]| {
            let kk = z[0].max(cast::<T>(1e-12));
            let (dkappa, dk) = h
                .gradient(f, kk, z[1], t)
                .expect("series gradient under a validated forcing");
            [dkappa, -dk]
        },
        t0,
        t1,
        [k, kappa],
        &opts,
        |_, _| {},
    )?;
    Ok((out[0], out[1]))
}

/// Direction of the generator ε-flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportDirection {
    /// From normalized variables to original ones (ε: 0 → 1).
    NewToOld,
    /// From original variables to normalized ones (ε: 1 → 0).
    OldToNew,
}

/// Transport a phase point through the ε-flow of a generator at frozen time
/// t: dK/dε = ∂W/∂κ, dκ/dε = -∂W/∂K.
pub fn generator_transport<T: Real>(
    w: &BTreeMap<usize, NFTerm<T>>,
    n: u32,
    f: &Forcing<T>,
    t: T,
    k: T,
    kappa: T,
    dir: TransportDirection,
) -> Result<(T, T)> {
    if w.is_empty() {
        return Ok((k, kappa));
    }
    if !(k > T::zero()) {
        return Err(Error::Domain("action must be positive".into()));
    }
    // freeze the coefficients at time t
    struct Row<T: Real> {
        r: usize,
        q: i64,
        profile: TrigSeries<T, T>,
        dprofile: TrigSeries<T, T>,
    }
    let mut rows: Vec<Row<T>> = Vec::new();
    for (r, term) in w {
        let freeze = |s: &ProfileSeries<T>| -> Result<TrigSeries<T, T>> {
            let mut out = TrigSeries::zero(s.omega);
            out.a0 = s.a0.eval(f, t)?;
            for kk in 1..=s.harmonics() {
                out.add_cos(kk, s.cos_coeff(kk).eval(f, t)?);
                out.add_sin(kk, s.sin_coeff(kk).eval(f, t)?);
            }
            out.trim();
            Ok(out)
        };
        rows.push(Row {
            r: *r,
            q: term.q,
            profile: freeze(&term.profile)?,
            dprofile: freeze(&term.derivative_series())?,
        });
    }
    let n1 = int::<T>(n as i64 + 1);
    let rhs = |eps: T, z: &[T; 2]| -> [T; 2] {
        let kk = z[0].max(cast::<T>(1e-12));
        let mut dk = T::zero();
        let mut dkap = T::zero();
        for row in &rows {
            let wgt = eps.powi(row.r as i32 - 1) / factorial::<T>(row.r as u32 - 1);
            let q = int::<T>(row.q);
            dk = dk + wgt * kk.powf(q / n1) * row.dprofile.eval(z[1]);
            dkap = dkap - wgt * (q / n1) * kk.powf(q / n1 - T::one()) * row.profile.eval(z[1]);
        }
        [dk, dkap]
    };
    let (e0, e1) = match dir {
        TransportDirection::NewToOld => (T::zero(), T::one()),
        TransportDirection::OldToNew => (T::one(), T::zero()),
    };
    let opts = OdeOptions {
        rtol: cast(1e-12),
        atol: cast(1e-13),
        ..OdeOptions::default()
    };
    let out = dopri5(rhs, e0, e1, [k, kappa], &opts, |_, _| {})?;
    Ok((out[0], out[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::ForcingConfig;
    use crate::gentrig::build_gentrig;

    fn g2() -> GenTrig<f64> {
        build_gentrig(2, 64, 1e-10).unwrap()
    }

    fn forcing(s: &str) -> Forcing<f64> {
        let cfg: ForcingConfig = serde_json::from_str(s).unwrap();
        Forcing::from_config(&cfg).unwrap()
    }

    fn p2_only() -> Forcing<f64> {
        forcing(r#"{"n":2,"T":1.0,"p":[{"j":2,"cos":[0.0,0.2]}]}"#)
    }

    #[test]
    fn bracket_with_kinetic_term_is_a_pure_derivative() {
        let g = g2();
        let omega = g.omega();
        let kin = NFTerm::kinetic(2, omega);
        // B = K^(1/3) g(κ) with g = cos(ωκ)
        let mut prof = ProfileSeries::zero(omega);
        prof.add_cos(1, CoeffExpr::scalar(1.0));
        let b = NFTerm::new(1, prof);
        let mut dropped = BTreeMap::new();
        let r = poisson_bracket(&kin, &b, 2, 64, &mut dropped);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].q, 1 + 4 - 3); // q_B + n - 1
        // derivative of cos is -ω sin
        let s = r[0].profile.sin_coeff(1).as_scalar().unwrap();
        assert!((s + omega).abs() < 1e-15);
        assert!(r[0].profile.cos_coeff(1).is_zero());
    }

    #[test]
    fn bracket_of_kappa_constant_profiles_is_empty() {
        let omega = g2().omega();
        let a = NFTerm::new(0, ProfileSeries::constant(omega, CoeffExpr::scalar(2.0)));
        let b = NFTerm::new(0, ProfileSeries::constant(omega, CoeffExpr::scalar(3.0)));
        let mut dropped = BTreeMap::new();
        assert!(poisson_bracket(&a, &b, 2, 64, &mut dropped).is_empty());
    }

    #[test]
    fn bracket_grading_is_row_additive() {
        // {P_r, R_s} ⊂ P_{r+s}: q arithmetic only
        let omega = g2().omega();
        let n = 2u32;
        for (qa, qb) in [(3i64, 2i64), (2, 1), (1, 2), (0, 3)] {
            let mut pa = ProfileSeries::zero(omega);
            pa.add_cos(1, CoeffExpr::scalar(0.7));
            let mut pb = ProfileSeries::zero(omega);
            pb.add_sin(2, CoeffExpr::scalar(-0.4));
            let a = NFTerm::new(qa, pa);
            let b = NFTerm::new(qb, pb);
            let mut dropped = BTreeMap::new();
            for t in poisson_bracket(&a, &b, n, 64, &mut dropped) {
                let row_a = 2 * n as i64 - qa;
                let row_b = n as i64 - qb + 1;
                assert_eq!(2 * n as i64 - t.q, row_a + row_b);
            }
        }
    }

    #[test]
    fn homological_solution_hand_value() {
        // n=2, D = K·(-1/2 sn³ p₂) → B = 0, C = -(1/4) K^(2/3) cn p₂
        let g = g2();
        let f = p2_only();
        let h = NFSeries::original(&g, &f, 64).unwrap();
        let row1 = &h.rows()[&1];
        assert_eq!(row1.len(), 1);
        let d = &row1[0];
        assert_eq!(d.q, 3);
        let (b, c) = solve_homological(d, 2);
        assert!(b.is_zero(), "mean of sn³ vanishes");
        let c = c.unwrap();
        assert_eq!(c.q, 2);
        // every coefficient should be (-1/4 · cn harmonic) times the bare p₂ symbol
        let cn = g.profile(0, 1, 64).unwrap().series;
        for k in 1..=64usize {
            let want = -0.25 * cn.cos_coeff(k);
            let ce = c.profile.cos_coeff(k);
            if want.abs() < 1e-13 {
                assert!(ce.is_zero(), "harmonic {k} should vanish");
            } else {
                assert_eq!(ce.terms().len(), 1);
                let (v, m) = &ce.terms()[0];
                assert_eq!(m.as_slice(), &[(crate::coeffexpr::Sym { j: 2, d: 0 }, 1)]);
                assert!((v - want).abs() < 1e-12, "harmonic {k}: {v} vs {want}");
            }
            assert!(c.profile.sin_coeff(k).is_zero());
        }
    }

    #[test]
    fn kappa_constant_input_passes_through_the_homological_solve() {
        let omega = g2().omega();
        let d = NFTerm::new(
            2,
            ProfileSeries::constant(omega, CoeffExpr::symbol(0.7, 1, 0)),
        );
        let (b, c) = solve_homological(&d, 2);
        assert!(c.is_none());
        assert_eq!(b.q, 2);
        assert_eq!(b.profile.a0, d.profile.a0);
    }

    #[test]
    fn constant_in_time_forcing_has_no_remainders() {
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[{"j":1,"const":1.0},{"j":2,"const":0.5}]}"#);
        let opts = NormalFormOptions::for_n(2);
        let r = normal_form(&g, &f, &opts).unwrap();
        assert!(!r.w_stage1.is_empty());
        for rows in [&r.remainder_stage1, &r.remainder_stage2] {
            for cell in rows.iter() {
                assert!(cell.is_empty(), "remainder from a t-constant generator");
            }
        }
        assert_eq!(r.smoothness_ledger[&1], 0);
        assert_eq!(r.smoothness_ledger[&2], 0);
    }

    #[test]
    fn lie_equation_residual_is_exactly_zero() {
        let g = g2();
        let f = forcing(
            r#"{"n":2,"T":1.0,"p":[{"j":0,"cos":[1.0]},{"j":1,"sin":[0.3]},{"j":2,"cos":[0.0,0.2]}]}"#,
        );
        let h = NFSeries::original(&g, &f, 64).unwrap();
        for row in [1usize, 2, 3] {
            let Some(terms) = h.rows().get(&row) else { continue };
            for d in terms {
                let (b, c) = solve_homological(d, 2);
                let Some(c) = c else { continue };
                let kin = NFTerm::kinetic(2, g.omega());
                let mut dropped = BTreeMap::new();
                let br = poisson_bracket(&kin, &c, 2, 64, &mut dropped);
                assert_eq!(br.len(), 1);
                // residual B - D - {H00, C} must vanish identically
                let resid = b
                    .profile
                    .sub(&d.profile)
                    .sub(&br[0].profile);
                assert!(resid.is_zero(), "row {row} residual {resid:?}");
            }
        }
    }

    #[test]
    fn morris_normal_form_is_the_identity() {
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[{"j":0,"cos":[1.0]}]}"#);
        let opts = NormalFormOptions::for_n(2);
        let r = normal_form(&g, &f, &opts).unwrap();
        assert!(r.w_stage1.is_empty());
        assert!(r.w_stage2.is_empty());
        assert!((r.convergence.threshold - 1.0).abs() < 1e-15);
        // H_special equals the chart Hamiltonian pointwise
        for (k, kappa, t) in [(1.0, 0.0, 0.0), (2.5, 1.3, 0.4), (10.0, 4.0, 0.9)] {
            let a = r.h_special.evaluate(&f, k, kappa, t).unwrap();
            let b = crate::aa::aa_hamiltonian(&g, &f, k, kappa, t).unwrap();
            assert!((a - b).abs() < 1e-9, "at ({k},{kappa},{t}): {a} vs {b}");
        }
        assert_eq!(r.smoothness_ledger[&0], 0);
    }

    #[test]
    fn p2_only_stage1_matches_hand_computation() {
        let g = g2();
        let f = p2_only();
        let opts = NormalFormOptions::for_n(2);
        let r = normal_form(&g, &f, &opts).unwrap();
        // W_1 = -(1/4) K^(2/3) cn p₂ and H_0^1 = 0
        assert_eq!(r.w_stage1.len(), 1);
        let w1 = &r.w_stage1[&1];
        assert_eq!(w1.q, 2);
        let cn = g.profile(0, 1, 64).unwrap().series;
        let kappa_grid: Vec<f64> = (0..40).map(|i| g.period() * i as f64 / 40.0).collect();
        for &kappa in &kappa_grid {
            let got = eval_profile(&w1.profile, &f, kappa, 0.3).unwrap();
            let p2 = f.eval_p(2, 0.3, 0).unwrap();
            let want = -0.25 * cn.eval(kappa) * p2;
            assert!((got - want).abs() < 1e-10, "κ={kappa}");
        }
        // remainder R_0^0 = +(1/4) K^(2/3) cn p₂'
        let r00 = &r.remainder_stage1[0];
        assert_eq!(r00.len(), 1);
        assert_eq!(r00[0].q, 2);
        for &kappa in &kappa_grid {
            let got = eval_profile(&r00[0].profile, &f, kappa, 0.3).unwrap();
            let dp2 = f.eval_p(2, 0.3, 1).unwrap();
            let want = 0.25 * cn.eval(kappa) * dp2;
            assert!((got - want).abs() < 1e-10, "κ={kappa}");
        }
        // ledger records exactly one t-derivative beyond W for p₂
        assert_eq!(r.smoothness_ledger[&2], 2);
        assert_eq!(r.smoothness_ledger[&1], 0);
        assert_eq!(r.smoothness_ledger[&0], 0);
    }

    #[test]
    fn zero_forcing_normal_form_is_kinetic_only() {
        let g = g2();
        let f = forcing(r#"{"n":2,"T":1.0,"p":[]}"#);
        let opts = NormalFormOptions::for_n(2);
        let r = normal_form(&g, &f, &opts).unwrap();
        assert_eq!(r.h_special.rows().len(), 1);
        let v = r.h_special.evaluate(&f, 1.0, 0.3, 0.0).unwrap();
        assert!((v - 0.75).abs() < 1e-14);
        assert!((r.convergence.threshold - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shape_of_the_two_forms() {
        let g = g2();
        let f = forcing(
            r#"{"n":2,"T":1.0,"p":[{"j":0,"cos":[1.0]},{"j":1,"sin":[0.3]},{"j":2,"cos":[0.0,0.2]}]}"#,
        );
        let opts = NormalFormOptions::for_n(2);
        let r = normal_form(&g, &f, &opts).unwrap();
        // intermediate: κ-free at q >= n+1 = 3 (coefficient-level zero)
        for q in 3..=4i64 {
            assert!(
                r.h_intermediate.kappa_dependent_mass(q).is_zero(),
                "intermediate q={q}"
            );
        }
        // special: κ-free at q >= 2
        for q in 2..=4i64 {
            assert!(
                r.h_special.kappa_dependent_mass(q).is_zero(),
                "special q={q}"
            );
        }
        // and the subcritical exponents do keep angular content
        assert!(!r.h_special.kappa_dependent_mass(1).is_zero());
        // ledger equals the smoothness table
        assert_eq!(r.smoothness_ledger[&0], 0);
        assert_eq!(r.smoothness_ledger[&1], 1);
        assert_eq!(r.smoothness_ledger[&2], 2);
    }

    #[test]
    fn stage2_mean_matches_independent_derivation() {
        // f̄₂(t) = -(3/4) m₂ p₁(t) - (1/8) m₂ p₂(t)², m₂ = mean(sn²)
        let g = g2();
        let f = forcing(
            r#"{"n":2,"T":1.0,"p":[{"j":0,"cos":[1.0]},{"j":1,"sin":[0.3]},{"j":2,"cos":[0.0,0.2]}]}"#,
        );
        let opts = NormalFormOptions::for_n(2);
        let r = normal_form(&g, &f, &opts).unwrap();
        let m2 = g.sn_power_mean(2, 0).unwrap();
        let terms = r.h_special.terms_at_exponent(2);
        assert!(!terms.is_empty());
        for t in [0.0, 0.13, 0.41, 0.77] {
            let mut got = 0.0;
            for (w, term) in &terms {
                assert!(term.is_kappa_free());
                got += w * term.profile.a0.eval(&f, t).unwrap();
            }
            let p1 = f.eval_p(1, t, 0).unwrap();
            let p2 = f.eval_p(2, t, 0).unwrap();
            let want = -0.75 * m2 * p1 - 0.125 * m2 * p2 * p2;
            assert!(
                (got - want).abs() < 1e-9,
                "t={t}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn n3_ledger_matches_the_table() {
        let g = build_gentrig::<f64>(3, 64, 1e-10).unwrap();
        let f = forcing(
            r#"{"n":3,"T":1.0,"p":[{"j":0,"cos":[0.5]},{"j":1,"sin":[0.2]},{"j":2,"cos":[0.1]},{"j":3,"sin":[0.1]},{"j":4,"cos":[0.0,0.1]}]}"#,
        );
        let opts = NormalFormOptions::for_n(3);
        let r = normal_form(&g, &f, &opts).unwrap();
        let want = [(0usize, 0u8), (1, 1), (2, 1), (3, 2), (4, 2)];
        for (j, d) in want {
            assert_eq!(r.smoothness_ledger[&j], d, "p_{j}");
        }
    }

    #[test]
    fn transport_round_trip_is_identity() {
        let g = g2();
        let f = p2_only();
        let opts = NormalFormOptions::for_n(2);
        let r = normal_form(&g, &f, &opts).unwrap();
        let (k1, kap1) =
            generator_transport(&r.w_stage1, 2, &f, 0.2, 5.0, 1.1, TransportDirection::NewToOld)
                .unwrap();
        let (k2, kap2) =
            generator_transport(&r.w_stage1, 2, &f, 0.2, k1, kap1, TransportDirection::OldToNew)
                .unwrap();
        assert!((k2 - 5.0).abs() < 1e-9);
        assert!((kap2 - 1.1).abs() < 1e-9);
    }
}
