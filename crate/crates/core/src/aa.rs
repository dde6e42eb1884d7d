//! Action-angle chart (K, κ) for the unforced oscillator level sets.
//!
//! The chart is
//!
//! ```text
//! x = K^(1/(n+1)) sn(κ),    y = -K^(n/(n+1)) cn(κ),
//! ```
//!
//! which scales the area form by n/(n+1). Hamiltonians in the (K, κ) chart
//! are therefore the Cartesian ones multiplied by (n+1)/n, and the equations
//! of motion in this chart read K̇ = +∂H/∂κ, κ̇ = -∂H/∂K.

use crate::error::{Error, Result};
use crate::forcing::Forcing;
use crate::gentrig::GenTrig;
use crate::scalar::{cast, int, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState<T> {
    pub x: T,
    pub y: T,
    pub t: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionAngleState<T> {
    pub k: T,
    pub kappa: T,
    pub t: T,
}

/// x = K^(1/(n+1)) sn(κ), y = -K^(n/(n+1)) cn(κ).
pub fn from_action_angle<T: Real>(
    g: &GenTrig<T>,
    s: ActionAngleState<T>,
) -> Result<CartesianState<T>> {
    if !(s.k > T::zero()) {
        return Err(Error::Domain(
            "action must be positive (chart is singular at the origin)".into(),
        ));
    }
    let n1 = int::<T>(g.n() as i64 + 1);
    let (sn, cn) = g.sn_cn(s.kappa);
    Ok(CartesianState {
        x: s.k.powf(T::one() / n1) * sn,
        y: -s.k.powf(int::<T>(g.n() as i64) / n1) * cn,
        t: s.t,
    })
}

/// K = (y² + x^(2n))^((n+1)/(2n)), κ from the normalized (sn, cn) pair.
pub fn to_action_angle<T: Real>(
    g: &GenTrig<T>,
    s: CartesianState<T>,
) -> Result<ActionAngleState<T>> {
    let n = g.n();
    let level = s.y * s.y + s.x.powi(2 * n as i32);
    if !(level > T::zero()) {
        return Err(Error::Domain(
            "the origin has no action-angle representation".into(),
        ));
    }
    let n1 = int::<T>(n as i64 + 1);
    let k = level.powf(n1 / int::<T>(2 * n as i64));
    let sn = s.x * k.powf(-T::one() / n1);
    let cn = -s.y * k.powf(-int::<T>(n as i64) / n1);
    let kappa = g.kappa_from_sncn(sn, cn)?;
    Ok(ActionAngleState { k, kappa, t: s.t })
}

/// Cartesian Hamiltonian  ½(y² + x^(2n)) - Σ_j p_j(t) x^(j+1)/(j+1).
pub fn cartesian_hamiltonian<T: Real>(f: &Forcing<T>, s: CartesianState<T>) -> Result<T> {
    let n = f.n();
    let mut h = cast::<T>(0.5) * (s.y * s.y + s.x.powi(2 * n as i32));
    let degree = 2 * n as usize - 2;
    for j in 0..=degree {
        let pj = f.eval_p(j, s.t, 0)?;
        if pj != T::zero() {
            h = h - pj * s.x.powi(j as i32 + 1) / int::<T>(j as i64 + 1);
        }
    }
    Ok(h)
}

/// Hamiltonian in the (K, κ) chart:
///
/// ```text
/// (n+1)/(2n) K^(2n/(n+1)) + Σ_{j=1}^{2n-1} K^(j/(n+1)) f_j(κ, t),
/// f_j = -(n+1)/(j n) sn^j(κ) p_{j-1}(t),
/// ```
///
/// which equals (n+1)/n times the Cartesian Hamiltonian at the mapped point.
pub fn aa_hamiltonian<T: Real>(
    g: &GenTrig<T>,
    f: &Forcing<T>,
    k: T,
    kappa: T,
    t: T,
) -> Result<T> {
    if !(k > T::zero()) {
        return Err(Error::Domain("action must be positive".into()));
    }
    let n = g.n();
    let n_t = int::<T>(n as i64);
    let n1 = int::<T>(n as i64 + 1);
    let mut h = n1 / (n_t + n_t) * k.powf((n_t + n_t) / n1);
    let (sn, _) = g.sn_cn(kappa);
    let mut sn_pow = T::one();
    for j in 1..=(2 * n as usize - 1) {
        sn_pow = sn_pow * sn;
        let p = f.eval_p(j - 1, t, 0)?;
        if p != T::zero() {
            let fj = -n1 / (int::<T>(j as i64) * n_t) * sn_pow * p;
            h = h + k.powf(int::<T>(j as i64) / n1) * fj;
        }
    }
    Ok(h)
}
