//! Library for the periodically forced oscillator family
//!
//! ```text
//! x'' + n x^(2n-1) = p_0(t) + p_1(t) x + ... + p_{2n-2}(t) x^(2n-2)
//! ```
//!
//! built around a generalized sine/cosine pair, action-angle coordinates,
//! numerically computed period maps, a two-stage Deprit normalization of the
//! Hamiltonian and quantitative twist/decay/boundedness diagnostics.
//!
//! The numeric core is generic over the scalar type through [`scalar::Real`];
//! `f64`-backed aliases for the main types live at the crate root and are what
//! the CLI and the test suites use.

pub mod aa;
pub mod coeffexpr;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod forcing;
pub mod fourier;
pub mod gentrig;
pub mod nf;
pub mod ode;
pub mod scalar;
pub mod special;

pub use error::Error;
pub use scalar::Real;

/// `f64`-backed aliases for the main domain types.
pub type GenTrig64 = gentrig::GenTrig<f64>;
pub type Forcing64 = forcing::Forcing<f64>;
pub type CartesianState64 = aa::CartesianState<f64>;
pub type ActionAngleState64 = aa::ActionAngleState<f64>;
pub type IntegratorConfig64 = flow::IntegratorConfig<f64>;
pub type PeriodMapSample64 = flow::PeriodMapSample<f64>;
pub type NormalFormResult64 = nf::NormalFormResult<f64>;
pub type TwistData64 = diagnostics::TwistData<f64>;
pub type ScanReport64 = diagnostics::ScanReport<f64>;
