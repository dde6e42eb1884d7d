//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A construction-time cross check failed (integrator or quadrature misconfiguration).
    #[error("construction error: {0}")]
    Construction(String),

    /// The adaptive integrator could not complete a step.
    #[error("integration failure: {0}")]
    Integration(String),

    /// A trajectory came too close to the origin for the action-angle chart.
    #[error("chart singularity: K = {k} fell below the floor {floor}")]
    ChartSingularity { k: f64, floor: f64 },

    /// A derivative of p_j was requested beyond its declared smoothness class.
    #[error("smoothness policy violation: p_{j} requested at order {requested}, declared C{declared}")]
    SmoothnessPolicy {
        j: usize,
        requested: u8,
        declared: u8,
    },

    /// A series did not have the structural shape an operation requires.
    #[error("shape error: {0}")]
    Shape(String),

    /// Config or schema failure while parsing external input.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<V> = core::result::Result<V, Error>;
