//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by parameter validation, integration and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The equation-of-state root lies outside the range covered by the stability theorem.
    #[error("iota3 out of theorem range: iota^3 = {iota3} exceeds 1/5 (use force to explore)")]
    Iota3OutOfRange { iota3: f64 },

    /// A query fell outside the tabulated range of a trajectory or time map.
    #[error("range error: {what} = {value} outside [{lo}, {hi}]")]
    Range { what: &'static str, value: f64, lo: f64, hi: f64 },

    /// The adaptive step size collapsed before the integration target was reached.
    #[error("stiffness failure at t = {t}: step {h:e} below minimum (f = {f:e})")]
    Stiffness { t: f64, h: f64, f: f64 },

    /// A quantity that must be positive by construction was not.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    /// No sign change of the bracket function was found below the search ceiling.
    #[error("no bracket: no root of the bracket function below t = {ceiling}")]
    NoBracket { ceiling: f64 },

    /// The trajectory never reached the requested cap.
    #[error("no blowup detected in window: f reached {f_max:e} < cap {cap:e}")]
    NoBlowup { f_max: f64, cap: f64 },

    /// The two integral representations of g disagree.
    #[error("representation mismatch: relative disagreement {rel:e} of the two g integrals")]
    RepresentationMismatch { rel: f64 },

    /// The reduced wave operator stopped being hyperbolic.
    #[error("hyperbolicity loss at t = {t}: g^zz = {value:e} at grid index {index}")]
    Hyperbolicity { t: f64, index: usize, value: f64 },

    /// The density touched vacuum.
    #[error("vacuum formation at t = {t}: 1 + rho_hat = {value:e} at grid index {index}")]
    Vacuum { t: f64, index: usize, value: f64 },

    /// The CFL step underflowed.
    #[error("CFL collapse at t = {t}: dt = {dt:e}")]
    CflCollapse { t: f64, dt: f64 },

    /// An initial-data profile is not periodic with unit period.
    #[error("profile not periodic: endpoint mismatch {mismatch:e}")]
    NotPeriodic { mismatch: f64 },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Stiffness { .. }
                | Error::Consistency(_)
                | Error::RepresentationMismatch { .. }
                | Error::Hyperbolicity { .. }
                | Error::Vacuum { .. }
                | Error::CflCollapse { .. }
                | Error::NoBlowup { .. }
                | Error::NoBracket { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
