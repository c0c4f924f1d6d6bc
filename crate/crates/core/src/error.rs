use crate::spectral::Space;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("field is in {found:?} space, expected {expected:?}")]
    SpaceMismatch { expected: Space, found: Space },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("symbol {0} is singular at the zero mode and no zero-mode rule was given")]
    MissingZeroModeRule(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("polynomial alpha1 - alpha3 x + alpha5 x^2 has no distinct positive roots (discriminant {discriminant})")]
    DegenerateRoots { discriminant: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e}, last contraction ratio {ratio:.3})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        ratio: f64,
    },

    #[error("blow-up guard triggered at t = {time}")]
    BlowUp { time: f64 },

    #[error("wave reaches the box boundary by t = {time} (group speed {speed:.3}, half box {half_box:.3})")]
    Wraparound {
        time: f64,
        speed: f64,
        half_box: f64,
    },

    #[error("{what} = {value:e} exceeds gate {threshold:e}")]
    GateFailure {
        what: &'static str,
        value: f64,
        threshold: f64,
    },

    #[error("Duhamel tail estimate {estimate:e} exceeds tolerance {tol:e}; increase the horizon")]
    TailTooLarge { estimate: f64, tol: f64 },

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures of the numerics themselves (divergence, blow-up) as opposed
    /// to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NonConvergence { .. }
                | Error::BlowUp { .. }
                | Error::TailTooLarge { .. }
        )
    }
}
