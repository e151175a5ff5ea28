use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("argument outside the domain of definition: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("degenerate field: {0}")]
    Degenerate(String),
    #[error("characteristic foot left the velocity grid: |V| = {speed} > v_max = {v_max}")]
    FootOutOfRange { speed: f64, v_max: f64 },
    #[error("explicit stability bound exceeded: cfl = {cfl} > cap = {cap} at t = {t}")]
    Cfl { cfl: f64, cap: f64, t: f64 },
    #[error("solution left the local existence window: H3 norm {norm} exceeds ceiling {ceiling} at t = {t}")]
    BlowUp { norm: f64, ceiling: f64, t: f64 },
    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("iterate left the X_M ball: norm {norm} > {cap} at iteration {iteration}")]
    BallEscape { norm: f64, cap: f64, iteration: usize },
    #[error("tracked norm `{which}` reached {value} >= bound {bound} at t = {t}")]
    BoundEscape {
        which: &'static str,
        value: f64,
        bound: f64,
        t: f64,
    },
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
}
