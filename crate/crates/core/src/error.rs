use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{function} is undefined at x = {x}")]
    Domain { function: &'static str, x: f64 },

    #[error("emitters {i} and {j} are closer than the minimum separation ({separation:e} wavelengths)")]
    CoincidentEmitters { i: usize, j: usize, separation: f64 },

    #[error("Hermite order {0} exceeds the supported maximum of 64")]
    UnsupportedHermiteOrder(u32),

    #[error("emitter {index} lies outside the cavity centre plane (z = {z})")]
    OutOfPlane { index: usize, z: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("ambiguous eigenmode: best overlap {best} and runner-up {runner_up} are indistinguishable")]
    AmbiguousEigenmode { best: f64, runner_up: f64 },

    #[error("cavity is decoupled from the emitters at delta_e = {delta_e} (G^T M^-1 G vanishes)")]
    Decoupled { delta_e: f64 },

    #[error("interaction matrix is singular at delta_e = {delta_e}")]
    Singular { delta_e: f64 },

    #[error("no sign change in [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root search collapsed onto a discontinuity near {at} (|f| = {residual:e})")]
    Discontinuity { at: f64, residual: f64 },

    #[error("dip is not bracketed by the supplied points: {0}")]
    NotBracketed(String),

    #[error("fit did not converge after {iterations} iterations (s = {s}, beta = {beta}, rms = {residual:e})")]
    FitNotConverged { iterations: usize, s: f64, beta: f64, residual: f64 },

    #[error("no zero crossing of the relative phase inside the scan")]
    NoPhaseCrossing,

    #[error("Hilbert space dimension {dim} exceeds the cap of {cap} (emitters = {emitters}, n_max = {n_max})")]
    DimensionCap { dim: usize, cap: usize, emitters: usize, n_max: usize },

    #[error("steady state is not unique: generator has a degenerate null space")]
    DegenerateSteadyState,

    #[error("{method} did not converge (residual {residual:e})")]
    NotConverged { method: &'static str, residual: f64 },

    #[error("density matrix invariant violated: {0}")]
    InvalidState(String),
}
