//! Error type shared by all solver modules.

use thiserror::Error;

/// Errors surfaced by curve construction, PDE solves, operator steps,
/// iteration drivers, and diagnostics.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid periodic arc: {0}")]
    InvalidArc(String),

    #[error("arc periods differ: {0} vs {1}")]
    PeriodMismatch(f64, f64),

    #[error("pair is not strictly ordered: {0}")]
    NotOrdered(String),

    #[error("flow speed is not positive at ({x}, {y}): {value}")]
    NonPositiveField { x: f64, y: f64, value: f64 },

    #[error("flow speed is not periodic in x: relative deviation {0}")]
    NotPeriodic(f64),

    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("grid does not resolve the boundary gap: {cells:.2} cells across minimum gap (need >= {need})")]
    GapUnresolved { cells: f64, need: usize },

    #[error("linear solve did not reach tolerance: residual {residual:.3e} after {sweeps} sweeps")]
    NoConvergence { residual: f64, sweeps: usize },

    #[error("level set has {components} periodic components (expected 1)")]
    DisconnectedLevelSet { components: usize },

    #[error("reachable region is empty at threshold {eps}")]
    EmptyRegion { eps: f64 },

    #[error("level {level} leaves the solved window")]
    LevelOutOfWindow { level: f64 },

    #[error("epsilon {eps} outside admissible range (0, {eps_max})")]
    EpsilonOutOfRange { eps: f64, eps_max: f64 },

    #[error("bracket invalid: {0}")]
    InvalidBracket(String),

    #[error("iterate crossed its predecessor beyond one-cell slack at step {step}: {detail}")]
    MonotonicityViolation { step: usize, detail: String },

    #[error("root not bracketed while solving {0}")]
    RootNotBracketed(String),

    #[error("curve evolution step unstable: dt * max|K| = {0:.3}")]
    StepUnstable(f64),

    #[error("curve degenerated during evolution: {0}")]
    CurveDegenerate(String),

    #[error("annular curve touches the origin (min r = {0:.3e})")]
    OriginTouched(f64),

    #[error("continuation seed is not at mu = 0 (mu = {0:.3e})")]
    SeedNotAtMuZero(f64),

    #[error("stream beds of the probe solutions share no common periodic curve")]
    CommonCurveMissing,

    #[error("field is not strictly log-subharmonic on the working region (min Delta ln a = {0:.3e})")]
    NotLogSubharmonic(f64),

    #[error("solve failed: {0}")]
    SolveFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
