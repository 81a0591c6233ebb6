//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("singularity in `{expr}` at ({point:?}): {message}")]
    Singularity {
        expr: String,
        point: [f64; 3],
        message: String,
    },

    #[error("variable `{name}` is not available on a {dim}-dimensional chart")]
    VariableDim { name: String, dim: usize },

    #[error("point {point:?} outside chart bounds (axis {axis})")]
    OutOfBounds { point: [f64; 3], axis: usize },

    #[error("finite-difference step {step} underflows axis {axis} (width {width})")]
    StepUnderflow { step: f64, axis: usize, width: f64 },

    #[error("stencil for axis {axis} at {point:?} leaves the chart")]
    StencilOutOfBounds { point: [f64; 3], axis: usize },

    #[error("field tagged `{tag}` is not differentiable; mollify it first")]
    SmoothnessTag { tag: String },

    #[error("transversality failure: |coefficient| = {value:e} at {point:?} (threshold {threshold:e})")]
    Transversality {
        point: [f64; 3],
        value: f64,
        threshold: f64,
    },

    #[error("flow left the chart at time {time} (point {point:?})")]
    FlowExit { time: f64, point: [f64; 3] },

    #[error("integrator step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("characteristic left the z-interval at (x, y) = ({x}, {y}), z = {z}")]
    BlowUp { x: f64, y: f64, z: f64 },

    #[error("empty or degenerate region")]
    EmptyRegion,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("mollifier scale {eps} exceeds chart margin {margin} on axis {axis}")]
    ScaleExceedsMargin { eps: f64, margin: f64, axis: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("field evaluation failed at grid node {index}: {source}")]
    NodeEvaluation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("modulus violated: |g({x:?}) - g({y:?})| = {increment} > w({dist}) = {bound}")]
    ModulusViolated {
        x: [f64; 3],
        y: [f64; 3],
        dist: f64,
        increment: f64,
        bound: f64,
    },

    #[error("modulus must be positive on the schedule; w({t}) = {value}")]
    NonPositiveModulus { t: f64, value: f64 },

    #[error("lipschitz bound violated: |F({z0}) - F({z1})| = {increment} > {lipschitz} * {dist}")]
    LipschitzViolated {
        z0: f64,
        z1: f64,
        increment: f64,
        dist: f64,
        lipschitz: f64,
    },

    #[error("mesh shapes do not match: {0}")]
    MeshMismatch(String),

    #[error("degenerate tangent plane at mesh node ({i}, {j})")]
    DegenerateTangent { i: usize, j: usize },

    #[error("section plane x2 = {section} does not intersect the chart")]
    SectionOutsideChart { section: f64 },

    #[error("{context}: {message}")]
    Invalid { context: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv format error at line {line}: {message}")]
    Csv { line: usize, message: String },
}

impl Error {
    pub fn invalid(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            context: context.into(),
            message: message.into(),
        }
    }
}
