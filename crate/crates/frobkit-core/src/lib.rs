//! frobkit-core: numerical machinery for the integrability of continuous
//! corank-1 distributions.
//!
//! The crate certifies asymptotic involutivity of approximating 1-form
//! sequences, constructs and verifies the involutivity-restoring perturbation
//! of a canonical frame, synthesizes integral surfaces from composed flows,
//! solves Pfaff systems by characteristics, and classifies ODE moduli of
//! continuity against uniqueness conditions.
//!
//! All norms are Euclidean in chart coordinates and refer to the C0 topology
//! (sups over evaluation grids). Verdicts produced by the certification
//! routines are numerical evidence about trends along finite schedules, not
//! proofs.

pub mod chart;
pub mod error;
pub mod expr;
pub mod flow;
pub mod forms;
pub mod frames;
pub mod involutivity;
pub mod mollify;
pub mod odeuniq;
pub mod perturb;
pub mod pfaff;
pub mod surfaces;

pub use chart::{Chart, Grid, Point, ScalarField, Smoothness};
pub use error::{Error, Result};
pub use expr::Expression;
pub use forms::{OneForm, SupNorm, ThreeForm, TwoForm, VectorField};
pub use frames::CanonicalFrame;

/// Schema version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;
