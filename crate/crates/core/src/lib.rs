//! Weak-error analysis of the drift-implicit Euler scheme for scalar SDEs.
//!
//! The crate provides
//!
//! * [`jets`]: truncated derivative jets used to evaluate the error densities;
//! * [`problems`]: benchmark SDEs with closed-form Kolmogorov solutions;
//! * [`schemes`]: explicit and implicit Euler steppers;
//! * [`moments`]: an exact, sampling-free moment oracle for affine problems;
//! * [`expansion`]: the densities `ψ_i`, `ψ_e`, `ψ_ih` and the leading constant;
//! * [`montecarlo`]: seeded, coupled Monte Carlo estimators and Richardson extrapolation;
//! * [`analysis`] and [`report`]: rate fits, the expansion experiment and output.

pub mod analysis;
pub mod config;
pub mod error;
pub mod expansion;
pub mod jets;
pub mod moments;
pub mod montecarlo;
pub mod problems;
pub mod quadrature;
pub mod report;
pub mod schemes;

pub use error::{Error, Result};
pub use jets::Jet4;
pub use problems::{builtin_problem, builtin_problems, Problem};
pub use schemes::{SchemeConfig, SchemeKind, Solver};
