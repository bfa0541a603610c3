//! Radial solvers and diagnostics for the inhomogeneous degenerate NLS
//! `i u_t + ∇·(|x|^b ∇u) = -|x|^c |u|^p u`.

pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod gn;
pub mod grid;
pub mod groundstate;
pub mod io;
pub mod linalg;
pub mod model;
pub mod ode;

pub use error::{Error, Result};
pub use diagnostics::{
    check_bounds, check_virial_estimate, concentration, conserved_quantities, fit_blowup_rate, m_infty, rho,
    virial_series, virial_weights, BoundReport, RateFit, RhoReport, VirialSeries, VirialWeights,
};
pub use evolve::{adapt_dt, run, step, BlowupReport, EvolveConfig, Frame, SimState, StopReason, TimeSeries};
pub use gn::{
    generate_battery, sharp_constant, tail_quotient, verify_inequality, weinstein_quotient, BatterySpec, CheckOptions,
    GnKind, GnReport, InequalityCheck, InequalityKind, TrialFn,
};
pub use grid::{Grading, RadialField, RadialGrid};
pub use groundstate::{
    relax_weinstein, shoot, EllipticProblem, GroundStateProfile, ProblemKind, RelaxConfig, ShootingConfig,
};
pub use model::{CriticalityClass, DerivedIndices, Hypothesis, ModelParams, Regime};
pub use num_complex::Complex64;
