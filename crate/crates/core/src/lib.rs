//! Design-based estimation of average treatment effects under complete
//! randomization, with covariate adjustment in moderately high dimensions.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); assignment
//! moments are exact over [`Rational`]. The aliases below fix `f64`, which is
//! what the simulation engine and the command-line tool use.

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod moments;
pub mod population;
pub mod report;
pub mod scalar;
pub mod simulation;
pub mod stratified;
pub mod theory;
pub mod variance;
pub mod verify;

pub use error::{Error, Result};
pub use estimators::{
    adjusted, bias_corrected, cross_fitted, diff_in_means, estimate, unbiased, ArmFits, EstimatorId, PointEstimate,
};
pub use linalg::{ols_fit, DesignMatrix, GramFactor, OlsFit, Projection};
pub use moments::{closed_form_moment, enumerated_moment, MomentSpec};
pub use population::{enumerate_assignments, sample_assignment, Assignment, FinitePopulation, ObservedSample};
pub use report::{SimResult, SimRow};
pub use scalar::Scalar;
pub use simulation::{build_dgp, run_monte_carlo, worst_case_errors, ErrorKind, SimConfig};
pub use stratified::StratifiedSample;
pub use variance::{VarianceMethod, VarianceReport};

/// Exact rationals with arbitrary-precision numerator and denominator.
pub type Rational = num_rational::BigRational;

pub type Population = FinitePopulation<f64>;
pub type Sample = ObservedSample<f64>;
pub type Design = DesignMatrix<f64>;
pub type Fit = OlsFit<f64>;
pub type Estimate = PointEstimate<f64>;
pub type Variance = VarianceReport<f64>;
pub type Strata = StratifiedSample<f64>;
