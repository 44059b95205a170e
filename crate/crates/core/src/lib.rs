//! Robust Merton portfolio choice under time-dependent drift and volatility
//! uncertainty.
//!
//! An investor maximizes expected utility of terminal wealth while an
//! adversary picks the market parameters from per-interval compact sets:
//! a drift set (box or ball) and a covariance eigenvalue interval per time
//! cell. For log, power and exponential utility the saddle point is explicit
//! — worst-case drift is the projection of `r·1` onto the drift set,
//! worst-case covariance is `eig_max · I` — and the value function is a
//! concatenation of smooth pieces, one per cell.
//!
//! The crate computes those closed forms ([`solver`]) and checks them three
//! independent ways ([`verify`]): exhaustive saddle-point scans over exact
//! per-cell expected utilities, finite-difference residuals of the optimized
//! HJB equation, and seeded Monte Carlo ([`simulate`]) for the martingale
//! optimality principle.

pub mod error;
pub mod simulate;
pub mod solver;
pub mod uncertainty;
pub mod utility;
pub mod verify;

pub use error::{Error, Result, Violation};
pub use simulate::{
    estimate_expected_utility, simulate_assets, simulate_wealth_cash, simulate_wealth_fraction,
    ParameterPath, PathConfig, PathSegment, PiecewisePolicy, PolicyPiece, Scheme, SimEstimate,
};
pub use solver::{
    continuous_limit_value, mesh_refinement_series, solve, CellSolution, ContinuousProfile,
    ContinuousScenario, MeshValue, QuadratureValue, RobustSolution, Scenario,
};
pub use uncertainty::{
    validate_schedule, worst_case_covariance, worst_case_drift, worst_case_vol_factor, DriftSet,
    TimeGrid, UncertaintyCell, UncertaintySchedule, VolSet,
};
pub use utility::UtilitySpec;
pub use verify::{
    analytic_expected_utility, hjb_residual, hjb_sample_points, martingale_check,
    martingale_check_powered, saddle_point_scan, shape_check, theta_candidates, GridSpec,
    MartingaleReport, MartingaleVerdict, PiGridSpec, ResidualReport, SaddleScanReport,
    ShapeReport, ThetaCandidate,
};

// Re-exported so downstream crates and tests use the same linear-algebra
// types without pinning their own nalgebra version.
pub use nalgebra;
