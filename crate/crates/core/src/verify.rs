//! Independent checks of the closed-form solutions: exact per-cell expected
//! utilities, exhaustive saddle-point scans, finite-difference PDE residuals,
//! martingale-optimality estimates and value-shape diagnostics.
//!
//! Everything here deliberately avoids the solver's own formulas for rates
//! and values wherever an independent route exists.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::simulate::{
    simulate_wealth_cash, simulate_wealth_fraction, ParameterPath, PathConfig, PiecewisePolicy,
    SimEstimate,
};
use crate::solver::RobustSolution;
use crate::uncertainty::UncertaintyCell;
use crate::utility::UtilitySpec;

/// Exact `E[u(X_h)]` under constant parameters `(mu, Sigma)` on `[0, h]`,
/// starting from wealth `x`, with control `pi` (a fraction for Log/Power, a
/// cash amount for Exponential).
///
/// Closed forms, writing `e = mu - r·1`, `a = pi'e`, `q = pi' Sigma pi`:
///
/// * log:   `log x + (a - q/2) h`
/// * power: `x^gamma exp(gamma (a - q/2) h + gamma^2 q h / 2)`
/// * exp:   `-beta exp(-beta x - beta a h + beta^2 q h / 2)`
pub fn analytic_expected_utility(
    pi: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    horizon: f64,
    x: f64,
    r: f64,
    utility: &UtilitySpec,
) -> Result<f64> {
    utility.validate()?;
    let d = pi.len();
    if mu.len() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: pi {}, mu {}, sigma {}x{}",
            d,
            mu.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::invalid(format!("horizon {horizon} must be finite and >= 0")));
    }
    if !r.is_finite() {
        return Err(Error::invalid(format!("risk-free rate {r} is not finite")));
    }
    if utility.requires_positive_wealth() && x <= 0.0 {
        return Err(Error::domain(format!("wealth {x} outside the domain of {utility:?}")));
    }
    let excess = mu - DVector::from_element(d, r);
    let drift = pi.dot(&excess);
    let quad = (sigma * pi).dot(pi);
    if quad < -1e-12 {
        return Err(Error::invalid("sigma is not positive semidefinite"));
    }
    let quad = quad.max(0.0);
    let value = match *utility {
        UtilitySpec::Log => x.ln() + (drift - 0.5 * quad) * horizon,
        UtilitySpec::Power { gamma } => {
            x.powf(gamma)
                * (gamma * (drift - 0.5 * quad) * horizon + 0.5 * gamma * gamma * quad * horizon)
                    .exp()
        }
        UtilitySpec::Exponential { beta } => {
            -beta * (-beta * x - beta * drift * horizon + 0.5 * beta * beta * quad * horizon).exp()
        }
    };
    Ok(value)
}

/// One adversary candidate `(mu, Sigma)` for the scans.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCandidate {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// Candidate set covering the cell's extremes: all drift scan candidates
/// (box vertices / ball poles plus the projection of `r·1`), crossed with
/// `eig_min·I`, `eig_max·I` and `n_random_sigma` random interior covariance
/// samples (random orthogonal basis, eigenvalues uniform in the bound
/// interval).
pub fn theta_candidates(
    cell: &UncertaintyCell,
    r: f64,
    n_random_sigma: usize,
    seed: u64,
) -> Result<Vec<ThetaCandidate>> {
    let d = cell.dim();
    let target = DVector::from_element(d, r);
    let drifts = cell.drift.scan_candidates(&target)?;

    let mut sigmas: Vec<DMatrix<f64>> = vec![
        DMatrix::identity(d, d) * cell.vol.eig_min,
        DMatrix::identity(d, d) * cell.vol.eig_max,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random_sigma {
        sigmas.push(random_spd(&mut rng, d, cell.vol.eig_min, cell.vol.eig_max));
    }

    let mut out = Vec::with_capacity(drifts.len() * sigmas.len());
    for mu in &drifts {
        for sigma in &sigmas {
            out.push(ThetaCandidate { mu: mu.clone(), sigma: sigma.clone() });
        }
    }
    Ok(out)
}

/// Random symmetric positive-definite matrix with eigenvalues uniform in
/// `[eig_min, eig_max]`: `Q diag(lambda) Q'` with `Q` from a Gaussian QR.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize, eig_min: f64, eig_max: f64) -> DMatrix<f64> {
    let gaussian = DMatrix::from_fn(d, d, |_, _| -> f64 { StandardNormal.sample(rng) });
    let q = gaussian.qr().q();
    let eigs = DVector::from_fn(d, |_, _| {
        if eig_min == eig_max {
            eig_min
        } else {
            rng.gen_range(eig_min..=eig_max)
        }
    });
    &q * DMatrix::from_diagonal(&eigs) * q.transpose()
}

/// Rectangular search box for the control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PiGridSpec {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub points_per_dim: usize,
}

impl PiGridSpec {
    /// Symmetric box `[-half_width, half_width]^d`.
    pub fn symmetric(d: usize, half_width: f64, points_per_dim: usize) -> Self {
        Self {
            lower: DVector::from_element(d, -half_width),
            upper: DVector::from_element(d, half_width),
            points_per_dim,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points_per_dim < 2 {
            return Err(Error::invalid("pi grid needs at least 2 points per dimension"));
        }
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::invalid("pi grid bounds are malformed"));
        }
        for k in 0..self.lower.len() {
            if !self.lower[k].is_finite() || !self.upper[k].is_finite() || self.lower[k] >= self.upper[k] {
                return Err(Error::invalid(format!(
                    "pi grid is empty in dimension {k}: [{}, {}]",
                    self.lower[k], self.upper[k]
                )));
            }
        }
        Ok(())
    }
}

/// Grid resolution actually used, recorded for reproducibility.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub points_per_dim: usize,
    pub refinements: usize,
    /// Largest per-dimension grid step after all refinements.
    pub final_step: f64,
}

/// Result of a maximin/minimax scan over one cell.
#[derive(Debug, Clone)]
pub struct SaddleScanReport {
    /// `max_pi min_theta` of the exact expected utility.
    pub maximin: f64,
    /// `min_theta max_pi`.
    pub minimax: f64,
    pub arg_pi: DVector<f64>,
    pub arg_mu: DVector<f64>,
    pub arg_sigma: DMatrix<f64>,
    /// `minimax - maximin`; non-negative up to grid round-off.
    pub gap: f64,
    pub grid: GridSpec,
}

fn for_each_grid_point(
    lower: &DVector<f64>,
    step: &DVector<f64>,
    points_per_dim: usize,
    mut visit: impl FnMut(&DVector<f64>),
) {
    let d = lower.len();
    let mut idx = vec![0usize; d];
    let mut point = DVector::zeros(d);
    loop {
        for k in 0..d {
            point[k] = lower[k] + idx[k] as f64 * step[k];
        }
        visit(&point);
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < points_per_dim {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return;
            }
        }
    }
}

/// Grid maximization with local refinement: each round re-centers a box of
/// half-width `1.5 * step` on the incumbent and halves the step (7 points per
/// dimension), clipped to the original bounds.
fn grid_maximize(
    objective: impl Fn(&DVector<f64>) -> f64,
    spec: &PiGridSpec,
    refinements: usize,
) -> (DVector<f64>, f64, f64) {
    let d = spec.lower.len();
    let p0 = spec.points_per_dim;
    let mut step = DVector::from_fn(d, |k, _| (spec.upper[k] - spec.lower[k]) / (p0 - 1) as f64);
    let mut best_arg = spec.lower.clone();
    let mut best_val = f64::NEG_INFINITY;
    for_each_grid_point(&spec.lower, &step, p0, |pi| {
        let v = objective(pi);
        if v > best_val {
            best_val = v;
            best_arg = pi.clone();
        }
    });

    const REFINE_POINTS: usize = 7;
    for _ in 0..refinements {
        let lo = DVector::from_fn(d, |k, _| (best_arg[k] - 1.5 * step[k]).max(spec.lower[k]));
        let hi = DVector::from_fn(d, |k, _| (best_arg[k] + 1.5 * step[k]).min(spec.upper[k]));
        step = DVector::from_fn(d, |k, _| (hi[k] - lo[k]) / (REFINE_POINTS - 1) as f64);
        for_each_grid_point(&lo, &step, REFINE_POINTS, |pi| {
            let v = objective(pi);
            if v > best_val {
                best_val = v;
                best_arg = pi.clone();
            }
        });
    }
    (best_arg, best_val, step.max())
}

/// Exhaustive saddle scan on a single cell: computes
/// `maximin = max_pi min_theta E[u]` and `minimax = min_theta max_pi E[u]`
/// over the grid and the finite candidate set, with local grid refinement
/// around every incumbent maximizer.
pub fn saddle_point_scan(
    cell: &UncertaintyCell,
    r: f64,
    x: f64,
    utility: &UtilitySpec,
    pi_grid: &PiGridSpec,
    candidates: &[ThetaCandidate],
    refinements: usize,
) -> Result<SaddleScanReport> {
    pi_grid.validate()?;
    if candidates.is_empty() {
        return Err(Error::invalid("theta candidate set is empty"));
    }
    let horizon = cell.duration();
    let value = |pi: &DVector<f64>, theta: &ThetaCandidate| -> f64 {
        analytic_expected_utility(pi, &theta.mu, &theta.sigma, horizon, x, r, utility)
            .unwrap_or(f64::NEG_INFINITY)
    };

    // max over pi of the lower envelope min_theta.
    let envelope = |pi: &DVector<f64>| {
        candidates
            .iter()
            .map(|theta| value(pi, theta))
            .fold(f64::INFINITY, f64::min)
    };
    let (arg_pi, maximin, final_step) = grid_maximize(envelope, pi_grid, refinements);

    // min over theta of each candidate's refined best response.
    let mut minimax = f64::INFINITY;
    let mut arg_theta = 0usize;
    for (i, theta) in candidates.iter().enumerate() {
        let (_, best, _) = grid_maximize(|pi| value(pi, theta), pi_grid, refinements);
        if best < minimax {
            minimax = best;
            arg_theta = i;
        }
    }

    let theta = &candidates[arg_theta];
    Ok(SaddleScanReport {
        maximin,
        minimax,
        arg_pi,
        arg_mu: theta.mu.clone(),
        arg_sigma: theta.sigma.clone(),
        gap: minimax - maximin,
        grid: GridSpec {
            lower: pi_grid.lower.clone(),
            upper: pi_grid.upper.clone(),
            points_per_dim: pi_grid.points_per_dim,
            refinements,
            final_step,
        },
    })
}

/// Residuals of the optimized Hamilton-Jacobi-Bellman equation at sample
/// points, with derivatives taken by central finite differences.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub points: Vec<(f64, f64)>,
    /// Relative residual per point (absolute residual over the largest
    /// Hamiltonian term magnitude).
    pub residuals: Vec<f64>,
    pub max_abs_relative_residual: f64,
}

// Finite-difference steps. Time and first-derivative steps follow the 1e-5
// relative choice; the second-derivative step is larger because the
// three-point stencil amplifies rounding error by 1/h^2, which would swamp
// the 1e-6 residual scale at h = 1e-5 x.
const FD_TIME_REL: f64 = 1e-5;
const FD_X_REL: f64 = 1e-5;
const FD_XX_REL: f64 = 2e-4;

/// Evaluates the optimized HJB residual
/// `V_t + x pi*'(mu* - r1) V_x + x^2 (pi*' Sigma* pi*) V_xx / 2`
/// (cash form without the wealth factors for Exponential) at each point.
/// Points must be interior to their cell: the value function is not
/// time-differentiable across cell boundaries.
pub fn hjb_residual(solution: &RobustSolution, points: &[(f64, f64)]) -> Result<ResidualReport> {
    if points.is_empty() {
        return Err(Error::invalid("no sample points supplied"));
    }
    let horizon = solution.horizon();
    let dt = FD_TIME_REL * horizon;
    let r = solution.scenario.r;
    let cash_form = solution.utility().is_cash_strategy();

    let mut residuals = Vec::with_capacity(points.len());
    let mut max_abs = 0.0f64;
    for &(t, x) in points {
        let idx = solution
            .scenario
            .schedule
            .cell_index_at(t)
            .ok_or_else(|| Error::domain(format!("time {t} outside the horizon")))?;
        let cell = &solution.cells[idx];
        if t - cell.t_start < dt || cell.t_end - t < dt {
            return Err(Error::invalid(format!(
                "point t = {t} is within one time step of a cell boundary; \
                 the value function is not differentiable there"
            )));
        }
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::domain(format!("sample wealth must be positive, got {x}")));
        }

        let v = |tt: f64, xx: f64| solution.value_unchecked(tt, xx);
        let v_t = (v(t + dt, x) - v(t - dt, x)) / (2.0 * dt);
        let hx = FD_X_REL * x;
        let v_x = (v(t, x + hx) - v(t, x - hx)) / (2.0 * hx);
        let hxx = FD_XX_REL * x;
        let v_xx = (v(t, x + hxx) - 2.0 * v(t, x) + v(t, x - hxx)) / (hxx * hxx);

        let pi = &cell.strategy;
        let excess = &cell.mu_star - DVector::from_element(pi.len(), r);
        let drift_coef = pi.dot(&excess);
        let quad = (&cell.sigma_star * pi).dot(pi);
        let (drift_term, diffusion_term) = if cash_form {
            (drift_coef * v_x, 0.5 * quad * v_xx)
        } else {
            (x * drift_coef * v_x, 0.5 * x * x * quad * v_xx)
        };
        let raw = v_t + drift_term + diffusion_term;
        let scale = v_t.abs().max(drift_term.abs()).max(diffusion_term.abs());
        let rel = if scale > 0.0 { raw.abs() / scale } else { raw.abs() };
        max_abs = max_abs.max(rel);
        residuals.push(rel);
    }
    Ok(ResidualReport {
        points: points.to_vec(),
        residuals,
        max_abs_relative_residual: max_abs,
    })
}

/// Deterministic interior sample points for [`hjb_residual`]: per cell,
/// `per_cell` points with `t` uniform on the middle 90% of the cell and `x`
/// log-uniform on `[x_lo, x_hi]`.
pub fn hjb_sample_points(
    solution: &RobustSolution,
    per_cell: usize,
    x_lo: f64,
    x_hi: f64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_cell * solution.cells.len());
    for cell in &solution.cells {
        let duration = cell.t_end - cell.t_start;
        for _ in 0..per_cell {
            let u: f64 = rng.gen_range(0.05..0.95);
            let t = cell.t_start + u * duration;
            let w: f64 = rng.gen_range(0.0..1.0);
            let x = x_lo * (x_hi / x_lo).powf(w);
            out.push((t, x));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MartingaleVerdict {
    /// `E[v(t, X_t)]` equals `v(s, x)` within 3 standard errors.
    Martingale,
    /// The estimate falls below `v(s, x)` by more than 3 standard errors.
    StrictSupermartingale,
    /// The estimate exceeds `v(s, x)` by more than 3 standard errors —
    /// contradicts optimality of the reference solution.
    Violation,
}

#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub lhs: SimEstimate,
    pub rhs: f64,
    pub verdict: MartingaleVerdict,
}

impl MartingaleReport {
    pub fn deficit(&self) -> f64 {
        self.rhs - self.lhs.mean
    }
}

/// Monte Carlo check of the martingale optimality principle: simulates
/// `X` from `(s, x)` to `t` under the worst-case parameters and the given
/// policy, and compares `E[v(t, X_t)]` against `v(s, x)`.
///
/// For the optimal policy the two agree within noise; any other policy drives
/// the estimate (weakly) below `v(s, x)`.
pub fn martingale_check(
    solution: &RobustSolution,
    policy: &PiecewisePolicy,
    s: f64,
    t: f64,
    x: f64,
    config: &PathConfig,
) -> Result<MartingaleReport> {
    let horizon = solution.horizon();
    if !(0.0..=horizon).contains(&s) || !(0.0..=horizon).contains(&t) || s > t {
        return Err(Error::domain(format!(
            "need 0 <= s <= t <= {horizon}, got s = {s}, t = {t}"
        )));
    }
    if solution.utility().requires_positive_wealth() && x <= 0.0 {
        return Err(Error::domain(format!("starting wealth must be positive, got {x}")));
    }
    let rhs = solution.value_unchecked(s, x);
    if s == t {
        return Ok(MartingaleReport {
            lhs: SimEstimate { mean: rhs, std_error: 0.0, n_paths: config.n_paths, seed: config.seed },
            rhs,
            verdict: MartingaleVerdict::Martingale,
        });
    }
    let path = ParameterPath::worst_case(solution).restricted(s, t)?;
    let wealth = if solution.utility().is_cash_strategy() {
        simulate_wealth_cash(&path, policy, x, solution.scenario.r, config)?
    } else {
        simulate_wealth_fraction(&path, policy, x, solution.scenario.r, config)?
    };
    let values: Vec<f64> = wealth
        .iter()
        .map(|&w| solution.value_unchecked(t, w))
        .collect();
    let lhs = SimEstimate::from_sample(&values, config.seed);
    let diff = lhs.mean - rhs;
    let verdict = if diff.abs() <= 3.0 * lhs.std_error {
        MartingaleVerdict::Martingale
    } else if diff < 0.0 {
        MartingaleVerdict::StrictSupermartingale
    } else {
        MartingaleVerdict::Violation
    };
    Ok(MartingaleReport { lhs, rhs, verdict })
}

/// Runs [`martingale_check`] with increasing path counts until the standard
/// error is below `deficit / 5` (or `max_paths` is reached), so a strict
/// supermartingale verdict carries statistical power.
pub fn martingale_check_powered(
    solution: &RobustSolution,
    policy: &PiecewisePolicy,
    s: f64,
    t: f64,
    x: f64,
    config: &PathConfig,
    max_paths: usize,
) -> Result<MartingaleReport> {
    let mut cfg = *config;
    loop {
        let report = martingale_check(solution, policy, s, t, x, &cfg)?;
        let deficit = report.deficit();
        if deficit > 0.0 && report.lhs.std_error < deficit / 5.0 {
            return Ok(report);
        }
        if cfg.n_paths >= max_paths {
            return Ok(report);
        }
        cfg.n_paths = (cfg.n_paths * 4).min(max_paths);
    }
}

/// Monotonicity and midpoint-concavity of `x -> V(t, x)` across a grid.
#[derive(Debug, Clone)]
pub struct ShapeReport {
    pub strictly_increasing: bool,
    pub midpoint_concave: bool,
}

impl ShapeReport {
    pub fn passed(&self) -> bool {
        self.strictly_increasing && self.midpoint_concave
    }
}

/// Asserts the shape the theory guarantees: at fixed `t`, the value function
/// is strictly increasing and midpoint-concave in wealth.
pub fn shape_check(solution: &RobustSolution, t: f64, x_grid: &[f64]) -> Result<ShapeReport> {
    if x_grid.len() < 2 {
        return Err(Error::invalid("shape check needs at least two wealth points"));
    }
    for w in x_grid.windows(2) {
        if !w[0].is_finite() || !w[1].is_finite() || w[0] >= w[1] {
            return Err(Error::invalid("wealth grid must be strictly increasing"));
        }
    }
    if x_grid[0] <= 0.0 {
        return Err(Error::invalid("wealth grid must be positive"));
    }
    let values: Vec<f64> = x_grid
        .iter()
        .map(|&x| solution.value_at(t, x))
        .collect::<Result<_>>()?;
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;

    let strictly_increasing = values.windows(2).all(|w| w[1] > w[0]);
    let mut midpoint_concave = true;
    for i in 0..x_grid.len() - 1 {
        let mid = 0.5 * (x_grid[i] + x_grid[i + 1]);
        let v_mid = solution.value_at(t, mid)?;
        if v_mid < 0.5 * (values[i] + values[i + 1]) - tol {
            midpoint_concave = false;
            break;
        }
    }
    Ok(ShapeReport { strictly_increasing, midpoint_concave })
}
