//! Seeded, reproducible Monte Carlo for asset prices and wealth processes
//! under piecewise-constant parameter paths.
//!
//! Every path draws from its own ChaCha stream, selected by
//! `(master seed, path index)`. Results are therefore a pure function of the
//! inputs and the seed, independent of thread count or scheduling.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::RobustSolution;
use crate::utility::UtilitySpec;

/// Discretization scheme for the SDE integrators.
///
/// `Exact` samples the closed-form lognormal/Gaussian transition over each
/// step and is exact in distribution at any step count. `Euler` is the
/// standard first-order update, retained to expose discretization error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Exact,
    Euler,
}

/// Monte Carlo run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathConfig {
    pub n_paths: usize,
    pub steps_per_year: u32,
    pub seed: u64,
    pub scheme: Scheme,
}

impl PathConfig {
    pub fn new(n_paths: usize, steps_per_year: u32, seed: u64) -> Self {
        Self { n_paths, steps_per_year, seed, scheme: Scheme::Exact }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths must be at least 1"));
        }
        if self.steps_per_year == 0 {
            return Err(Error::invalid("steps_per_year must be at least 1"));
        }
        Ok(())
    }
}

/// One piecewise-constant market segment: `(mu, sigma)` on `[t_start, t_end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// A deterministic parameter path `theta_t = (mu_t, sigma_t)` driving the
/// simulations. Segments must tile a contiguous interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPath {
    pub segments: Vec<PathSegment>,
}

impl ParameterPath {
    pub fn new(segments: Vec<PathSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("parameter path needs at least one segment"));
        }
        let d = segments[0].mu.len();
        for (i, s) in segments.iter().enumerate() {
            if !(s.t_start.is_finite() && s.t_end.is_finite() && s.t_start < s.t_end) {
                return Err(Error::invalid(format!(
                    "segment {i} interval [{}, {}) is invalid",
                    s.t_start, s.t_end
                )));
            }
            if s.mu.len() != d || s.sigma.nrows() != d || s.sigma.ncols() != d {
                return Err(Error::invalid(format!(
                    "segment {i} dimensions do not match path dimension {d}"
                )));
            }
            if s.mu.iter().any(|v| !v.is_finite()) || s.sigma.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("segment {i} has non-finite parameters")));
            }
            if i > 0 && s.t_start != segments[i - 1].t_end {
                return Err(Error::invalid(format!(
                    "segment {i} starts at {} but previous segment ends at {}",
                    s.t_start,
                    segments[i - 1].t_end
                )));
            }
        }
        Ok(Self { segments })
    }

    /// Worst-case path of a solved scenario: per cell `(mu*, sqrt(C)·I)`.
    pub fn worst_case(solution: &RobustSolution) -> Self {
        let segments = solution
            .cells
            .iter()
            .map(|c| PathSegment {
                t_start: c.t_start,
                t_end: c.t_end,
                mu: c.mu_star.clone(),
                sigma: DMatrix::identity(c.mu_star.len(), c.mu_star.len()) * c.c_max.sqrt(),
            })
            .collect();
        Self { segments }
    }

    pub fn dim(&self) -> usize {
        self.segments[0].mu.len()
    }

    pub fn t_start(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().unwrap().t_end
    }

    /// The sub-path covering `[from, to]`, with boundary segments clipped.
    pub fn restricted(&self, from: f64, to: f64) -> Result<Self> {
        if !from.is_finite()
            || !to.is_finite()
            || from >= to
            || from < self.t_start() - 1e-12
            || to > self.t_end() + 1e-12
        {
            return Err(Error::invalid(format!(
                "restriction [{from}, {to}] not inside path span [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let mut segments = Vec::new();
        for s in &self.segments {
            let lo = s.t_start.max(from);
            let hi = s.t_end.min(to);
            if hi > lo {
                segments.push(PathSegment { t_start: lo, t_end: hi, ..s.clone() });
            }
        }
        Self::new(segments)
    }

    fn segment_at(&self, t: f64) -> &PathSegment {
        let idx = self
            .segments
            .iter()
            .position(|s| t >= s.t_start && t < s.t_end)
            .unwrap_or(self.segments.len() - 1);
        &self.segments[idx]
    }
}

/// A piecewise-constant control: wealth fractions for Log/Power investors,
/// cash amounts for Exponential ones.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPiece {
    pub t_start: f64,
    pub t_end: f64,
    pub weights: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolicy {
    pub pieces: Vec<PolicyPiece>,
}

impl PiecewisePolicy {
    pub fn new(pieces: Vec<PolicyPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::invalid("policy needs at least one piece"));
        }
        let d = pieces[0].weights.len();
        for (i, p) in pieces.iter().enumerate() {
            if !(p.t_start.is_finite() && p.t_end.is_finite() && p.t_start < p.t_end) {
                return Err(Error::invalid(format!(
                    "policy piece {i} interval [{}, {}) is invalid",
                    p.t_start, p.t_end
                )));
            }
            if p.weights.len() != d {
                return Err(Error::invalid(format!(
                    "policy piece {i} dimension differs from {d}"
                )));
            }
            if p.weights.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("policy piece {i} has non-finite weights")));
            }
            if i > 0 && p.t_start != pieces[i - 1].t_end {
                return Err(Error::invalid(format!(
                    "policy piece {i} starts at {} but previous piece ends at {}",
                    p.t_start,
                    pieces[i - 1].t_end
                )));
            }
        }
        Ok(Self { pieces })
    }

    /// One piece spanning `[from, to]` with the given weights.
    pub fn constant(from: f64, to: f64, weights: DVector<f64>) -> Result<Self> {
        Self::new(vec![PolicyPiece { t_start: from, t_end: to, weights }])
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].weights.len()
    }

    pub fn t_start(&self) -> f64 {
        self.pieces[0].t_start
    }

    pub fn t_end(&self) -> f64 {
        self.pieces.last().unwrap().t_end
    }

    /// Same breakpoints, every weight vector shifted by `delta`.
    pub fn perturbed(&self, delta: &DVector<f64>) -> Result<Self> {
        if delta.len() != self.dim() {
            return Err(Error::invalid("perturbation dimension mismatch"));
        }
        Ok(Self {
            pieces: self
                .pieces
                .iter()
                .map(|p| PolicyPiece {
                    t_start: p.t_start,
                    t_end: p.t_end,
                    weights: &p.weights + delta,
                })
                .collect(),
        })
    }

    fn weights_at(&self, t: f64) -> &DVector<f64> {
        let idx = self
            .pieces
            .iter()
            .position(|p| t >= p.t_start && t < p.t_end)
            .unwrap_or(self.pieces.len() - 1);
        &self.pieces[idx].weights
    }
}

impl RobustSolution {
    /// The solved optimal control restricted to `[from, to]`, in the natural
    /// units of the scenario's utility (fractions or cash amounts).
    pub fn optimal_policy(&self, from: f64, to: f64) -> Result<PiecewisePolicy> {
        if !from.is_finite() || !to.is_finite() || from >= to || from < 0.0 || to > self.horizon() + 1e-12
        {
            return Err(Error::invalid(format!(
                "policy window [{from}, {to}] not inside [0, {}]",
                self.horizon()
            )));
        }
        let mut pieces = Vec::new();
        for c in &self.cells {
            let lo = c.t_start.max(from);
            let hi = c.t_end.min(to);
            if hi > lo {
                pieces.push(PolicyPiece { t_start: lo, t_end: hi, weights: c.strategy.clone() });
            }
        }
        PiecewisePolicy::new(pieces)
    }
}

/// Monte Carlo summary: sample mean and standard error of a statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimEstimate {
    pub fn from_sample(values: &[f64], seed: u64) -> Self {
        let n = values.len();
        // A constant sample has zero spread exactly; don't let summation
        // round-off manufacture a spurious standard error.
        if values.iter().all(|v| *v == values[0]) {
            return Self { mean: values[0], std_error: 0.0, n_paths: n, seed };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, std_error, n_paths: n, seed }
    }
}

/// Terminal asset prices per path. `crossed_zero[k]` marks Euler paths on
/// which some component hit zero or below (the exact scheme never does).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedAssets {
    pub terminal: Vec<DVector<f64>>,
    pub crossed_zero: Vec<bool>,
}

/// The merged step grid: union of scheme steps and all parameter/policy
/// breakpoints, so piecewise-constant inputs are never averaged across
/// their own discontinuities.
fn merged_steps(
    from: f64,
    to: f64,
    steps_per_year: u32,
    breakpoints: impl Iterator<Item = f64>,
) -> Vec<(f64, f64)> {
    let span = to - from;
    let dt = 1.0 / steps_per_year as f64;
    let n_uniform = (span / dt).ceil() as usize;
    let mut points: Vec<f64> = (0..=n_uniform)
        .map(|i| (from + i as f64 * dt).min(to))
        .collect();
    points.extend(breakpoints.filter(|&t| t > from && t < to));
    points.push(to);
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tol = 1e-12 * span.max(1.0);
    points.dedup_by(|a, b| (*a - *b).abs() <= tol);
    points.windows(2).map(|w| (w[0], w[1])).collect()
}

fn path_rng(seed: u64, path_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index as u64);
    rng
}

/// Simulates the terminal prices of `d` assets with
/// `dS = Diag(S)(mu dt + sigma dW)` under the given parameter path.
pub fn simulate_assets(
    path: &ParameterPath,
    s0: &DVector<f64>,
    config: &PathConfig,
) -> Result<SimulatedAssets> {
    config.validate()?;
    let d = path.dim();
    if s0.len() != d {
        return Err(Error::invalid(format!(
            "s0 has dimension {}, path has dimension {d}",
            s0.len()
        )));
    }
    if s0.iter().any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::domain("initial prices must be strictly positive"));
    }

    struct Step {
        log_drift: DVector<f64>,   // (mu - diag(Sigma)/2) * dt
        lin_drift: DVector<f64>,   // mu * dt
        sigma_scaled: DMatrix<f64>, // sigma * sqrt(dt)
    }
    let steps: Vec<Step> = merged_steps(
        path.t_start(),
        path.t_end(),
        config.steps_per_year,
        path.segments.iter().map(|s| s.t_start),
    )
    .into_iter()
    .map(|(lo, hi)| {
        let seg = path.segment_at(0.5 * (lo + hi));
        let dt = hi - lo;
        let cov = &seg.sigma * seg.sigma.transpose();
        let log_drift = DVector::from_fn(d, |k, _| (seg.mu[k] - 0.5 * cov[(k, k)]) * dt);
        Step {
            log_drift,
            lin_drift: &seg.mu * dt,
            sigma_scaled: &seg.sigma * dt.sqrt(),
        }
    })
    .collect();

    let scheme = config.scheme;
    let results: Vec<(DVector<f64>, bool)> = (0..config.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, p);
            let mut z = DVector::zeros(d);
            match scheme {
                Scheme::Exact => {
                    let mut log_s = s0.map(|v| v.ln());
                    for step in &steps {
                        for k in 0..d {
                            z[k] = StandardNormal.sample(&mut rng);
                        }
                        log_s += &step.log_drift + &step.sigma_scaled * &z;
                    }
                    (log_s.map(|v| v.exp()), false)
                }
                Scheme::Euler => {
                    let mut s = s0.clone();
                    let mut crossed = false;
                    for step in &steps {
                        for k in 0..d {
                            z[k] = StandardNormal.sample(&mut rng);
                        }
                        let shock = &step.sigma_scaled * &z;
                        for k in 0..d {
                            s[k] *= 1.0 + step.lin_drift[k] + shock[k];
                        }
                        if s.iter().any(|&v| v <= 0.0) {
                            crossed = true;
                        }
                    }
                    (s, crossed)
                }
            }
        })
        .collect();

    let (terminal, crossed_zero) = results.into_iter().unzip();
    Ok(SimulatedAssets { terminal, crossed_zero })
}

fn check_alignment(path: &ParameterPath, policy: &PiecewisePolicy) -> Result<()> {
    let tol = 1e-12 * (path.t_end() - path.t_start()).max(1.0);
    if policy.dim() != path.dim() {
        return Err(Error::invalid(format!(
            "policy dimension {} does not match path dimension {}",
            policy.dim(),
            path.dim()
        )));
    }
    if (policy.t_start() - path.t_start()).abs() > tol
        || (policy.t_end() - path.t_end()).abs() > tol
    {
        return Err(Error::invalid(format!(
            "policy spans [{}, {}] but path spans [{}, {}]",
            policy.t_start(),
            policy.t_end(),
            path.t_start(),
            path.t_end()
        )));
    }
    Ok(())
}

/// Per merged step: drift and diffusion of the wealth exponent/increment.
struct WealthStep {
    /// `(pi'(mu - r 1) - pi' Sigma pi / 2) dt` — exact log-wealth drift.
    exact_drift: f64,
    /// `pi'(mu - r 1) dt` — Euler drift.
    lin_drift: f64,
    /// `||sigma' pi|| sqrt(dt)` — diffusion scale per standard normal.
    vol: f64,
}

fn wealth_steps(
    path: &ParameterPath,
    policy: &PiecewisePolicy,
    r: f64,
    steps_per_year: u32,
) -> Vec<WealthStep> {
    let d = path.dim();
    let ones = DVector::from_element(d, 1.0);
    merged_steps(
        path.t_start(),
        path.t_end(),
        steps_per_year,
        path.segments
            .iter()
            .map(|s| s.t_start)
            .chain(policy.pieces.iter().map(|p| p.t_start)),
    )
    .into_iter()
    .map(|(lo, hi)| {
        let mid = 0.5 * (lo + hi);
        let seg = path.segment_at(mid);
        let pi = policy.weights_at(mid);
        let dt = hi - lo;
        let excess = &seg.mu - &ones * r;
        let sigma_t_pi = seg.sigma.transpose() * pi;
        let quad = sigma_t_pi.norm_squared();
        WealthStep {
            exact_drift: (pi.dot(&excess) - 0.5 * quad) * dt,
            lin_drift: pi.dot(&excess) * dt,
            vol: sigma_t_pi.norm() * dt.sqrt(),
        }
    })
    .collect()
}

/// Simulates discounted wealth under piecewise-constant *fractions* `pi`.
///
/// The exact scheme applies the closed-form exponential per step, so wealth
/// stays strictly positive on every path (the admissibility requirement).
pub fn simulate_wealth_fraction(
    path: &ParameterPath,
    policy: &PiecewisePolicy,
    x0: f64,
    r: f64,
    config: &PathConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    check_alignment(path, policy)?;
    if !x0.is_finite() || x0 <= 0.0 {
        return Err(Error::domain(format!("initial wealth must be positive, got {x0}")));
    }
    if !r.is_finite() {
        return Err(Error::invalid(format!("risk-free rate {r} is not finite")));
    }
    let steps = wealth_steps(path, policy, r, config.steps_per_year);
    let scheme = config.scheme;
    Ok((0..config.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, p);
            match scheme {
                Scheme::Exact => {
                    let mut log_x = x0.ln();
                    for step in &steps {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        log_x += step.exact_drift + step.vol * z;
                    }
                    log_x.exp()
                }
                Scheme::Euler => {
                    let mut x = x0;
                    for step in &steps {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x *= 1.0 + step.lin_drift + step.vol * z;
                    }
                    x
                }
            }
        })
        .collect())
}

/// Simulates discounted wealth under piecewise-constant *cash amounts*
/// `pihat`: `dX = pihat'(mu - r 1) dt + pihat' sigma dW`. The terminal law is
/// Gaussian; the arithmetic update is already exact, so both schemes agree.
pub fn simulate_wealth_cash(
    path: &ParameterPath,
    policy: &PiecewisePolicy,
    x0: f64,
    r: f64,
    config: &PathConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    check_alignment(path, policy)?;
    if !x0.is_finite() {
        return Err(Error::domain(format!("initial wealth must be finite, got {x0}")));
    }
    if !r.is_finite() {
        return Err(Error::invalid(format!("risk-free rate {r} is not finite")));
    }
    let steps = wealth_steps(path, policy, r, config.steps_per_year);
    Ok((0..config.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, p);
            let mut x = x0;
            for step in &steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += step.lin_drift + step.vol * z;
            }
            x
        })
        .collect())
}

/// Sample mean and standard error of `u(X_T)` over the given terminal wealth
/// values. Rejects wealth outside the utility domain, naming the first
/// offending path.
pub fn estimate_expected_utility(
    terminal_wealth: &[f64],
    utility: &UtilitySpec,
    seed: u64,
) -> Result<SimEstimate> {
    if terminal_wealth.is_empty() {
        return Err(Error::invalid("no terminal wealth values supplied"));
    }
    utility.validate()?;
    if utility.requires_positive_wealth() {
        if let Some(idx) = terminal_wealth.iter().position(|&x| x <= 0.0) {
            return Err(Error::domain(format!(
                "wealth {} on path {idx} is outside the domain of {utility:?}",
                terminal_wealth[idx]
            )));
        }
    }
    let utilities: Vec<f64> = terminal_wealth
        .iter()
        .map(|&x| utility.evaluate_unchecked(x))
        .collect();
    Ok(SimEstimate::from_sample(&utilities, seed))
}
