//! Closed-form robust-optimal strategies and value functions.
//!
//! Backward induction over the uncertainty cells reduces to one saddle point
//! per cell. With worst-case drift `mu*` (projection of `r·1` onto the drift
//! set), worst-case covariance `C · I` and excess return `e = mu* - r·1`:
//!
//! | utility            | strategy                  | per-cell rate kappa           |
//! |--------------------|---------------------------|-------------------------------|
//! | log(x)             | pi* = e / C               | ||e||^2 / (2C)                |
//! | x^gamma            | pi* = e / (C (1-gamma))   | gamma ||e||^2 / (2(1-gamma)C) |
//! | -beta e^(-beta x)  | cash pihat* = e / (C beta)| ||e||^2 / (2C)                |
//!
//! The value function is piecewise `C^{1,2}`, glued at the cell boundaries:
//! with `R(t) = sum_i kappa_i * |cell_i ∩ [t, T]|`,
//!
//! * log:   `V(t,x) = log(x) + R(t)`
//! * power: `V(t,x) = x^gamma * exp(R(t))`
//! * exp:   `V(t,x) = -beta e^(-beta x) * exp(-R(t))`

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Violation};
use crate::uncertainty::{
    validate_schedule, worst_case_covariance, worst_case_drift, TimeGrid, UncertaintySchedule,
    VolSet,
};
use crate::utility::UtilitySpec;

/// A complete problem statement: market, investor and uncertainty sets.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Risk-free rate per year.
    pub r: f64,
    /// Initial wealth, strictly positive.
    pub x0: f64,
    pub utility: UtilitySpec,
    pub schedule: UncertaintySchedule,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.schedule.dim
    }

    pub fn horizon(&self) -> f64 {
        self.schedule.horizon()
    }

    /// All broken invariants; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = validate_schedule(&self.schedule);
        if !self.x0.is_finite() || self.x0 <= 0.0 {
            out.push(Violation::global(format!(
                "initial wealth must be positive and finite, got {}",
                self.x0
            )));
        }
        if !self.r.is_finite() {
            out.push(Violation::global(format!("risk-free rate {} is not finite", self.r)));
        }
        if let Err(e) = self.utility.validate() {
            out.push(Violation::global(e.to_string()));
        }
        out
    }
}

/// Saddle point and growth rate for one uncertainty cell.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub cell_index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Worst-case drift.
    pub mu_star: DVector<f64>,
    /// Worst-case covariance `c_max · I`.
    pub sigma_star: DMatrix<f64>,
    /// The scalar eigenvalue bound behind `sigma_star`.
    pub c_max: f64,
    /// Optimal wealth fraction (Log/Power) or cash amount (Exponential).
    pub strategy: DVector<f64>,
    /// Value growth rate per year on this cell; non-negative.
    pub rate: f64,
}

impl CellSolution {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Output of [`solve`]: per-cell saddle points plus the glued value function.
#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub scenario: Scenario,
    pub cells: Vec<CellSolution>,
}

/// Solves the robust utility maximization problem cell by cell.
pub fn solve(scenario: &Scenario) -> Result<RobustSolution> {
    let violations = scenario.validate();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let r = scenario.r;
    let ones = DVector::from_element(scenario.dim(), 1.0);
    let mut cells = Vec::with_capacity(scenario.schedule.cells.len());
    for (i, cell) in scenario.schedule.cells.iter().enumerate() {
        let mu_star = worst_case_drift(cell, r)?;
        let sigma_star = worst_case_covariance(cell)?;
        let c_max = cell.vol.eig_max;
        let excess = &mu_star - &ones * r;
        let excess_sq = excess.norm_squared();
        let (strategy, rate) = match scenario.utility {
            UtilitySpec::Log => (&excess / c_max, excess_sq / (2.0 * c_max)),
            UtilitySpec::Power { gamma } => (
                &excess / (c_max * (1.0 - gamma)),
                gamma * excess_sq / (2.0 * (1.0 - gamma) * c_max),
            ),
            UtilitySpec::Exponential { beta } => {
                (&excess / (c_max * beta), excess_sq / (2.0 * c_max))
            }
        };
        cells.push(CellSolution {
            cell_index: i,
            t_start: cell.t_start,
            t_end: cell.t_end,
            mu_star,
            sigma_star,
            c_max,
            strategy,
            rate,
        });
    }
    Ok(RobustSolution { scenario: scenario.clone(), cells })
}

impl RobustSolution {
    pub fn utility(&self) -> &UtilitySpec {
        &self.scenario.utility
    }

    pub fn horizon(&self) -> f64 {
        self.scenario.horizon()
    }

    /// Remaining value growth `R(t) = sum_i rate_i * |cell_i ∩ [t, T]|`.
    pub fn remaining_rate(&self, t: f64) -> f64 {
        self.cells
            .iter()
            .map(|c| c.rate * (c.t_end - c.t_start.max(t)).max(0.0))
            .sum()
    }

    /// The value function `V(t, x)`.
    ///
    /// `t` must lie in `[0, T]` and `x` must be strictly positive.
    /// At `t = T` this returns `u(x)` exactly.
    pub fn value_at(&self, t: f64, x: f64) -> Result<f64> {
        self.check_time(t)?;
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::domain(format!("wealth must be positive, got {x}")));
        }
        Ok(self.value_unchecked(t, x))
    }

    /// Value function without the wealth-domain guard. Exponential utility is
    /// defined for all real wealth; Monte Carlo estimates of `E[v(t, X_t)]`
    /// under cash strategies need this on rare negative-wealth paths.
    pub(crate) fn value_unchecked(&self, t: f64, x: f64) -> f64 {
        let remaining = self.remaining_rate(t);
        match *self.utility() {
            UtilitySpec::Log => x.ln() + remaining,
            UtilitySpec::Power { gamma } => x.powf(gamma) * remaining.exp(),
            UtilitySpec::Exponential { beta } => -beta * (-beta * x).exp() * (-remaining).exp(),
        }
    }

    /// Cash invested in each risky asset at `(t, x)`: `x · pi*` for
    /// Log/Power, the wealth-independent `pihat*` for Exponential.
    ///
    /// Cell membership is left-closed right-open; the last cell also owns the
    /// horizon itself.
    pub fn strategy_at(&self, t: f64, x: f64) -> Result<DVector<f64>> {
        self.check_time(t)?;
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::domain(format!("wealth must be positive, got {x}")));
        }
        let idx = self
            .scenario
            .schedule
            .cell_index_at(t)
            .ok_or_else(|| Error::domain(format!("no cell contains t = {t}")))?;
        let cell = &self.cells[idx];
        if self.utility().is_cash_strategy() {
            Ok(cell.strategy.clone())
        } else {
            Ok(&cell.strategy * x)
        }
    }

    /// Copy of the solution with every per-cell rate multiplied by `scale`.
    /// A deliberately corrupted value function for testing the power of the
    /// PDE-residual check; `scale = 1` is the identity.
    pub fn with_rate_scale(&self, scale: f64) -> RobustSolution {
        let mut out = self.clone();
        for c in &mut out.cells {
            c.rate *= scale;
        }
        out
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < 0.0 || t > self.horizon() {
            return Err(Error::domain(format!(
                "time {t} outside the horizon [0, {}]",
                self.horizon()
            )));
        }
        Ok(())
    }
}

/// Time-continuous worst-case profile `t -> (mu*(t), C(t))`, the mesh->0
/// limit of a schedule. `breakpoints` lists interior discontinuities so the
/// quadrature can integrate each smooth piece separately.
pub struct ContinuousProfile {
    pub mu_star: Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
    pub c_max: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub breakpoints: Vec<f64>,
}

impl ContinuousProfile {
    pub fn new(
        mu_star: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        c_max: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { mu_star: Box::new(mu_star), c_max: Box::new(c_max), breakpoints: Vec::new() }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    /// Piecewise-constant profile matching a solved schedule: `mu*(t)` and
    /// `C(t)` of the cell containing `t`, with cell boundaries as breakpoints.
    pub fn from_solution(solution: &RobustSolution) -> Self {
        fn find(starts: &[f64], t: f64) -> usize {
            match starts.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
                Ok(i) => i,
                Err(0) => 0,
                Err(i) => i - 1,
            }
        }
        let starts: Vec<f64> = solution.cells.iter().map(|c| c.t_start).collect();
        let mus: Vec<DVector<f64>> = solution.cells.iter().map(|c| c.mu_star.clone()).collect();
        let cs: Vec<f64> = solution.cells.iter().map(|c| c.c_max).collect();
        let breakpoints = starts[1..].to_vec();
        let starts_mu = starts.clone();
        Self {
            mu_star: Box::new(move |t| mus[find(&starts_mu, t)].clone()),
            c_max: Box::new(move |t| cs[find(&starts, t)]),
            breakpoints,
        }
    }
}

/// A continuous-time scenario: like [`Scenario`] but with the uncertainty
/// summarized by its worst-case profile instead of discrete cells.
pub struct ContinuousScenario {
    pub r: f64,
    pub x0: f64,
    pub utility: UtilitySpec,
    pub horizon: f64,
    pub profile: ContinuousProfile,
}

impl ContinuousScenario {
    /// The instantaneous value growth rate at time `s`.
    fn rate(&self, s: f64) -> f64 {
        let mu = (self.profile.mu_star)(s);
        let c = (self.profile.c_max)(s);
        let ones = DVector::from_element(mu.len(), 1.0);
        let excess = mu - ones * self.r;
        let base = excess.norm_squared() / (2.0 * c);
        match self.utility {
            UtilitySpec::Power { gamma } => gamma / (1.0 - gamma) * base,
            _ => base,
        }
    }
}

/// Value plus an a-posteriori quadrature error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureValue {
    pub value: f64,
    pub error_bound: f64,
}

const MIN_QUADRATURE_PANELS: usize = 1000;

/// Composite Simpson integral of `f` over `[a, b]` with `panels` even
/// subintervals. The endpoint nodes are nudged inward by a relative 1e-9 so
/// that a piecewise integrand evaluated exactly on a discontinuity takes the
/// one-sided value belonging to this piece; the perturbation of a smooth
/// integrand is far below the quadrature error.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    debug_assert!(panels >= 2 && panels.is_multiple_of(2));
    let h = (b - a) / panels as f64;
    let eps = 1e-9 * (b - a);
    let mut acc = f(a + eps) + f(b - eps);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Integrates `f` over `[a, b]`, splitting at the supplied interior
/// breakpoints; returns the integral and a Richardson error estimate.
fn integrate_piecewise<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    min_total_panels: usize,
) -> Result<QuadratureValue> {
    if b <= a {
        return Ok(QuadratureValue { value: 0.0, error_bound: 0.0 });
    }
    let mut edges = vec![a];
    let mut sorted: Vec<f64> = breakpoints.iter().copied().filter(|&t| t > a && t < b).collect();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sorted.dedup();
    edges.extend(sorted);
    edges.push(b);

    let total_len = b - a;
    let mut value = 0.0;
    let mut error_bound = 0.0;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let share = ((hi - lo) / total_len * min_total_panels as f64).ceil() as usize;
        let panels = share.max(8).next_multiple_of(4);
        let fine = simpson(f, lo, hi, panels);
        let coarse = simpson(f, lo, hi, panels / 2);
        if !fine.is_finite() {
            return Err(Error::domain(format!(
                "non-finite integrand on [{lo}, {hi}]"
            )));
        }
        value += fine;
        // Richardson: Simpson error shrinks 16x per halving.
        error_bound += (fine - coarse).abs() / 15.0;
    }
    Ok(QuadratureValue { value, error_bound })
}

/// Value function of the continuous-limit problem at `(t, x)`:
/// `R(t) = ∫_t^T ||mu*(s) - r·1||^2 / (2 C(s)) ds` (scaled by
/// `gamma/(1-gamma)` for Power), evaluated by composite Simpson quadrature
/// with at least 1000 panels.
pub fn continuous_limit_value(
    scenario: &ContinuousScenario,
    t: f64,
    x: f64,
) -> Result<QuadratureValue> {
    scenario.utility.validate()?;
    if !t.is_finite() || t < 0.0 || t > scenario.horizon {
        return Err(Error::domain(format!(
            "time {t} outside the horizon [0, {}]",
            scenario.horizon
        )));
    }
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::domain(format!("wealth must be positive, got {x}")));
    }
    let rate = |s: f64| scenario.rate(s);
    let quad = integrate_piecewise(
        &rate,
        t,
        scenario.horizon,
        &scenario.profile.breakpoints,
        MIN_QUADRATURE_PANELS,
    )?;
    let remaining = quad.value;
    let (value, derivative_mag) = match scenario.utility {
        UtilitySpec::Log => (x.ln() + remaining, 1.0),
        UtilitySpec::Power { gamma } => {
            let v = x.powf(gamma) * remaining.exp();
            (v, v.abs())
        }
        UtilitySpec::Exponential { beta } => {
            let v = -beta * (-beta * x).exp() * (-remaining).exp();
            (v, v.abs())
        }
    };
    if !value.is_finite() {
        return Err(Error::domain("continuous-limit value is not finite"));
    }
    Ok(QuadratureValue {
        value,
        // First-order propagation of the R(t) bound through the outer map.
        error_bound: quad.error_bound * derivative_mag,
    })
}

/// One entry of a mesh-refinement study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshValue {
    pub n_cells: usize,
    pub mesh: f64,
    pub value: f64,
}

/// Values `V_n(0, x0)` for uniform schedules with `n = 2^j` cells,
/// `j = 0..=refinements`, sampling the profile at cell left endpoints.
/// Converges first-order in the mesh to [`continuous_limit_value`].
pub fn mesh_refinement_series(
    scenario: &ContinuousScenario,
    refinements: usize,
) -> Result<Vec<MeshValue>> {
    let mut out = Vec::with_capacity(refinements + 1);
    for j in 0..=refinements {
        let n = 1usize << j;
        let grid = TimeGrid::uniform(scenario.horizon, n)?;
        let sets = grid.instants()[..n]
            .iter()
            .map(|&t_left| {
                let mu = (scenario.profile.mu_star)(t_left);
                let c = (scenario.profile.c_max)(t_left);
                (
                    crate::uncertainty::DriftSet::Ball { center: mu, radius: 0.0 },
                    VolSet::new(c, c),
                )
            })
            .collect();
        let schedule = UncertaintySchedule::from_grid(&grid, sets)?;
        let piecewise = Scenario {
            r: scenario.r,
            x0: scenario.x0,
            utility: scenario.utility,
            schedule,
        };
        let solution = solve(&piecewise)?;
        out.push(MeshValue {
            n_cells: n,
            mesh: scenario.horizon / n as f64,
            value: solution.value_at(0.0, scenario.x0)?,
        });
    }
    Ok(out)
}

/// Canonical single-cell test fixture: `d = 1`, `r = 0`, drift box
/// `[0.05, 0.10]`, eigenvalue interval `[0.04, 0.09]`, horizon 1, `x0 = 1`.
#[cfg(test)]
pub(crate) fn canonical_scenario(utility: UtilitySpec) -> Scenario {
    Scenario {
        r: 0.0,
        x0: 1.0,
        utility,
        schedule: UncertaintySchedule::new(
            1,
            vec![crate::uncertainty::UncertaintyCell::new(
                0.0,
                1.0,
                crate::uncertainty::DriftSet::interval(0.05, 0.10),
                VolSet::new(0.04, 0.09),
            )],
        ),
    }
}
