//! Time-dependent uncertainty sets for drift and covariance.
//!
//! The market model is ambiguous: on each time cell `[t_i, t_{i+1})` the drift
//! vector lives in a compact set (a coordinate box or a Euclidean ball) and the
//! covariance matrix is any symmetric positive-definite matrix whose
//! eigenvalues lie in `[eig_min, eig_max]`. The adversary's optimum has a
//! closed form against risk-averse investors:
//!
//! * worst-case drift = Euclidean projection of `r·1` onto the drift set,
//! * worst-case covariance = `eig_max · I`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result, Violation};

/// Ordered re-evaluation instants `0 = t_0 < t_1 < ... < t_{n+1} = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    instants: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid, enforcing: length >= 2, first instant 0, strictly
    /// increasing, all finite and non-negative.
    pub fn new(instants: Vec<f64>) -> Result<Self> {
        if instants.len() < 2 {
            return Err(Error::invalid("time grid needs at least two instants"));
        }
        if instants[0] != 0.0 {
            return Err(Error::invalid(format!(
                "time grid must start at 0, got {}",
                instants[0]
            )));
        }
        for w in instants.windows(2) {
            if !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::invalid("time grid contains a non-finite instant"));
            }
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "time grid not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { instants })
    }

    /// Uniform grid with `n_cells` cells on `[0, horizon]`.
    pub fn uniform(horizon: f64, n_cells: usize) -> Result<Self> {
        if n_cells == 0 || !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::invalid("uniform grid needs n_cells >= 1 and horizon > 0"));
        }
        let instants = (0..=n_cells)
            .map(|i| horizon * i as f64 / n_cells as f64)
            .collect();
        Self::new(instants)
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn horizon(&self) -> f64 {
        *self.instants.last().unwrap()
    }

    pub fn n_cells(&self) -> usize {
        self.instants.len() - 1
    }
}

/// Compact set of admissible drift vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSet {
    /// Coordinate box `{ mu : lower_k <= mu_k <= upper_k }`.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// Euclidean ball `{ mu : ||mu - center|| <= radius }`.
    Ball { center: DVector<f64>, radius: f64 },
}

impl DriftSet {
    pub fn interval(lower: f64, upper: f64) -> Self {
        DriftSet::Box {
            lower: DVector::from_element(1, lower),
            upper: DVector::from_element(1, upper),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DriftSet::Box { lower, .. } => lower.len(),
            DriftSet::Ball { center, .. } => center.len(),
        }
    }

    /// Structural problems with the set itself, as human-readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            DriftSet::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    out.push(format!(
                        "box bounds have mismatched dimensions {} vs {}",
                        lower.len(),
                        upper.len()
                    ));
                    return out;
                }
                if lower.is_empty() {
                    out.push("box has dimension 0".into());
                }
                for k in 0..lower.len() {
                    if !lower[k].is_finite() || !upper[k].is_finite() {
                        out.push(format!("box bound {k} is not finite"));
                    } else if lower[k] > upper[k] {
                        out.push(format!(
                            "box is empty in coordinate {k}: lower {} > upper {}",
                            lower[k], upper[k]
                        ));
                    }
                }
            }
            DriftSet::Ball { center, radius } => {
                if center.is_empty() {
                    out.push("ball has dimension 0".into());
                }
                if center.iter().any(|c| !c.is_finite()) {
                    out.push("ball center is not finite".into());
                }
                if !radius.is_finite() || *radius < 0.0 {
                    out.push(format!("ball radius {radius} is not a finite non-negative number"));
                }
            }
        }
        out
    }

    /// Euclidean projection of `target` onto the set.
    pub fn project(&self, target: &DVector<f64>) -> Result<DVector<f64>> {
        if target.len() != self.dim() {
            return Err(Error::invalid(format!(
                "projection target has dimension {}, drift set has dimension {}",
                target.len(),
                self.dim()
            )));
        }
        match self {
            DriftSet::Box { lower, upper } => Ok(DVector::from_fn(lower.len(), |k, _| {
                target[k].clamp(lower[k], upper[k])
            })),
            DriftSet::Ball { center, radius } => {
                let offset = target - center;
                let dist = offset.norm();
                if dist <= *radius {
                    Ok(target.clone())
                } else {
                    Ok(center + offset * (*radius / dist))
                }
            }
        }
    }

    /// Membership test with absolute tolerance `tol`.
    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        match self {
            DriftSet::Box { lower, upper } => (0..lower.len())
                .all(|k| point[k] >= lower[k] - tol && point[k] <= upper[k] + tol),
            DriftSet::Ball { center, radius } => (point - center).norm() <= radius + tol,
        }
    }

    /// Uniform-ish sample from the set (exact for boxes, rejection-free
    /// radius scaling for balls). Used by the property tests and the
    /// saddle-scan candidate builder.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            DriftSet::Box { lower, upper } => DVector::from_fn(lower.len(), |k, _| {
                if lower[k] == upper[k] {
                    lower[k]
                } else {
                    rng.gen_range(lower[k]..=upper[k])
                }
            }),
            DriftSet::Ball { center, radius } => {
                let d = center.len();
                let dir = DVector::from_fn(d, |_, _| -> f64 {
                    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
                });
                let norm = dir.norm();
                if norm == 0.0 || *radius == 0.0 {
                    return center.clone();
                }
                // r ~ radius * U^(1/d) gives a uniform draw in the ball.
                let u: f64 = rng.gen_range(0.0..=1.0_f64);
                let r = radius * u.powf(1.0 / d as f64);
                center + dir * (r / norm)
            }
        }
    }

    /// Extreme points relevant to the minimax scans: box vertices, or the two
    /// boundary points of a ball along the direction of `toward`, plus the
    /// projection of `toward` itself.
    pub fn scan_candidates(&self, toward: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let mut out: Vec<DVector<f64>> = Vec::new();
        match self {
            DriftSet::Box { lower, upper } => {
                let d = lower.len();
                if d > 16 {
                    return Err(Error::invalid("box vertex enumeration capped at dimension 16"));
                }
                for mask in 0..(1usize << d) {
                    let v = DVector::from_fn(d, |k, _| {
                        if mask >> k & 1 == 1 { upper[k] } else { lower[k] }
                    });
                    out.push(v);
                }
            }
            DriftSet::Ball { center, radius } => {
                let offset = toward - center;
                let dist = offset.norm();
                let dir = if dist > 0.0 {
                    offset / dist
                } else {
                    let mut e = DVector::zeros(center.len());
                    e[0] = 1.0;
                    e
                };
                out.push(center + &dir * *radius);
                out.push(center - &dir * *radius);
                out.push(center.clone());
            }
        }
        out.push(self.project(toward)?);
        out.dedup_by(|a, b| (a.clone() - b.clone()).norm() == 0.0);
        Ok(out)
    }
}

/// Covariance uncertainty: all symmetric positive-definite matrices with
/// eigenvalues in `[eig_min, eig_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolSet {
    pub eig_min: f64,
    pub eig_max: f64,
}

impl VolSet {
    pub fn new(eig_min: f64, eig_max: f64) -> Self {
        Self { eig_min, eig_max }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.eig_min.is_finite() || !self.eig_max.is_finite() {
            out.push("covariance eigenvalue bounds are not finite".into());
        } else {
            if self.eig_min <= 0.0 {
                out.push(format!(
                    "covariance eigenvalue lower bound must be positive, got {}",
                    self.eig_min
                ));
            }
            if self.eig_min > self.eig_max {
                out.push(format!(
                    "covariance eigenvalue bounds are inverted: {} > {}",
                    self.eig_min, self.eig_max
                ));
            }
        }
        out
    }
}

/// One time cell with its drift and covariance uncertainty sets.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyCell {
    pub t_start: f64,
    pub t_end: f64,
    pub drift: DriftSet,
    pub vol: VolSet,
}

impl UncertaintyCell {
    pub fn new(t_start: f64, t_end: f64, drift: DriftSet, vol: VolSet) -> Self {
        Self { t_start, t_end, drift, vol }
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.t_start.is_finite() || !self.t_end.is_finite() || self.t_start >= self.t_end {
            out.push(format!(
                "cell interval [{}, {}) is not a non-empty finite interval",
                self.t_start, self.t_end
            ));
        }
        out.extend(self.drift.problems());
        out.extend(self.vol.problems());
        out
    }

    fn ensure_valid(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

/// The full family of uncertainty cells tiling `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySchedule {
    pub dim: usize,
    pub cells: Vec<UncertaintyCell>,
}

impl UncertaintySchedule {
    /// No validation happens here; diagnose with [`validate_schedule`].
    pub fn new(dim: usize, cells: Vec<UncertaintyCell>) -> Self {
        Self { dim, cells }
    }

    pub fn from_grid(grid: &TimeGrid, sets: Vec<(DriftSet, VolSet)>) -> Result<Self> {
        if sets.len() != grid.n_cells() {
            return Err(Error::invalid(format!(
                "grid has {} cells but {} set pairs were supplied",
                grid.n_cells(),
                sets.len()
            )));
        }
        let dim = sets.first().map(|(d, _)| d.dim()).unwrap_or(0);
        let instants = grid.instants();
        let cells = sets
            .into_iter()
            .enumerate()
            .map(|(i, (drift, vol))| UncertaintyCell::new(instants[i], instants[i + 1], drift, vol))
            .collect();
        Ok(Self { dim, cells })
    }

    pub fn horizon(&self) -> f64 {
        self.cells.last().map(|c| c.t_end).unwrap_or(0.0)
    }

    /// Index of the cell containing `t`. Cells are left-closed right-open;
    /// the last cell also contains the horizon itself.
    pub fn cell_index_at(&self, t: f64) -> Option<usize> {
        if self.cells.is_empty() {
            return None;
        }
        if t == self.horizon() {
            return Some(self.cells.len() - 1);
        }
        self.cells
            .iter()
            .position(|c| t >= c.t_start && t < c.t_end)
    }
}

/// Worst-case drift of a cell: the Euclidean projection of `r·1` onto the
/// drift set, i.e. the admissible drift with the smallest excess return.
pub fn worst_case_drift(cell: &UncertaintyCell, r: f64) -> Result<DVector<f64>> {
    cell.ensure_valid()?;
    if !r.is_finite() {
        return Err(Error::invalid(format!("risk-free rate {r} is not finite")));
    }
    let target = DVector::from_element(cell.dim(), r);
    cell.drift.project(&target)
}

/// Worst-case covariance of a cell: `eig_max · I`, which dominates every
/// admissible covariance in quadratic form.
pub fn worst_case_covariance(cell: &UncertaintyCell) -> Result<DMatrix<f64>> {
    cell.ensure_valid()?;
    Ok(DMatrix::identity(cell.dim(), cell.dim()) * cell.vol.eig_max)
}

/// Volatility factor `sigma* = sqrt(eig_max) · I` with
/// `sigma* sigma*^T = worst_case_covariance`.
pub fn worst_case_vol_factor(cell: &UncertaintyCell) -> Result<DMatrix<f64>> {
    cell.ensure_valid()?;
    Ok(DMatrix::identity(cell.dim(), cell.dim()) * cell.vol.eig_max.sqrt())
}

/// Checks every schedule invariant and returns one entry per broken one.
/// Empty result means the schedule is valid.
pub fn validate_schedule(schedule: &UncertaintySchedule) -> Vec<Violation> {
    let mut out = Vec::new();
    if schedule.cells.is_empty() {
        out.push(Violation::global("schedule has no cells"));
        return out;
    }
    let first = &schedule.cells[0];
    if first.t_start != 0.0 {
        out.push(Violation::cell(
            0,
            format!("first cell starts at {}, expected 0", first.t_start),
        ));
    }
    for (i, cell) in schedule.cells.iter().enumerate() {
        for p in cell.problems() {
            out.push(Violation::cell(i, p));
        }
        if cell.dim() != schedule.dim {
            out.push(Violation::cell(
                i,
                format!(
                    "cell dimension {} differs from schedule dimension {}",
                    cell.dim(),
                    schedule.dim
                ),
            ));
        }
        if i > 0 {
            let prev_end = schedule.cells[i - 1].t_end;
            if cell.t_start != prev_end {
                out.push(Violation::cell(
                    i,
                    format!(
                        "cell starts at {} but previous cell ends at {} (gap or overlap)",
                        cell.t_start, prev_end
                    ),
                ));
            }
        }
    }
    let horizon = schedule.horizon();
    if !(horizon.is_finite() && horizon > 0.0) {
        out.push(Violation::global(format!(
            "schedule horizon {horizon} is not a positive finite number"
        )));
    }
    out
}
