//! Report types, 17-significant-digit JSON serialization and atomic writes.
//!
//! Every report embeds the scenario, seeds and grid resolutions it was
//! produced from, so a run can be reproduced bit-identically from the report
//! alone.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use robust_merton::{MartingaleVerdict, RobustSolution};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::scenario_file::ScenarioFile;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pretty JSON with every float printed at 17 significant digits, which is
/// enough for exact `f64` round-trips.
struct SigDigitFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for SigDigitFormatter<'_> {
    fn default() -> Self {
        Self { inner: PrettyFormatter::new() }
    }
}

impl Formatter for SigDigitFormatter<'_> {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{}", format_float(value))
    }

    fn begin_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_array(writer)
    }

    fn end_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object(writer)
    }

    fn end_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_object_value(writer)
    }
}

/// 17 significant digits in scientific notation; round-trips any finite f64.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

/// Serializes a report to pretty JSON with 17-significant-digit floats,
/// trailing newline included.
pub fn to_json_string<T: Serialize>(value: &T) -> io::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter::default());
    value
        .serialize(&mut ser)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Writes atomically: temp file in the destination directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            tempfile::NamedTempFile::new_in(d)?
        }
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CellReport {
    pub cell_index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub mu_star: Vec<f64>,
    /// Worst-case covariance is `c_max · I`.
    pub c_max: f64,
    pub strategy: Vec<f64>,
    pub rate: f64,
}

impl CellReport {
    pub fn from_solution(solution: &RobustSolution) -> Vec<Self> {
        solution
            .cells
            .iter()
            .map(|c| CellReport {
                cell_index: c.cell_index,
                t_start: c.t_start,
                t_end: c.t_end,
                mu_star: c.mu_star.iter().copied().collect(),
                c_max: c.c_max,
                strategy: c.strategy.iter().copied().collect(),
                rate: c.rate,
            })
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ValuePoint {
    pub t: f64,
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub tool_version: String,
    pub scenario: ScenarioFile,
    pub cells: Vec<CellReport>,
    /// `V(0, x0)`.
    pub value_at_t0: f64,
    /// Values at any extra requested `(t, x)` points.
    pub values: Vec<ValuePoint>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SaddleCellReport {
    pub cell_index: usize,
    pub maximin: f64,
    pub minimax: f64,
    pub gap: f64,
    pub arg_pi: Vec<f64>,
    pub arg_mu: Vec<f64>,
    pub arg_sigma: Vec<Vec<f64>>,
    pub analytic_strategy: Vec<f64>,
    pub grid_lower: Vec<f64>,
    pub grid_upper: Vec<f64>,
    pub grid_points_per_dim: usize,
    pub grid_refinements: usize,
    pub final_grid_step: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HjbSuiteReport {
    pub points_per_cell: usize,
    pub max_abs_relative_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MartingaleLeg {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub reference_value: f64,
    pub verdict: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MartingaleSuiteReport {
    pub s: f64,
    pub t: f64,
    pub optimal: MartingaleLeg,
    pub perturbed: MartingaleLeg,
    pub perturbation: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ShapeSuiteReport {
    pub times: Vec<f64>,
    pub grid_points: usize,
    pub pass: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tool_version: String,
    pub scenario: ScenarioFile,
    pub seed: u64,
    pub inject_rate_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saddle: Option<Vec<SaddleCellReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hjb: Option<HjbSuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub martingale: Option<MartingaleSuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeSuiteReport>,
    pub pass: bool,
}

pub fn verdict_name(v: MartingaleVerdict) -> &'static str {
    match v {
        MartingaleVerdict::Martingale => "martingale",
        MartingaleVerdict::StrictSupermartingale => "strict_supermartingale",
        MartingaleVerdict::Violation => "violation",
    }
}
