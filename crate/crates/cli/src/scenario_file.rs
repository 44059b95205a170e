//! Versioned JSON schema for scenario files and custom parameter paths.
//!
//! Unknown fields are rejected everywhere so that a typo'd scenario fails
//! loudly instead of silently meaning something else.

use robust_merton::nalgebra::{DMatrix, DVector};
use robust_merton::{
    DriftSet, ParameterPath, PathSegment, Scenario, UncertaintyCell, UncertaintySchedule,
    UtilitySpec, Violation, VolSet,
};
use serde::{Deserialize, Serialize};

pub const SCENARIO_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: String,
    pub d: usize,
    pub r: f64,
    pub x0: f64,
    pub utility: UtilityFile,
    pub cells: Vec<CellFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UtilityFile {
    Log,
    Power { gamma: f64 },
    Exponential { beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellFile {
    pub t_start: f64,
    pub t_end: f64,
    pub drift: DriftFile,
    pub vol: VolFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DriftFile {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolFile {
    pub eig_min: f64,
    pub eig_max: f64,
}

impl ScenarioFile {
    /// Structural conversion; semantic validation is the core library's job.
    /// The only check here is the schema version.
    pub fn to_scenario(&self) -> Result<Scenario, Vec<Violation>> {
        if self.version != SCENARIO_VERSION {
            return Err(vec![Violation::global(format!(
                "unsupported scenario version {:?}, expected {:?}",
                self.version, SCENARIO_VERSION
            ))]);
        }
        let cells = self
            .cells
            .iter()
            .map(|c| {
                let drift = match &c.drift {
                    DriftFile::Box { lower, upper } => DriftSet::Box {
                        lower: DVector::from_vec(lower.clone()),
                        upper: DVector::from_vec(upper.clone()),
                    },
                    DriftFile::Ball { center, radius } => DriftSet::Ball {
                        center: DVector::from_vec(center.clone()),
                        radius: *radius,
                    },
                };
                UncertaintyCell::new(
                    c.t_start,
                    c.t_end,
                    drift,
                    VolSet::new(c.vol.eig_min, c.vol.eig_max),
                )
            })
            .collect();
        Ok(Scenario {
            r: self.r,
            x0: self.x0,
            utility: match self.utility {
                UtilityFile::Log => UtilitySpec::Log,
                UtilityFile::Power { gamma } => UtilitySpec::Power { gamma },
                UtilityFile::Exponential { beta } => UtilitySpec::Exponential { beta },
            },
            schedule: UncertaintySchedule::new(self.d, cells),
        })
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self {
            version: SCENARIO_VERSION.to_string(),
            d: scenario.dim(),
            r: scenario.r,
            x0: scenario.x0,
            utility: match scenario.utility {
                UtilitySpec::Log => UtilityFile::Log,
                UtilitySpec::Power { gamma } => UtilityFile::Power { gamma },
                UtilitySpec::Exponential { beta } => UtilityFile::Exponential { beta },
            },
            cells: scenario
                .schedule
                .cells
                .iter()
                .map(|c| CellFile {
                    t_start: c.t_start,
                    t_end: c.t_end,
                    drift: match &c.drift {
                        DriftSet::Box { lower, upper } => DriftFile::Box {
                            lower: lower.iter().copied().collect(),
                            upper: upper.iter().copied().collect(),
                        },
                        DriftSet::Ball { center, radius } => DriftFile::Ball {
                            center: center.iter().copied().collect(),
                            radius: *radius,
                        },
                    },
                    vol: VolFile { eig_min: c.vol.eig_min, eig_max: c.vol.eig_max },
                })
                .collect(),
        }
    }
}

/// Custom parameter-path file for `simulate --theta <file>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterPathFile {
    pub segments: Vec<SegmentFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub t_start: f64,
    pub t_end: f64,
    pub mu: Vec<f64>,
    /// Row-major d x d volatility factor.
    pub sigma: Vec<Vec<f64>>,
}

impl ParameterPathFile {
    pub fn to_path(&self) -> Result<ParameterPath, String> {
        let segments = self
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let d = s.mu.len();
                if s.sigma.len() != d || s.sigma.iter().any(|row| row.len() != d) {
                    return Err(format!("segment {i}: sigma must be {d}x{d}"));
                }
                let flat: Vec<f64> = s.sigma.iter().flatten().copied().collect();
                Ok(PathSegment {
                    t_start: s.t_start,
                    t_end: s.t_end,
                    mu: DVector::from_vec(s.mu.clone()),
                    sigma: DMatrix::from_row_slice(d, d, &flat),
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        ParameterPath::new(segments).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"version":"1","d":1,"r":0.0,"x0":1.0,"surprise":2,
            "utility":{"kind":"log"},"cells":[]}"#;
        assert!(serde_json::from_str::<ScenarioFile>(json).is_err());
    }

    #[test]
    fn wrong_version_is_a_violation() {
        let json = r#"{"version":"2","d":1,"r":0.0,"x0":1.0,
            "utility":{"kind":"log"},"cells":[]}"#;
        let file: ScenarioFile = serde_json::from_str(json).unwrap();
        assert!(file.to_scenario().is_err());
    }

    #[test]
    fn utility_variants_parse() {
        for (json, expected) in [
            (r#"{"kind":"log"}"#, UtilityFile::Log),
            (r#"{"kind":"power","gamma":0.5}"#, UtilityFile::Power { gamma: 0.5 }),
            (
                r#"{"kind":"exponential","beta":2.0}"#,
                UtilityFile::Exponential { beta: 2.0 },
            ),
        ] {
            assert_eq!(serde_json::from_str::<UtilityFile>(json).unwrap(), expected);
        }
    }

    #[test]
    fn parse_serialize_parse_is_identity() {
        let json = r#"{
            "version": "1", "d": 2, "r": 0.015, "x0": 1.25,
            "utility": {"kind": "power", "gamma": 0.35},
            "cells": [
                {"t_start": 0.0, "t_end": 0.4,
                 "drift": {"kind": "box", "lower": [0.02, -0.01], "upper": [0.08, 0.03]},
                 "vol": {"eig_min": 0.02, "eig_max": 0.09}},
                {"t_start": 0.4, "t_end": 1.0,
                 "drift": {"kind": "ball", "center": [0.05, 0.05], "radius": 0.015},
                 "vol": {"eig_min": 0.01, "eig_max": 0.04}}
            ]
        }"#;
        let parsed: ScenarioFile = serde_json::from_str(json).unwrap();
        let scenario = parsed.to_scenario().unwrap();
        let serialized = serde_json::to_string(&ScenarioFile::from_scenario(&scenario)).unwrap();
        let reparsed: ScenarioFile = serde_json::from_str(&serialized).unwrap();
        assert_eq!(parsed, reparsed);
        // And the core-level scenarios agree field by field.
        let second = reparsed.to_scenario().unwrap();
        assert_eq!(scenario.r, second.r);
        assert_eq!(scenario.x0, second.x0);
        assert_eq!(scenario.utility, second.utility);
        assert_eq!(scenario.schedule, second.schedule);
    }

    #[test]
    fn path_file_validates_sigma_shape() {
        let file = ParameterPathFile {
            segments: vec![SegmentFile {
                t_start: 0.0,
                t_end: 1.0,
                mu: vec![0.05, 0.02],
                sigma: vec![vec![0.3, 0.0]],
            }],
        };
        assert!(file.to_path().is_err());
    }
}
