//! Run configuration: JSON schema, loading, validation, and conversion into
//! the library's plant, constraint, and option types.

use crate::CliError;
use hinf_core::delay::{CommGraph, DelayConstraint, DelayPattern};
use hinf_core::synthesis::{ModelMatchData, Plant, StructureMode, SynthesisOptions};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Generalized plant blocks, row-major. Field names mirror the usual 2x2
/// partition so configs read like the block diagram.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B1")]
    pub b1: Vec<Vec<f64>>,
    #[serde(rename = "B2")]
    pub b2: Vec<Vec<f64>>,
    #[serde(rename = "C1")]
    pub c1: Vec<Vec<f64>>,
    #[serde(rename = "C2")]
    pub c2: Vec<Vec<f64>>,
    #[serde(rename = "D11")]
    pub d11: Vec<Vec<f64>>,
    #[serde(rename = "D12")]
    pub d12: Vec<Vec<f64>>,
    #[serde(rename = "D21")]
    pub d21: Vec<Vec<f64>>,
    #[serde(rename = "D22")]
    pub d22: Vec<Vec<f64>>,
}

/// Communication structure: either an explicit all-pairs delay pattern or a
/// graph it is computed from, plus the maps assigning parameter rows and
/// columns to nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<CommGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Vec<Vec<usize>>>,
    pub u_owners: Vec<usize>,
    pub y_owners: Vec<usize>,
}

/// Optional overrides for the solver tolerances; anything omitted keeps the
/// library default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_strict: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    /// When set, the parameter acts on the exogenous input directly and the
    /// measurement loop stays open.
    #[serde(default)]
    pub full_information: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureConfig>,
    /// Subset of {"centralized", "distributed", "delayed"}.
    pub modes: Vec<String>,
    /// Fixed level to test; absent means search for the smallest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceConfig>,
    /// Seed for the randomized frequency audit of each result.
    #[serde(default)]
    pub seed: u64,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn matrix(rows: &[Vec<f64>], cols: usize, name: &str) -> Result<DMatrix<f64>, CliError> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(CliError::Config(format!(
                "{name}: row {i} has {} entries, expected {cols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl PlantConfig {
    pub fn to_plant(&self) -> Result<Plant, CliError> {
        let n = self.a.len();
        let m1 = self.b1.first().map(|r| r.len()).unwrap_or(0);
        let m2 = self.b2.first().map(|r| r.len()).unwrap_or(0);
        let plant = Plant {
            a: matrix(&self.a, n, "A")?,
            b1: matrix(&self.b1, m1, "B1")?,
            b2: matrix(&self.b2, m2, "B2")?,
            c1: matrix(&self.c1, n, "C1")?,
            c2: matrix(&self.c2, n, "C2")?,
            d11: matrix(&self.d11, m1, "D11")?,
            d12: matrix(&self.d12, m2, "D12")?,
            d21: matrix(&self.d21, m1, "D21")?,
            d22: matrix(&self.d22, m2, "D22")?,
        };
        plant
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(plant)
    }
}

impl StructureConfig {
    pub fn delay_pattern(&self) -> Result<DelayPattern, CliError> {
        match (&self.graph, &self.pattern) {
            (Some(g), None) => {
                DelayPattern::from_graph(g).map_err(|e| CliError::Config(e.to_string()))
            }
            (None, Some(p)) => {
                DelayPattern::from_matrix(p.clone()).map_err(|e| CliError::Config(e.to_string()))
            }
            (None, None) => Err(CliError::Config(
                "structure needs either a graph or an explicit pattern".into(),
            )),
            (Some(_), Some(_)) => Err(CliError::Config(
                "structure must give a graph or a pattern, not both".into(),
            )),
        }
    }

    pub fn constraint(&self) -> Result<DelayConstraint, CliError> {
        let pattern = self.delay_pattern()?;
        DelayConstraint::from_pattern(&pattern, &self.u_owners, &self.y_owners)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.modes.is_empty() {
            return Err(CliError::Config("modes must not be empty".into()));
        }
        for m in &self.modes {
            parse_mode(m)?;
        }
        Ok(())
    }

    pub fn to_plant(&self) -> Result<Plant, CliError> {
        self.plant.to_plant()
    }

    pub fn matching_data(&self) -> Result<ModelMatchData, CliError> {
        let plant = self.to_plant()?;
        let data = if self.full_information {
            plant.full_information()
        } else {
            plant.output_feedback()
        };
        data.map_err(|e| CliError::Config(e.to_string()))
    }

    /// The synthesis mode for one requested name, with the structure
    /// resolved and checked against the parameter shape.
    pub fn structure_mode(&self, name: &str) -> Result<StructureMode, CliError> {
        let kind = parse_mode(name)?;
        if kind == ModeKind::Centralized {
            return Ok(StructureMode::Centralized);
        }
        let structure = self.structure.as_ref().ok_or_else(|| {
            CliError::Config(format!("mode '{name}' needs a structure section"))
        })?;
        let constraint = structure.constraint()?;
        let data = self.matching_data()?;
        if constraint.rows() != data.q_rows() || constraint.cols() != data.q_cols() {
            return Err(CliError::Config(format!(
                "ownership maps describe a {}x{} parameter, plant wants {}x{}",
                constraint.rows(),
                constraint.cols(),
                data.q_rows(),
                data.q_cols()
            )));
        }
        Ok(match kind {
            ModeKind::Centralized => unreachable!(),
            ModeKind::Distributed => StructureMode::Distributed(constraint),
            ModeKind::Delayed => StructureMode::DelayedOnly(constraint),
        })
    }

    pub fn options(&self, gamma_override: Option<f64>) -> SynthesisOptions {
        let mut opts = SynthesisOptions {
            gamma: gamma_override.or(self.gamma),
            ..SynthesisOptions::default()
        };
        if let Some(t) = &self.tolerances {
            if let Some(v) = t.tol_gamma {
                opts.tol_gamma = v;
            }
            if let Some(v) = t.eps_strict {
                opts.eps_strict = v;
            }
            if let Some(v) = t.verify_tol {
                opts.verify_tol = v;
            }
            if let Some(v) = t.reduce_tol {
                opts.reduce_tol = v;
            }
        }
        opts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Centralized,
    Distributed,
    Delayed,
}

pub fn parse_mode(name: &str) -> Result<ModeKind, CliError> {
    match name {
        "centralized" => Ok(ModeKind::Centralized),
        "distributed" => Ok(ModeKind::Distributed),
        "delayed" | "delayed_only" => Ok(ModeKind::Delayed),
        other => Err(CliError::Config(format!(
            "unknown mode '{other}' (expected centralized, distributed, or delayed)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_structure_resolves_to_a_pattern() {
        let s: StructureConfig = serde_json::from_str(
            r#"{
                "graph": {
                    "nodes": 2,
                    "edges": [[0, 1, 1], [1, 0, 1]],
                    "u_dims": [1, 1],
                    "y_dims": [1, 1]
                },
                "u_owners": [0, 1],
                "y_owners": [0, 1]
            }"#,
        )
        .unwrap();
        let p = s.delay_pattern().unwrap();
        assert_eq!(p.get(0, 0), 0);
        assert_eq!(p.get(0, 1), 1);
        assert_eq!(p.get(1, 0), 1);
        assert_eq!(s.constraint().unwrap().horizon(), 1);
    }

    #[test]
    fn structure_needs_exactly_one_source() {
        let both: StructureConfig = serde_json::from_str(
            r#"{
                "graph": {"nodes": 1, "edges": [], "u_dims": [1], "y_dims": [1]},
                "pattern": [[0]],
                "u_owners": [0],
                "y_owners": [0]
            }"#,
        )
        .unwrap();
        assert!(both.delay_pattern().is_err());

        let neither: StructureConfig =
            serde_json::from_str(r#"{"u_owners": [0], "y_owners": [0]}"#).unwrap();
        assert!(neither.delay_pattern().is_err());
    }

    #[test]
    fn mode_names_cover_both_spellings() {
        assert_eq!(parse_mode("delayed").unwrap(), ModeKind::Delayed);
        assert_eq!(parse_mode("delayed_only").unwrap(), ModeKind::Delayed);
        assert!(parse_mode("sideways").is_err());
    }
}
