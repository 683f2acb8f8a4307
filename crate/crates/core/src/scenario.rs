//! Scenario files: a single JSON document holding the exosystem, agents,
//! network, protocol and acceptance thresholds.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::Protocol;
use crate::exosystem::{Exosystem, RotationBlock};
use crate::mpc::{AgentModel, AgentSpec};
use crate::network::{validate_schedule, GraphSchedule, NetworkSpec, ScheduleReport};
use crate::numerics::Matrix;
use crate::{Error, Real, Result};

/// Name of the preset shipped with the crate.
pub const PAPER_PRESET: &str = "paper-sec5";

const PAPER_PRESET_JSON: &str = include_str!("../presets/paper-sec5.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExosystemSpec {
    /// `diag(I, blocks…)` with output map `qe`.
    Blocks {
        identity: usize,
        blocks: Vec<RotationBlock>,
        qe: Matrix<f64>,
    },
    Explicit {
        s: Matrix<f64>,
        qe: Matrix<f64>,
    },
}

impl ExosystemSpec {
    pub fn build<T: Real>(&self) -> Result<Exosystem<T>> {
        match self {
            ExosystemSpec::Blocks { identity, blocks, qe } => {
                Exosystem::from_blocks(*identity, blocks, qe.cast())
            }
            ExosystemSpec::Explicit { s, qe } => Exosystem::from_matrix(s.cast(), qe.cast()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentDecl {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub model: AgentSpec<f64>,
    pub x0: Vec<f64>,
    pub w0: Vec<f64>,
    /// Local clock offset, read only by `cp0-ti`.
    #[serde(default)]
    pub clock_offset: i64,
    /// Initial value of the broadcast counter.
    #[serde(default)]
    pub phi0: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    /// Delays on for `cp2`, `cp3` and `cp1-tau`, off otherwise.
    #[default]
    Auto,
    On,
    Off,
}

impl DelayMode {
    pub fn resolve(self, protocol: Protocol) -> bool {
        match self {
            DelayMode::Auto => protocol.nominal_delays(),
            DelayMode::On => true,
            DelayMode::Off => false,
        }
    }
}

/// Regression thresholds evaluated on the final windows of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Where the numbers come from.
    pub source: String,
    /// Bound on δ over the final window.
    pub consensus: f64,
    /// Bound on `‖y_i − Q_e w_i‖` over the final window.
    pub tracking: f64,
    /// Bound on `‖y_i(t) − y_i(t−ρ)‖` over the final window.
    pub periodicity: f64,
    pub final_window: usize,
    /// Ablations must keep δ above this over the failure window.
    pub failure_floor: f64,
    pub failure_window: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            source: "implementation-derived".into(),
            consensus: 0.05,
            tracking: 0.02,
            periodicity: 1e-2,
            final_window: 200,
            failure_floor: 0.1,
            failure_window: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub exosystem: ExosystemSpec,
    pub agents: Vec<AgentDecl>,
    pub network: NetworkSpec,
    pub protocol: Protocol,
    #[serde(default)]
    pub delays: DelayMode,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// A named preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            PAPER_PRESET => Self::from_json(PAPER_PRESET_JSON),
            _ => Err(Error::Config(format!(
                "unknown preset '{name}', available: {PAPER_PRESET}"
            ))),
        }
    }

    /// A preset name or a path to a JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if name_or_path == PAPER_PRESET {
            Self::preset(name_or_path)
        } else {
            Self::load(name_or_path)
        }
    }
}

/// Scenario with every agent model built and initial conditions checked.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub file: ScenarioFile,
    pub exo: Exosystem<T>,
    pub agents: Vec<AgentModel<T>>,
    pub schedule: GraphSchedule<T>,
    pub report: ScheduleReport,
    pub x0: Vec<Vec<T>>,
    /// Initial references after projection onto each agent's admissible set.
    pub w0: Vec<Vec<T>>,
    /// Whether projection moved the declared initial reference.
    pub w0_projected: Vec<bool>,
}

/// Distance under which a projected reference counts as unchanged.
const PROJECTION_MOVE_TOL: f64 = 1e-9;

impl<T: Real> Scenario<T> {
    /// Builds every agent (in parallel), validates the network and checks
    /// that each agent's first MPC problem is feasible.
    pub fn build(file: ScenarioFile) -> Result<Self> {
        let exo: Exosystem<T> = file.exosystem.build()?;
        if file.agents.is_empty() {
            return Err(Error::Config("scenario declares no agents".into()));
        }
        if file.network.nodes != file.agents.len() {
            return Err(Error::Config(format!(
                "network has {} nodes but the scenario declares {} agents",
                file.network.nodes,
                file.agents.len()
            )));
        }
        file.network.delays.validate()?;
        let report = validate_schedule(&file.network)?;
        if !report.pass {
            return Err(Error::Validation(format!(
                "graph schedule is not uniformly strongly connected (unreachable nodes {:?})",
                report.unreachable
            )));
        }
        let schedule = GraphSchedule::from_spec(&file.network)?;
        let agents = file
            .agents
            .par_iter()
            .map(|decl| {
                AgentModel::build(&decl.model.cast(), &exo)
                    .map_err(|e| Error::Config(format!("agent '{}': {e}", decl.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut x0 = Vec::new();
        let mut w0 = Vec::new();
        let mut w0_projected = Vec::new();
        for (decl, agent) in file.agents.iter().zip(&agents) {
            if decl.x0.len() != agent.n_x() || decl.w0.len() != exo.n_w() {
                return Err(Error::Config(format!(
                    "agent '{}': x0 has length {} (expected {}), w0 has length {} (expected {})",
                    decl.name,
                    decl.x0.len(),
                    agent.n_x(),
                    decl.w0.len(),
                    exo.n_w()
                )));
            }
            let x: Vec<T> = decl.x0.iter().map(|&v| T::lit(v)).collect();
            let w: Vec<T> = decl.w0.iter().map(|&v| T::lit(v)).collect();
            let projected = agent.sets.project_reference(&agent.t, &w)?;
            let moved = projected
                .iter()
                .zip(&w)
                .any(|(a, b)| (*a - *b).abs() > T::tol(PROJECTION_MOVE_TOL));
            agent.control_step(&x, &projected, None).map_err(|e| match e {
                Error::InitiallyInfeasible { violated } => Error::Validation(format!(
                    "agent '{}': initial MPC problem infeasible, violated rows {violated:?}",
                    decl.name
                )),
                other => other,
            })?;
            x0.push(x);
            w0.push(projected);
            w0_projected.push(moved);
        }
        Ok(Scenario {
            file,
            exo,
            agents,
            schedule,
            report,
            x0,
            w0,
            w0_projected,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_parses_and_round_trips() {
        let file = ScenarioFile::preset(PAPER_PRESET).unwrap();
        assert_eq!(file.agents.len(), 4);
        let json = file.to_json().unwrap();
        let again = ScenarioFile::from_json(&json).unwrap();
        assert_eq!(again.to_json().unwrap(), json);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(matches!(ScenarioFile::preset("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn delay_mode_resolution() {
        assert!(DelayMode::Auto.resolve(Protocol::Cp3));
        assert!(!DelayMode::Auto.resolve(Protocol::Cp1));
        assert!(DelayMode::On.resolve(Protocol::Cp1));
        assert!(!DelayMode::Off.resolve(Protocol::Cp2));
    }
}
