use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Acopf,
    PowerFlow,
    Contingency,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Acopf => "acopf",
            ArtifactKind::PowerFlow => "power_flow",
            ArtifactKind::Contingency => "contingency",
        }
    }
}

/// Address of a stored artifact: its kind and the context version that
/// stored it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub kind: ArtifactKind,
    pub version: u64,
}

impl fmt::Display for ArtifactRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind.as_str(), self.version)
    }
}

/// One named check on a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    /// Measured quantity, when the gate is numeric.
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub gates: Vec<Gate>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(|g| !g.passed)
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    /// Options the solver actually ran with, after any recovery.
    pub solver_options: serde_json::Value,
    /// Recovery steps taken before the result passed, in order.
    #[serde(default)]
    pub recovery: Vec<String>,
}

impl Provenance {
    pub fn new(tool: impl Into<String>, solver_options: serde_json::Value) -> Self {
        Provenance {
            tool: tool.into(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            solver_options,
            recovery: Vec::new(),
        }
    }
}

/// An immutable result snapshot with the context it was computed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub value: T,
    pub case_checksum: String,
    /// Diff-log length when the result was computed.
    pub diff_position: usize,
    pub diff_digest: String,
    /// Checksum of the result this one was computed from, if any.
    #[serde(default)]
    pub derived_from: Option<String>,
    pub version: u64,
    pub stored_at: DateTime<Utc>,
    pub provenance: Provenance,
    pub validation: ValidationReport,
}
