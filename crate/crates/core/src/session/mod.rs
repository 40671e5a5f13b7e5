//! Versioned session state shared by the agents: the active case, its
//! modification log, validated artifacts and the contingency cache.

mod artifact;
mod persist;
mod workflow;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_io::CaseSource;
use crate::contingency::{CacheBinding, ContingencyAnalysisResult, ContingencyCache};
use crate::digest::sha256_parts;
use crate::network::{apply_modification, Modification, ModificationError, PowerSystem};
use crate::opf::ACOPFSolution;
use crate::powerflow::{PowerFlowSolution, ValidationThresholds};

pub use crate::contingency::cache_key;
pub use artifact::{Artifact, ArtifactKind, ArtifactRef, Gate, Provenance, ValidationReport};
pub use persist::{default_session_path, load_session, save_session, SCHEMA_VERSION};
pub use workflow::{StepStatus, WorkflowState, WorkflowStep};

/// Digest of an empty log.
pub const GENESIS_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("no case is loaded in this session")]
    NoCase,
    #[error(transparent)]
    Modification(#[from] ModificationError),
    #[error("session file {path}: {message}")]
    Io { path: String, message: String },
    #[error("session file has schema version {found}; this build supports {supported}")]
    SchemaVersionMismatch { found: u32, supported: u32 },
    #[error("malformed session file: {0}")]
    Format(String),
    #[error("diff log does not reproduce the stored network")]
    ReplayMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub modification: Modification,
    /// Chained over the previous digest and the canonical encoding of the
    /// edit (its kind only, without timestamp or note).
    pub digest: String,
}

pub fn chain_digest(previous: &str, modification: &Modification) -> String {
    let canonical = serde_json::to_vec(&modification.kind).expect("modification encodes");
    sha256_parts(&[b"diff", previous.as_bytes(), &canonical])
}

/// Applies the log to the baseline in order.
pub fn replay(baseline: &PowerSystem, log: &[DiffEntry]) -> Result<PowerSystem, ModificationError> {
    log.iter()
        .try_fold(baseline.clone(), |net, e| apply_modification(&net, &e.modification))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveCase {
    pub source: CaseSource,
    pub baseline: PowerSystem,
    pub current: PowerSystem,
    pub diff_log: Vec<DiffEntry>,
}

impl ActiveCase {
    pub fn diff_digest(&self) -> &str {
        self.diff_log.last().map_or(GENESIS_DIGEST, |e| e.digest.as_str())
    }
}

/// Every stored artifact, oldest first. The latest of each kind for the
/// active case is the one tools consult.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArtifactStore {
    pub acopf: Vec<Artifact<ACOPFSolution>>,
    pub power_flow: Vec<Artifact<PowerFlowSolution>>,
    pub contingency: Vec<Artifact<ContingencyAnalysisResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Freshness {
    Reuse,
    Stale {
        /// No artifact of this kind exists for the active case.
        missing: bool,
        /// Modifications recorded after the artifact was computed.
        since: Vec<Modification>,
        advice: String,
    },
}

impl Freshness {
    pub fn is_reuse(&self) -> bool {
        matches!(self, Freshness::Reuse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub session_id: String,
    pub version: u64,
    pub case_name: Option<String>,
    pub diff_count: usize,
    pub freshness: BTreeMap<ArtifactKind, Freshness>,
    pub workflow: Option<WorkflowState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentContext {
    pub session_id: String,
    /// Bumped by every mutation.
    pub version: u64,
    pub case: Option<ActiveCase>,
    pub artifacts: ArtifactStore,
    pub contingency_cache: ContingencyCache,
    pub workflow: Option<WorkflowState>,
    pub thresholds: ValidationThresholds,
}

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(0);

pub fn new_session_id() -> String {
    let now = Utc::now();
    let n = SESSION_COUNTER.fetch_add(1, Ordering::Relaxed);
    let salt = sha256_parts(&[
        now.to_rfc3339().as_bytes(),
        &n.to_le_bytes(),
        &std::process::id().to_le_bytes(),
    ]);
    format!("s{}-{}", now.format("%Y%m%d%H%M%S"), &salt[..8])
}

impl AgentContext {
    pub fn new(session_id: impl Into<String>) -> Self {
        AgentContext {
            session_id: session_id.into(),
            version: 0,
            case: None,
            artifacts: ArtifactStore::default(),
            contingency_cache: ContingencyCache::new(),
            workflow: None,
            thresholds: ValidationThresholds::default(),
        }
    }

    fn bump(&mut self) -> u64 {
        self.version += 1;
        self.version
    }

    pub fn active_case(&self) -> Result<&ActiveCase, SessionError> {
        self.case.as_ref().ok_or(SessionError::NoCase)
    }

    pub fn current_network(&self) -> Option<&PowerSystem> {
        self.case.as_ref().map(|c| &c.current)
    }

    pub fn diff_len(&self) -> usize {
        self.case.as_ref().map_or(0, |c| c.diff_log.len())
    }

    /// Makes `source` the active case with an empty log. Earlier artifacts
    /// stay in the store for audit but no longer count as current.
    pub fn load_case(&mut self, source: CaseSource, baseline: PowerSystem) {
        self.case = Some(ActiveCase {
            source,
            current: baseline.clone(),
            baseline,
            diff_log: Vec::new(),
        });
        self.bump();
    }

    pub fn record_modification(&mut self, modification: Modification) -> Result<&DiffEntry, SessionError> {
        let case = self.case.as_mut().ok_or(SessionError::NoCase)?;
        let next = apply_modification(&case.current, &modification)?;
        let digest = chain_digest(case.diff_digest(), &modification);
        case.current = next;
        case.diff_log.push(DiffEntry { modification, digest });
        self.version += 1;
        Ok(self.case.as_ref().and_then(|c| c.diff_log.last()).expect("just pushed"))
    }

    pub fn verify_replay(&self) -> bool {
        match &self.case {
            None => true,
            Some(c) => replay(&c.baseline, &c.diff_log).is_ok_and(|net| net == c.current),
        }
    }

    /// Cache handle bound to the active case and log state.
    pub fn cache_binding(&self) -> Option<CacheBinding<'_>> {
        self.case.as_ref().map(|c| CacheBinding {
            cache: &self.contingency_cache,
            case_checksum: &c.source.checksum,
            diff_digest: c.diff_digest(),
        })
    }

    fn stamp<T>(&mut self, value: T, derived_from: Option<String>, provenance: Provenance, validation: ValidationReport) -> Result<Artifact<T>, SessionError> {
        let case = self.case.as_ref().ok_or(SessionError::NoCase)?;
        let (checksum, position, digest) = (case.source.checksum.clone(), case.diff_log.len(), case.diff_digest().to_string());
        Ok(Artifact {
            value,
            case_checksum: checksum,
            diff_position: position,
            diff_digest: digest,
            derived_from,
            version: self.bump(),
            stored_at: Utc::now(),
            provenance,
            validation,
        })
    }

    pub fn store_acopf(&mut self, sol: ACOPFSolution, provenance: Provenance, validation: ValidationReport) -> Result<ArtifactRef, SessionError> {
        let a = self.stamp(sol, None, provenance, validation)?;
        let r = ArtifactRef { kind: ArtifactKind::Acopf, version: a.version };
        self.artifacts.acopf.push(a);
        Ok(r)
    }

    pub fn store_power_flow(
        &mut self,
        sol: PowerFlowSolution,
        derived_from: Option<String>,
        provenance: Provenance,
        validation: ValidationReport,
    ) -> Result<ArtifactRef, SessionError> {
        let a = self.stamp(sol, derived_from, provenance, validation)?;
        let r = ArtifactRef { kind: ArtifactKind::PowerFlow, version: a.version };
        self.artifacts.power_flow.push(a);
        Ok(r)
    }

    pub fn store_contingency(
        &mut self,
        result: ContingencyAnalysisResult,
        provenance: Provenance,
        validation: ValidationReport,
    ) -> Result<ArtifactRef, SessionError> {
        let base = Some(result.base_reference.clone());
        let a = self.stamp(result, base, provenance, validation)?;
        let r = ArtifactRef { kind: ArtifactKind::Contingency, version: a.version };
        self.artifacts.contingency.push(a);
        Ok(r)
    }

    fn on_active_case<'a, T>(&self, list: &'a [Artifact<T>]) -> Option<&'a Artifact<T>> {
        let checksum = &self.case.as_ref()?.source.checksum;
        list.iter().rev().find(|a| &a.case_checksum == checksum)
    }

    pub fn latest_acopf(&self) -> Option<&Artifact<ACOPFSolution>> {
        self.on_active_case(&self.artifacts.acopf)
    }

    pub fn latest_power_flow(&self) -> Option<&Artifact<PowerFlowSolution>> {
        self.on_active_case(&self.artifacts.power_flow)
    }

    pub fn latest_contingency(&self) -> Option<&Artifact<ContingencyAnalysisResult>> {
        self.on_active_case(&self.artifacts.contingency)
    }

    fn latest_position(&self, kind: ArtifactKind) -> Option<(usize, &str)> {
        match kind {
            ArtifactKind::Acopf => self.latest_acopf().map(|a| (a.diff_position, a.diff_digest.as_str())),
            ArtifactKind::PowerFlow => self.latest_power_flow().map(|a| (a.diff_position, a.diff_digest.as_str())),
            ArtifactKind::Contingency => self.latest_contingency().map(|a| (a.diff_position, a.diff_digest.as_str())),
        }
    }

    /// Reuse when the latest artifact of `kind` was computed at the current
    /// log position; otherwise the edits made since.
    pub fn freshness_check(&self, kind: ArtifactKind) -> Freshness {
        let Some(case) = &self.case else {
            return Freshness::Stale {
                missing: true,
                since: Vec::new(),
                advice: "load a case and solve it".into(),
            };
        };
        match self.latest_position(kind) {
            Some((pos, digest)) if pos == case.diff_log.len() && digest == case.diff_digest() => Freshness::Reuse,
            Some((pos, _)) => Freshness::Stale {
                missing: false,
                since: case.diff_log[pos.min(case.diff_log.len())..]
                    .iter()
                    .map(|e| e.modification.clone())
                    .collect(),
                advice: "re-solve on the modified network".into(),
            },
            None => Freshness::Stale {
                missing: true,
                since: Vec::new(),
                advice: "no result yet; run a full solve".into(),
            },
        }
    }

    /// Records a mutation made through interior mutability, such as a
    /// cache write.
    pub fn touch(&mut self) {
        self.bump();
    }

    pub fn set_workflow(&mut self, workflow: WorkflowState) {
        self.workflow = Some(workflow);
        self.bump();
    }

    pub fn update_workflow(&mut self, f: impl FnOnce(&mut WorkflowState)) {
        if let Some(w) = self.workflow.as_mut() {
            f(w);
            self.bump();
        }
    }

    pub fn summary(&self) -> ContextSummary {
        ContextSummary {
            session_id: self.session_id.clone(),
            version: self.version,
            case_name: self.case.as_ref().map(|c| c.source.name.clone()),
            diff_count: self.diff_len(),
            freshness: [ArtifactKind::Acopf, ArtifactKind::PowerFlow, ArtifactKind::Contingency]
                .into_iter()
                .map(|k| (k, self.freshness_check(k)))
                .collect(),
            workflow: self.workflow.clone(),
        }
    }
}
