//! Domain types shared by every other module.
//!
//! Everything here is plain data: construction, validation and canonical
//! JSON encoding. Option indices are 0-based throughout; letters `A..J`
//! only appear at the prompt and parsing boundary (see [`option_letter`]).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Maximum number of options an instance may carry (letters `A..J`).
pub const MAX_OPTIONS: usize = 10;
pub const MIN_OPTIONS: usize = 2;

/// Roster sizes the framework knows how to run. Size 1 exists for ablations.
pub const ROSTER_SIZES: [usize; 4] = [1, 3, 6, 10];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("invalid task instance {id:?}: {reason}")]
    InvalidInstance { id: String, reason: String },
    #[error("invalid roster: {}", join_violations(.0))]
    InvalidRoster(Vec<Violation>),
    #[error("unknown {kind} {value:?}")]
    UnknownTag { kind: &'static str, value: String },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// The expert group (EG) a roster simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExpertGroup {
    #[serde(alias = "math")]
    Math,
    #[serde(alias = "finance", alias = "Fina", alias = "fina")]
    Finance,
    #[serde(alias = "medical", alias = "Med", alias = "med")]
    Medical,
    #[serde(alias = "law")]
    Law,
}

impl ExpertGroup {
    pub const ALL: [ExpertGroup; 4] = [Self::Math, Self::Finance, Self::Medical, Self::Law];

    /// Name substituted for `{domain}` / `{Domain}` in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Math => "Math",
            Self::Finance => "Finance",
            Self::Medical => "Medical",
            Self::Law => "Law",
        }
    }

    /// Lowercase slug used in role file names and CLI flags.
    pub fn slug(self) -> &'static str {
        match self {
            Self::Math => "math",
            Self::Finance => "finance",
            Self::Medical => "medical",
            Self::Law => "law",
        }
    }

    /// Parses a slug, display name, or one of the abbreviated table labels.
    pub fn parse(s: &str) -> Result<Self, TypeError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "math" | "mathematics" => Ok(Self::Math),
            "finance" | "fina" => Ok(Self::Finance),
            "medical" | "med" | "medicine" => Ok(Self::Medical),
            "law" | "legal" => Ok(Self::Law),
            _ => Err(TypeError::UnknownTag {
                kind: "expert group",
                value: s.to_string(),
            }),
        }
    }

    /// The task domain this group is considered aligned with.
    pub fn aligned_domain(self) -> TaskDomain {
        match self {
            Self::Math => TaskDomain::Math,
            Self::Finance => TaskDomain::Business,
            Self::Medical => TaskDomain::Health,
            Self::Law => TaskDomain::Law,
        }
    }
}

impl fmt::Display for ExpertGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Collaboration paradigm of a roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(alias = "diversity", alias = "diversity-driven")]
    DiversityDriven,
    #[serde(alias = "workflow", alias = "structured-workflow")]
    StructuredWorkflow,
}

impl Paradigm {
    pub const ALL: [Paradigm; 2] = [Self::DiversityDriven, Self::StructuredWorkflow];

    pub fn slug(self) -> &'static str {
        match self {
            Self::DiversityDriven => "diversity",
            Self::StructuredWorkflow => "workflow",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TypeError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diversity" | "diversity-driven" | "diversitydriven" => Ok(Self::DiversityDriven),
            "workflow" | "structured-workflow" | "structuredworkflow" => {
                Ok(Self::StructuredWorkflow)
            }
            _ => Err(TypeError::UnknownTag {
                kind: "paradigm",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Task domain of a dataset instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskDomain {
    #[serde(alias = "math")]
    Math,
    #[serde(alias = "business")]
    Business,
    #[serde(alias = "health")]
    Health,
    #[serde(alias = "law")]
    Law,
}

impl TaskDomain {
    pub const ALL: [TaskDomain; 4] = [Self::Math, Self::Business, Self::Health, Self::Law];

    pub fn name(self) -> &'static str {
        match self {
            Self::Math => "Math",
            Self::Business => "Business",
            Self::Health => "Health",
            Self::Law => "Law",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TypeError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "math" => Ok(Self::Math),
            "business" => Ok(Self::Business),
            "health" => Ok(Self::Health),
            "law" => Ok(Self::Law),
            _ => Err(TypeError::UnknownTag {
                kind: "task domain",
                value: s.to_string(),
            }),
        }
    }

    pub fn reasoning_type(self) -> ReasoningType {
        match self {
            Self::Math | Self::Business => ReasoningType::Mathematical,
            Self::Health | Self::Law => ReasoningType::Contextual,
        }
    }

    /// Default expert group aligned with this domain.
    pub fn aligned_group(self) -> ExpertGroup {
        match self {
            Self::Math => ExpertGroup::Math,
            Self::Business => ExpertGroup::Finance,
            Self::Health => ExpertGroup::Medical,
            Self::Law => ExpertGroup::Law,
        }
    }
}

impl fmt::Display for TaskDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReasoningType {
    Mathematical,
    /// Not produced by any current domain; kept for future datasets.
    FactualRecall,
    Contextual,
}

/// Letter shown for a 0-based option index.
pub fn option_letter(index: usize) -> char {
    assert!(index < MAX_OPTIONS, "option index {index} out of range");
    (b'A' + index as u8) as char
}

/// 0-based index for an option letter, case-insensitive.
pub fn letter_index(letter: char) -> Option<usize> {
    let up = letter.to_ascii_uppercase();
    if ('A'..='J').contains(&up) {
        Some((up as u8 - b'A') as usize)
    } else {
        None
    }
}

/// One agent's identity: expert group, formal role, responsibility and index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub expert_group: ExpertGroup,
    pub formal_role: String,
    pub responsibility: String,
    pub index: u32,
    pub paradigm: Paradigm,
}

/// An ordered set of experts forming one multi-agent system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRoster {
    pub domain_tag: ExpertGroup,
    pub paradigm: Paradigm,
    pub size: usize,
    pub experts: Vec<ExpertSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    LengthMismatch { declared: usize, actual: usize },
    UnsupportedSize(usize),
    EmptyFormalRole { position: usize },
    EmptyResponsibility { position: usize },
    DuplicateRoleIndex { formal_role: String, index: u32 },
    ParadigmMismatch { position: usize },
    GroupMismatch { position: usize },
    RequiredRoleAbsent(String),
    UnexpectedRole(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LengthMismatch { declared, actual } => {
                write!(f, "length mismatch: size {declared} but {actual} experts")
            }
            Self::UnsupportedSize(n) => write!(f, "unsupported roster size {n}"),
            Self::EmptyFormalRole { position } => write!(f, "expert {position}: empty formal_role"),
            Self::EmptyResponsibility { position } => {
                write!(f, "expert {position}: empty responsibility")
            }
            Self::DuplicateRoleIndex { formal_role, index } => {
                write!(
                    f,
                    "duplicate (formal_role, index) pair ({formal_role:?}, {index})"
                )
            }
            Self::ParadigmMismatch { position } => {
                write!(f, "expert {position}: paradigm differs from roster")
            }
            Self::GroupMismatch { position } => {
                write!(f, "expert {position}: expert group differs from roster")
            }
            Self::RequiredRoleAbsent(r) => write!(f, "required role absent: {r}"),
            Self::UnexpectedRole(r) => write!(f, "unexpected role in structured workflow: {r}"),
        }
    }
}

const WORKFLOW_ROLES: [&str; 3] = ["solver", "critic", "coordinator"];

/// Collects every invariant violation of `roster`. An empty list means valid.
pub fn validate_roster(roster: &AgentRoster) -> Vec<Violation> {
    let mut out = Vec::new();
    if roster.size != roster.experts.len() {
        out.push(Violation::LengthMismatch {
            declared: roster.size,
            actual: roster.experts.len(),
        });
    }
    if !ROSTER_SIZES.contains(&roster.size) {
        out.push(Violation::UnsupportedSize(roster.size));
    }
    let mut seen = HashSet::new();
    for (pos, e) in roster.experts.iter().enumerate() {
        if e.formal_role.trim().is_empty() {
            out.push(Violation::EmptyFormalRole { position: pos });
        }
        if e.responsibility.trim().is_empty() {
            out.push(Violation::EmptyResponsibility { position: pos });
        }
        if !seen.insert((e.formal_role.clone(), e.index)) {
            out.push(Violation::DuplicateRoleIndex {
                formal_role: e.formal_role.clone(),
                index: e.index,
            });
        }
        if e.paradigm != roster.paradigm {
            out.push(Violation::ParadigmMismatch { position: pos });
        }
        if e.expert_group != roster.domain_tag {
            out.push(Violation::GroupMismatch { position: pos });
        }
    }
    if roster.paradigm == Paradigm::StructuredWorkflow && roster.experts.len() == 3 {
        let roles: Vec<String> = roster
            .experts
            .iter()
            .map(|e| e.formal_role.trim().to_lowercase())
            .collect();
        for required in WORKFLOW_ROLES {
            if !roles.iter().any(|r| r == required) {
                out.push(Violation::RequiredRoleAbsent(required.to_string()));
            }
        }
        for r in &roles {
            if !WORKFLOW_ROLES.contains(&r.as_str()) {
                out.push(Violation::UnexpectedRole(r.clone()));
            }
        }
    }
    out
}

impl AgentRoster {
    /// Builds a roster and rejects it unless every invariant holds.
    pub fn new(
        group: ExpertGroup,
        paradigm: Paradigm,
        experts: Vec<ExpertSpec>,
    ) -> Result<Self, TypeError> {
        let roster = Self {
            domain_tag: group,
            paradigm,
            size: experts.len(),
            experts,
        };
        roster.validated()
    }

    pub fn validated(self) -> Result<Self, TypeError> {
        let v = validate_roster(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(TypeError::InvalidRoster(v))
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        fingerprint_of(self)
    }
}

/// Hex SHA-256 of the canonical (declaration-ordered, compact) JSON of `value`.
pub fn fingerprint_of<T: Serialize>(value: &T) -> String {
    let bytes = canonical_json(value);
    hex::encode(Sha256::digest(&bytes))
}

/// Compact JSON with keys in struct declaration order.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("domain types always serialize")
}

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct TaskInstance {
    pub instance_id: String,
    pub domain: TaskDomain,
    pub question: String,
    pub options: Vec<String>,
    pub gold_index: usize,
}

#[derive(Deserialize)]
struct RawInstance {
    instance_id: String,
    domain: TaskDomain,
    question: String,
    options: Vec<String>,
    gold_index: usize,
}

impl TryFrom<RawInstance> for TaskInstance {
    type Error = TypeError;

    fn try_from(r: RawInstance) -> Result<Self, Self::Error> {
        TaskInstance::new(r.instance_id, r.domain, r.question, r.options, r.gold_index)
    }
}

impl TaskInstance {
    pub fn new(
        instance_id: impl Into<String>,
        domain: TaskDomain,
        question: impl Into<String>,
        options: Vec<String>,
        gold_index: usize,
    ) -> Result<Self, TypeError> {
        let instance_id = instance_id.into();
        let bad = |reason: String| TypeError::InvalidInstance {
            id: instance_id.clone(),
            reason,
        };
        if instance_id.trim().is_empty() {
            return Err(bad("empty instance_id".into()));
        }
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&options.len()) {
            return Err(bad(format!(
                "expected {MIN_OPTIONS}..={MAX_OPTIONS} options, got {}",
                options.len()
            )));
        }
        if gold_index >= options.len() {
            return Err(bad(format!(
                "gold_index {gold_index} out of range for {} options",
                options.len()
            )));
        }
        Ok(Self {
            instance_id,
            domain,
            question: question.into(),
            options,
            gold_index,
        })
    }

    pub fn reasoning_type(&self) -> ReasoningType {
        self.domain.reasoning_type()
    }

    pub fn n_options(&self) -> usize {
        self.options.len()
    }
}

/// One agent's contribution to a collaboration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTurn {
    /// 1-based position in the roster.
    pub agent_index: usize,
    pub full_output: String,
    pub final_answer: Option<usize>,
    pub reasoning_tokens: u64,
    pub answer_tokens: u64,
}

impl AgentTurn {
    pub fn total_tokens(&self) -> u64 {
        self.reasoning_tokens + self.answer_tokens
    }
}

/// Ordered transcript of one collaboration plus the system answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollaborationResult {
    pub instance_id: String,
    pub roster_fingerprint: String,
    pub turns: Vec<AgentTurn>,
    pub system_answer: Option<usize>,
    pub correct: bool,
    pub wall_time_ms: u64,
}

impl CollaborationResult {
    pub fn total_tokens(&self) -> u64 {
        self.turns.iter().map(AgentTurn::total_tokens).sum()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn expert(group: ExpertGroup, paradigm: Paradigm, role: &str, index: u32) -> ExpertSpec {
        ExpertSpec {
            expert_group: group,
            formal_role: role.to_string(),
            responsibility: format!("act as the {role}"),
            index,
            paradigm,
        }
    }

    pub fn roster(group: ExpertGroup, paradigm: Paradigm, roles: &[&str]) -> AgentRoster {
        AgentRoster {
            domain_tag: group,
            paradigm,
            size: roles.len(),
            experts: roles
                .iter()
                .enumerate()
                .map(|(i, r)| expert(group, paradigm, r, i as u32))
                .collect(),
        }
    }
}
