//! Expert rosters: prompts, generation, augmentation and on-disk storage.
//!
//! A role file holds one roster and is named `{group}_{paradigm}_{size}.json`:
//!
//! ```json
//! { "expert_group": "Law", "paradigm": "StructuredWorkflow", "size": 3,
//!   "experts": [ { "formal_role": "Solver", "responsibility": "...", "index": 0 } ],
//!   "provenance": "Shipped" }
//! ```

mod parse;
mod prompts;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{complete_with_retry, BackendError, ChatBackend, ChatRequest, RequestTag};
use crate::types::{AgentRoster, ExpertGroup, ExpertSpec, Paradigm, TypeError};

pub use parse::{parse_generated_roster, parse_role_pairs};
pub use prompts::{
    render_agent_prompts, render_augmentation_prompt, render_generation_prompt, render_history,
    render_problem, render_roster_text, EMPTY_HISTORY, GENERATION_SYSTEM_PROMPT, PLACEHOLDERS,
};

#[derive(Debug, thiserror::Error)]
pub enum RoleError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("could not parse roles: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] TypeError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0} already exists (use --force to overwrite)")]
    Exists(PathBuf),
    #[error("no roster for {group} / {paradigm} / size {size}")]
    Missing {
        group: ExpertGroup,
        paradigm: Paradigm,
        size: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Shipped,
    Generated,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleFileExpert {
    pub formal_role: String,
    pub responsibility: String,
    pub index: u32,
}

/// On-disk form of one roster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleFile {
    pub expert_group: ExpertGroup,
    pub paradigm: Paradigm,
    pub size: usize,
    pub experts: Vec<RoleFileExpert>,
    pub provenance: Provenance,
}

impl RoleFile {
    pub fn from_roster(roster: &AgentRoster, provenance: Provenance) -> Self {
        Self {
            expert_group: roster.domain_tag,
            paradigm: roster.paradigm,
            size: roster.size,
            experts: roster
                .experts
                .iter()
                .map(|e| RoleFileExpert {
                    formal_role: e.formal_role.clone(),
                    responsibility: e.responsibility.clone(),
                    index: e.index,
                })
                .collect(),
            provenance,
        }
    }

    pub fn to_roster(&self) -> Result<AgentRoster, TypeError> {
        AgentRoster {
            domain_tag: self.expert_group,
            paradigm: self.paradigm,
            size: self.size,
            experts: self
                .experts
                .iter()
                .map(|e| ExpertSpec {
                    expert_group: self.expert_group,
                    formal_role: e.formal_role.clone(),
                    responsibility: e.responsibility.clone(),
                    index: e.index,
                    paradigm: self.paradigm,
                })
                .collect(),
        }
        .validated()
    }

    pub fn file_name(&self) -> String {
        role_file_name(self.expert_group, self.paradigm, self.size)
    }
}

pub fn role_file_name(group: ExpertGroup, paradigm: Paradigm, size: usize) -> String {
    format!("{}_{}_{}.json", group.slug(), paradigm.slug(), size)
}

pub fn read_role_file(path: &Path) -> Result<RoleFile, RoleError> {
    let text = fs::read_to_string(path).map_err(|source| RoleError::Io {
        path: path.into(),
        source,
    })?;
    let file: RoleFile = serde_json::from_str(&text).map_err(|source| RoleError::Json {
        path: path.into(),
        source,
    })?;
    file.to_roster()?;
    Ok(file)
}

/// Writes `file` into `dir`, refusing to clobber an existing file unless `force`.
pub fn write_role_file(dir: &Path, file: &RoleFile, force: bool) -> Result<PathBuf, RoleError> {
    file.to_roster()?;
    fs::create_dir_all(dir).map_err(|source| RoleError::Io {
        path: dir.into(),
        source,
    })?;
    let path = dir.join(file.file_name());
    if path.exists() && !force {
        return Err(RoleError::Exists(path));
    }
    let mut text = serde_json::to_string_pretty(file).expect("role files serialize");
    text.push('\n');
    fs::write(&path, text).map_err(|source| RoleError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

const SHIPPED: [&str; 8] = [
    include_str!("../../data/roles/math_diversity_3.json"),
    include_str!("../../data/roles/math_workflow_3.json"),
    include_str!("../../data/roles/finance_diversity_3.json"),
    include_str!("../../data/roles/finance_workflow_3.json"),
    include_str!("../../data/roles/medical_diversity_3.json"),
    include_str!("../../data/roles/medical_workflow_3.json"),
    include_str!("../../data/roles/law_diversity_3.json"),
    include_str!("../../data/roles/law_workflow_3.json"),
];

type LibraryKey = (ExpertGroup, Paradigm, usize);

/// Validated rosters keyed by `(group, paradigm, size)`.
#[derive(Debug, Clone, Default)]
pub struct RoleLibrary {
    entries: BTreeMap<LibraryKey, (AgentRoster, Provenance)>,
}

impl RoleLibrary {
    /// The eight size-3 rosters bundled with the crate.
    pub fn shipped() -> Self {
        let mut lib = Self::default();
        for text in SHIPPED {
            let file: RoleFile = serde_json::from_str(text).expect("bundled role file parses");
            lib.insert(
                file.to_roster().expect("bundled role file validates"),
                file.provenance,
            );
        }
        lib
    }

    /// Shipped rosters overlaid with every role file found in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, RoleError> {
        let mut lib = Self::shipped();
        if !dir.exists() {
            return Ok(lib);
        }
        let read = fs::read_dir(dir).map_err(|source| RoleError::Io {
            path: dir.into(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let file = read_role_file(&p)?;
            lib.insert(file.to_roster()?, file.provenance);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, roster: AgentRoster, provenance: Provenance) {
        self.entries.insert(
            (roster.domain_tag, roster.paradigm, roster.size),
            (roster, provenance),
        );
    }

    pub fn get(&self, group: ExpertGroup, paradigm: Paradigm, size: usize) -> Option<&AgentRoster> {
        self.entries.get(&(group, paradigm, size)).map(|(r, _)| r)
    }

    pub fn require(
        &self,
        group: ExpertGroup,
        paradigm: Paradigm,
        size: usize,
    ) -> Result<&AgentRoster, RoleError> {
        self.get(group, paradigm, size).ok_or(RoleError::Missing {
            group,
            paradigm,
            size,
        })
    }

    pub fn provenance(
        &self,
        group: ExpertGroup,
        paradigm: Paradigm,
        size: usize,
    ) -> Option<Provenance> {
        self.entries.get(&(group, paradigm, size)).map(|(_, p)| *p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgentRoster, Provenance)> {
        self.entries.values().map(|(r, p)| (r, *p))
    }
}

/// Asks `backend` for a fresh size-3 roster and parses the answer.
pub fn generate_roster<B: ChatBackend + ?Sized>(
    backend: &B,
    group: ExpertGroup,
    paradigm: Paradigm,
) -> Result<AgentRoster, RoleError> {
    let prompt = render_generation_prompt(group, paradigm, 3)?;
    let req =
        ChatRequest::new(GENERATION_SYSTEM_PROMPT, prompt).with_tag(RequestTag::RoleGeneration);
    let resp = complete_with_retry(backend, &req, 1)?;
    parse_generated_roster(&resp.full_text, group, paradigm, 3)
}

/// Grows a size-3 roster to `target_size`, keeping the base experts as a prefix.
///
/// The model may answer with the full group or with only the new experts.
pub fn augment_roster<B: ChatBackend + ?Sized>(
    backend: &B,
    base: &AgentRoster,
    target_size: usize,
) -> Result<AgentRoster, RoleError> {
    let prompt = render_augmentation_prompt(base, target_size)?;
    let req =
        ChatRequest::new(GENERATION_SYSTEM_PROMPT, prompt).with_tag(RequestTag::RoleGeneration);
    let resp = complete_with_retry(backend, &req, 1)?;
    merge_augmented(base, &resp.full_text, target_size)
}

pub fn merge_augmented(
    base: &AgentRoster,
    llm_output: &str,
    target_size: usize,
) -> Result<AgentRoster, RoleError> {
    let pairs = parse_role_pairs(llm_output);
    let base_len = base.experts.len();
    let new_pairs = if pairs.len() == target_size {
        let prefix_matches = pairs
            .iter()
            .zip(&base.experts)
            .all(|((role, _), e)| role.eq_ignore_ascii_case(&e.formal_role));
        if !prefix_matches {
            return Err(RoleError::Parse(
                "augmented listing does not start with the base experts".into(),
            ));
        }
        &pairs[base_len..]
    } else if pairs.len() + base_len == target_size {
        &pairs[..]
    } else {
        return Err(RoleError::Parse(format!(
            "expected {target_size} (or {}) roles, found {}",
            target_size - base_len,
            pairs.len()
        )));
    };
    let mut experts = base.experts.clone();
    for (offset, (role, duty)) in new_pairs.iter().enumerate() {
        if role.is_empty() || duty.trim().is_empty() {
            return Err(RoleError::Parse(format!(
                "new expert {} is incomplete",
                offset + 1
            )));
        }
        experts.push(ExpertSpec {
            expert_group: base.domain_tag,
            formal_role: role.clone(),
            responsibility: duty.clone(),
            index: (base_len + offset) as u32,
            paradigm: base.paradigm,
        });
    }
    Ok(AgentRoster::new(base.domain_tag, base.paradigm, experts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::PromptRule;
    use crate::backends::{MockBackend, MockScript};

    #[test]
    fn shipped_library_covers_all_groups_and_paradigms() {
        let lib = RoleLibrary::shipped();
        assert_eq!(lib.len(), 8);
        for g in ExpertGroup::ALL {
            for p in Paradigm::ALL {
                let r = lib.get(g, p, 3).unwrap();
                assert!(crate::types::validate_roster(r).is_empty());
                assert_eq!(lib.provenance(g, p, 3), Some(Provenance::Shipped));
            }
        }
        let math = lib
            .get(ExpertGroup::Math, Paradigm::DiversityDriven, 3)
            .unwrap();
        assert_eq!(math.experts[2].formal_role, "Spectral Synthesizer");
    }

    #[test]
    fn shipped_rosters_survive_text_round_trip() {
        for (r, _) in RoleLibrary::shipped().iter() {
            let text = render_roster_text(r);
            let back = parse_generated_roster(&text, r.domain_tag, r.paradigm, 3).unwrap();
            assert_eq!(&back, r);
        }
    }

    #[test]
    fn write_refuses_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let lib = RoleLibrary::shipped();
        let r = lib
            .get(ExpertGroup::Law, Paradigm::StructuredWorkflow, 3)
            .unwrap();
        let f = RoleFile::from_roster(r, Provenance::Generated);
        let p = write_role_file(dir.path(), &f, false).unwrap();
        assert!(p.ends_with("law_workflow_3.json"));
        assert!(matches!(
            write_role_file(dir.path(), &f, false),
            Err(RoleError::Exists(_))
        ));
        write_role_file(dir.path(), &f, true).unwrap();
        let lib2 = RoleLibrary::load_dir(dir.path()).unwrap();
        assert_eq!(
            lib2.provenance(ExpertGroup::Law, Paradigm::StructuredWorkflow, 3),
            Some(Provenance::Generated)
        );
    }

    #[test]
    fn generation_pipeline_reproduces_shipped_roster() {
        let shipped = RoleLibrary::shipped();
        let law = shipped
            .get(ExpertGroup::Law, Paradigm::DiversityDriven, 3)
            .unwrap();
        let script = MockScript {
            generation: vec![PromptRule {
                contains: "sub-domain of Law".into(),
                response: format!("Sure! Here is the team.\n\n{}", render_roster_text(law)),
            }],
            ..Default::default()
        };
        let mock = MockBackend::new(script);
        let got = generate_roster(&mock, ExpertGroup::Law, Paradigm::DiversityDriven).unwrap();
        assert_eq!(&got, law);
        assert_eq!(mock.calls()[0].system_prompt, GENERATION_SYSTEM_PROMPT);
    }

    #[test]
    fn augmentation_keeps_base_prefix() {
        let lib = RoleLibrary::shipped();
        let base = lib
            .get(ExpertGroup::Medical, Paradigm::StructuredWorkflow, 3)
            .unwrap();
        let only_new = "IV. Strategist\nResponsibilities:\nplan\n\nV. Solver\nResponsibilities:\nsolve more\n\nVI. Critic\nResponsibilities:\ncheck more\n";
        let six = merge_augmented(base, only_new, 6).unwrap();
        assert_eq!(&six.experts[..3], &base.experts[..]);
        assert_eq!(six.size, 6);

        let full = format!("{}\n{only_new}", render_roster_text(base));
        assert_eq!(merge_augmented(base, &full, 6).unwrap(), six);

        assert!(merge_augmented(base, only_new, 10).is_err());
    }
}
