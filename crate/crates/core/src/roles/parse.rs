//! Parsing model-written role listings into rosters.
//!
//! Accepted layouts, mixed freely:
//!
//! ```text
//! I. Differential Topologist          <- Roman numeral heading
//! Responsibilities:
//! 1. Analyze manifold embeddings ...
//!
//! III.                                <- numeral alone, title on next line
//! Spectral Synthesizer
//!
//! **2. Critic**                       <- arabic heading, only when the next
//! **Responsibilities:** Evaluate ...     line opens a responsibilities block
//!
//! Role: Coordinator                   <- explicit label
//! Responsibility: Integrate ...
//! ```

use std::sync::OnceLock;

use regex::Regex;

use super::prompts::roman_value;
use super::RoleError;
use crate::types::{AgentRoster, ExpertGroup, ExpertSpec, Paradigm};

fn roman_heading() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"^([IVX]{1,4})[.)]\s*(.*)$").unwrap())
}

fn arabic_heading() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| {
        Regex::new(r"^(?i)(?:(?:expert|agent|role)\s*)?(\d{1,2})\s*[.):-]\s*(.+)$").unwrap()
    })
}

fn labelled_heading() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"^(?i)(?:formal\s+)?(?:role|title)\s*:\s*(.+)$").unwrap())
}

fn responsibility_label() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"^(?i)responsibilit(?:y|ies)\s*:?\s*(.*)$").unwrap())
}

/// Strips markdown emphasis, heading hashes and LaTeX line-break debris.
fn clean(line: &str) -> String {
    let mut s = line.trim().trim_start_matches('#').trim().to_string();
    s = s.replace("**", "").replace("__", "");
    s = s.trim_end_matches("\\\\").trim_end().to_string();
    s = s.replace("\\&", "&");
    s.trim().to_string()
}

fn clean_title(raw: &str) -> String {
    raw.trim().trim_end_matches(':').trim().to_string()
}

#[derive(Debug)]
struct Draft {
    role: String,
    lines: Vec<String>,
}

fn is_responsibility_line(line: &str) -> bool {
    responsibility_label().is_match(line)
}

/// Extracts `(formal_role, responsibility)` pairs in listed order.
pub fn parse_role_pairs(text: &str) -> Vec<(String, String)> {
    let lines: Vec<String> = text.lines().map(clean).collect();
    let next_nonempty = |from: usize| lines[from..].iter().find(|l| !l.is_empty());

    let mut drafts: Vec<Draft> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        i += 1;
        if line.is_empty() {
            continue;
        }
        let heading = if let Some(c) = roman_heading().captures(line) {
            roman_value(&c[1]).map(|_| c[2].to_string())
        } else if let Some(c) = labelled_heading().captures(line) {
            Some(c[1].to_string())
        } else if let Some(c) = arabic_heading().captures(line) {
            let opens_block = next_nonempty(i).is_some_and(|n| is_responsibility_line(n));
            opens_block.then(|| c[2].to_string())
        } else {
            None
        };
        match heading {
            Some(title) => {
                let mut title = clean_title(&title);
                if title.is_empty() {
                    // numeral on its own line; title follows
                    while i < lines.len() && lines[i].is_empty() {
                        i += 1;
                    }
                    if i < lines.len() && !is_responsibility_line(&lines[i]) {
                        title = clean_title(&lines[i]);
                        i += 1;
                    }
                }
                drafts.push(Draft {
                    role: title,
                    lines: Vec::new(),
                });
            }
            None => {
                let Some(d) = drafts.last_mut() else { continue };
                if let Some(c) = responsibility_label().captures(line) {
                    let inline = c[1].trim();
                    if !inline.is_empty() {
                        d.lines.push(inline.to_string());
                    }
                } else {
                    d.lines.push(line.clone());
                }
            }
        }
    }
    drafts
        .into_iter()
        .map(|d| (d.role, d.lines.join("\n")))
        .collect()
}

/// Parses exactly `target_size` experts out of `llm_output`.
pub fn parse_generated_roster(
    llm_output: &str,
    group: ExpertGroup,
    paradigm: Paradigm,
    target_size: usize,
) -> Result<AgentRoster, RoleError> {
    let pairs = parse_role_pairs(llm_output);
    if pairs.len() != target_size {
        return Err(RoleError::Parse(format!(
            "expected {target_size} roles, found {}",
            pairs.len()
        )));
    }
    let mut experts = Vec::with_capacity(pairs.len());
    for (index, (formal_role, responsibility)) in pairs.into_iter().enumerate() {
        if formal_role.is_empty() {
            return Err(RoleError::Parse(format!("role {} has no title", index + 1)));
        }
        if responsibility.trim().is_empty() {
            return Err(RoleError::Parse(format!(
                "role {formal_role:?} has an empty responsibility"
            )));
        }
        experts.push(ExpertSpec {
            expert_group: group,
            formal_role,
            responsibility,
            index: index as u32,
            paradigm,
        });
    }
    Ok(AgentRoster::new(group, paradigm, experts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MARKDOWN: &str = "Here is your team:\n\n\
        **1. Solver**\n**Responsibilities:** Build the core solution.\n\n\
        **2. Critic**\n**Responsibilities:**\n- Find flaws\n- Check assumptions\n\n\
        **3. Coordinator**\n**Responsibilities:** Merge the work.\n";

    #[test]
    fn markdown_numbered_listing() {
        let r = parse_generated_roster(MARKDOWN, ExpertGroup::Law, Paradigm::StructuredWorkflow, 3)
            .unwrap();
        let roles: Vec<_> = r.experts.iter().map(|e| e.formal_role.as_str()).collect();
        assert_eq!(roles, ["Solver", "Critic", "Coordinator"]);
        assert_eq!(
            r.experts[1].responsibility,
            "- Find flaws\n- Check assumptions"
        );
        assert_eq!(
            r.experts.iter().map(|e| e.index).collect::<Vec<_>>(),
            [0, 1, 2]
        );
    }

    #[test]
    fn labelled_listing() {
        let text = "Role: Tax Specialist\nResponsibility: file things\n\nRole: Auditor\nResponsibility: check things\n";
        let pairs = parse_role_pairs(text);
        assert_eq!(
            pairs,
            vec![
                ("Tax Specialist".to_string(), "file things".to_string()),
                ("Auditor".to_string(), "check things".to_string()),
            ]
        );
    }

    #[test]
    fn too_few_roles() {
        let two =
            "I. Solver\nResponsibilities:\nsolve\n\nII. Critic\nResponsibilities:\ncritique\n";
        let err = parse_generated_roster(two, ExpertGroup::Law, Paradigm::StructuredWorkflow, 3)
            .unwrap_err();
        assert!(err.to_string().contains("expected 3 roles, found 2"));
    }

    #[test]
    fn empty_responsibility() {
        let text = "I. Solver\nResponsibilities:\n\nII. Critic\nResponsibilities:\nc\n\nIII. Coordinator\nResponsibilities:\nc\n";
        assert!(matches!(
            parse_generated_roster(text, ExpertGroup::Law, Paradigm::StructuredWorkflow, 3),
            Err(RoleError::Parse(_))
        ));
    }

    #[test]
    fn workflow_size_three_still_validated() {
        let text = "I. Solver\nResponsibilities:\na\n\nII. Solver\nResponsibilities:\nb\n\nIII. Coordinator\nResponsibilities:\nc\n";
        assert!(matches!(
            parse_generated_roster(text, ExpertGroup::Law, Paradigm::StructuredWorkflow, 3),
            Err(RoleError::Invalid(_))
        ));
    }

    #[test]
    fn larger_workflow_accepts_any_role_names() {
        let mut text = String::new();
        for (i, r) in [
            "Solver",
            "Critic",
            "Coordinator",
            "Strategist",
            "Solver",
            "Critic",
        ]
        .iter()
        .enumerate()
        {
            text.push_str(&format!(
                "{}. {r}\nResponsibilities:\nduty {i}\n\n",
                super::super::prompts::roman(i + 1)
            ));
        }
        let r = parse_generated_roster(&text, ExpertGroup::Math, Paradigm::StructuredWorkflow, 6)
            .unwrap();
        assert_eq!(r.size, 6);
    }
}
