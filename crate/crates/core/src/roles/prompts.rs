//! Prompt templates for agents, role generation and role augmentation.

use std::fmt::Write as _;

use crate::protocol::VisibleHistory;
use crate::types::{option_letter, AgentRoster, ExpertGroup, ExpertSpec, Paradigm, TaskInstance};

use super::RoleError;

/// Marker used in place of an empty discussion history.
pub const EMPTY_HISTORY: &str = "(none)";

/// System prompt used when asking a model to generate or augment a roster.
/// The user prompt carries the generation template itself.
pub const GENERATION_SYSTEM_PROMPT: &str =
    "You are a helpful assistant that designs expert teams. \
Present each expert as a Roman-numeral heading with the role title (for example \"I. Solver\"), \
followed by a \"Responsibilities:\" line and the responsibility text.";

const AGENT_SYSTEM: &str = "[ROLE ASSIGNMENT]
You are a {title} specializing in {domain}.
Your professional responsibility is to {duty}.
IMPORTANT: Think and respond EXACTLY as a real {title} in {domain} would.
Use terminology, methods, and perspectives specific to your professional field.";

const AGENT_USER: &str = "Previous discussion:    {message_hist}
PROBLEM TO SOLVE: {problem}
RESPONSE INSTRUCTIONS:
1. Begin with: \"As a {title} in {domain}, I...\"
2. Analyze the problem using your professional expertise
3. Provide your expert recommendation
4. End with: \"My answer is \\boxed{X}\" where X is the answer index

REQUIREMENTS:
- Maintain your {title} perspective throughout
- Use terminology from {domain}
- Keep response under 150 words
- Your answer MUST be in \\boxed{} format

Remember: You are a {title}, not an AI assistant. Think and respond accordingly.";

const GEN_WORKFLOW: &str = "Generate me an expert group in {Domain} domain of size three, \
assigning them roles of solver, critic and coordinator together with their detailed responsibilities.";

const GEN_DIVERSITY: &str = "Generate an expert group of size 3 in the {Domain} domain, \
each specializing in a distinct sub-domain of {Domain}. Provide a detailed configuration for each expert, \
including their role and responsibility, ensuring that their roles are complementary and collectively \
form a balanced, high-functioning team capable of addressing complex challenges in the domain.
For example, an expert in a sub-domain of business could be \"Global Compliance Architect\".";

const AUG_WORKFLOW: &str = "Here is a expert group configuration in {Domain} domain of size 3: \
{Group Description of Size 3}.
Please augment the group size to {System Size} by assigning new experts with roles of solver, critic, \
strategist and coordinator.
Output your configuration following the format of the given group configuration.";

const AUG_DIVERSITY: &str = "Here is a expert group configuration in {Domain} domain of size 3: \
{Group Description of Size 3}.
Please augment the group size to {System Size} by assigning new experts with roles of expert in other \
sub-domains in {Domain} together with their responsibilities.
Output your configuration following the format of the given group configuration.";

/// Placeholder names used by the templates above.
pub const PLACEHOLDERS: [&str; 8] = [
    "{title}",
    "{domain}",
    "{duty}",
    "{message_hist}",
    "{problem}",
    "{Domain}",
    "{System Size}",
    "{Group Description of Size 3}",
];

/// Renders the discussion history block for the user prompt.
pub fn render_history(history: &VisibleHistory) -> String {
    if history.is_empty() {
        return EMPTY_HISTORY.to_string();
    }
    let mut out = String::new();
    for f in &history.earlier_finals {
        let _ = writeln!(
            out,
            "Agent {} ({}): {}",
            f.agent_index, f.formal_role, f.answer
        );
    }
    if let Some(full) = &history.predecessor_full {
        let idx = history.earlier_finals.len() + 1;
        let role = history
            .predecessor_role
            .as_deref()
            .unwrap_or("previous agent");
        let _ = write!(out, "Agent {idx} ({role}) full response:\n{full}");
    }
    out.trim_end().to_string()
}

/// Question followed by lettered options, one per line.
pub fn render_problem(instance: &TaskInstance) -> String {
    let mut out = instance.question.trim().to_string();
    for (i, opt) in instance.options.iter().enumerate() {
        let _ = write!(out, "\n{}. {}", option_letter(i), opt.trim());
    }
    out
}

/// Fills the agent templates. Returns `(system_prompt, user_prompt)`.
pub fn render_agent_prompts(
    expert: &ExpertSpec,
    instance: &TaskInstance,
    history: &VisibleHistory,
) -> (String, String) {
    let domain = expert.expert_group.display_name();
    let system = AGENT_SYSTEM
        .replace("{title}", &expert.formal_role)
        .replace("{domain}", domain)
        .replace("{duty}", expert.responsibility.trim());
    // problem and history last: they carry free text that may contain braces
    let user = AGENT_USER
        .replace("{title}", &expert.formal_role)
        .replace("{domain}", domain)
        .replace("{problem}", "\u{0}PROBLEM\u{0}")
        .replace("{message_hist}", "\u{0}HIST\u{0}")
        .replace("\u{0}PROBLEM\u{0}", &render_problem(instance))
        .replace("\u{0}HIST\u{0}", &render_history(history));
    (system, user)
}

/// Primary generation prompt; defined only for groups of three.
pub fn render_generation_prompt(
    group: ExpertGroup,
    paradigm: Paradigm,
    size: usize,
) -> Result<String, RoleError> {
    if size != 3 {
        return Err(RoleError::Precondition(format!(
            "primary generation is defined for size 3, got {size}"
        )));
    }
    let template = match paradigm {
        Paradigm::StructuredWorkflow => GEN_WORKFLOW,
        Paradigm::DiversityDriven => GEN_DIVERSITY,
    };
    Ok(template.replace("{Domain}", group.display_name()))
}

/// Serializes a roster in the heading/responsibilities layout the parser reads.
pub fn render_roster_text(roster: &AgentRoster) -> String {
    let mut out = String::new();
    for (i, e) in roster.experts.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(
            out,
            "{}. {}\nResponsibilities:\n{}\n",
            roman(i + 1),
            e.formal_role,
            e.responsibility.trim()
        );
    }
    out
}

/// Augmentation prompt growing a size-3 roster to `target_size`.
pub fn render_augmentation_prompt(
    base: &AgentRoster,
    target_size: usize,
) -> Result<String, RoleError> {
    if base.size != 3 || base.experts.len() != 3 {
        return Err(RoleError::Precondition(format!(
            "augmentation starts from a size-3 roster, got size {}",
            base.size
        )));
    }
    if target_size <= 3 {
        return Err(RoleError::Precondition(format!(
            "target size {target_size} must exceed 3"
        )));
    }
    let template = match base.paradigm {
        Paradigm::StructuredWorkflow => AUG_WORKFLOW,
        Paradigm::DiversityDriven => AUG_DIVERSITY,
    };
    Ok(template
        .replace("{Domain}", base.domain_tag.display_name())
        .replace("{System Size}", &target_size.to_string())
        .replace("{Group Description of Size 3}", &render_roster_text(base)))
}

const ROMAN: [&str; 10] = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X"];

pub(crate) fn roman(n: usize) -> &'static str {
    ROMAN[n - 1]
}

pub(crate) fn roman_value(s: &str) -> Option<usize> {
    ROMAN
        .iter()
        .position(|r| r.eq_ignore_ascii_case(s))
        .map(|i| i + 1)
}
