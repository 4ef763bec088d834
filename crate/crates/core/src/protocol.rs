//! Sequential communication protocol.
//!
//! Agents speak in roster order. Agent `i` sees the complete output of
//! agent `i-1` and only the final answer letters of agents `1..i-2`.
//! The system answer is whatever the last agent concluded.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{
    complete_with_retry, BackendError, ChatBackend, ChatRequest, RequestTag, Sampling,
};
use crate::roles::render_agent_prompts;
use crate::types::{option_letter, AgentRoster, AgentTurn, CollaborationResult, TaskInstance};

pub const UNPARSED: &str = "UNPARSED";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProtocolError {
    #[error("protocol state: agent {next} needs {expected} prior turns, got {got}")]
    State {
        next: usize,
        expected: usize,
        got: usize,
    },
    #[error("agent index {0} exceeds roster size {1}")]
    AgentOutOfRange(usize, usize),
}

/// One earlier agent's final answer as shown to later agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlierFinal {
    pub agent_index: usize,
    pub formal_role: String,
    /// Option letter, or [`UNPARSED`].
    pub answer: String,
}

/// What agent `i` is allowed to see.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleHistory {
    /// Verbatim full output of agent `i-1`.
    pub predecessor_full: Option<String>,
    pub predecessor_role: Option<String>,
    /// Agents `1..=i-2`, ascending.
    pub earlier_finals: Vec<EarlierFinal>,
}

impl VisibleHistory {
    pub fn is_empty(&self) -> bool {
        self.predecessor_full.is_none() && self.earlier_finals.is_empty()
    }
}

fn answer_label(turn: &AgentTurn) -> String {
    turn.final_answer
        .map(|i| option_letter(i).to_string())
        .unwrap_or_else(|| UNPARSED.into())
}

/// Assembles the history visible to agent `next_agent_index` (1-based).
pub fn build_history(
    roster: &AgentRoster,
    turns_so_far: &[AgentTurn],
    next_agent_index: usize,
) -> Result<VisibleHistory, ProtocolError> {
    if next_agent_index == 0 || turns_so_far.len() + 1 != next_agent_index {
        return Err(ProtocolError::State {
            next: next_agent_index,
            expected: next_agent_index.saturating_sub(1),
            got: turns_so_far.len(),
        });
    }
    if next_agent_index > roster.experts.len() {
        return Err(ProtocolError::AgentOutOfRange(
            next_agent_index,
            roster.experts.len(),
        ));
    }
    let Some((pred, earlier)) = turns_so_far.split_last() else {
        return Ok(VisibleHistory::default());
    };
    let earlier_finals = earlier
        .iter()
        .zip(&roster.experts)
        .map(|(t, e)| EarlierFinal {
            agent_index: t.agent_index,
            formal_role: e.formal_role.clone(),
            answer: answer_label(t),
        })
        .collect();
    Ok(VisibleHistory {
        predecessor_full: Some(pred.full_output.clone()),
        predecessor_role: Some(roster.experts[turns_so_far.len() - 1].formal_role.clone()),
        earlier_finals,
    })
}

/// Extracts the option index from the last valid `\boxed{X}` token.
///
/// `X` may be a letter `A..J` (any case) or a 1-based numeral. Doubled
/// braces (`\boxed{{B}}`) are accepted. Tokens whose content is not a
/// single in-range choice are ignored.
pub fn extract_boxed(full_output: &str, n_options: usize) -> Option<usize> {
    const MARK: &str = "\\boxed{";
    let mut found = None;
    let mut rest = full_output;
    while let Some(pos) = rest.find(MARK) {
        let after = &rest[pos + MARK.len()..];
        if let Some(content) = braced_content(after) {
            if let Some(idx) = choice_index(content, n_options) {
                found = Some(idx);
            }
        }
        rest = after;
    }
    found
}

/// Text up to the brace matching an already-consumed `{`.
fn braced_content(s: &str) -> Option<&str> {
    let mut depth = 1usize;
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[..i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn choice_index(content: &str, n_options: usize) -> Option<usize> {
    let mut c = content.trim();
    if c.starts_with('{') && c.ends_with('}') && c.len() >= 2 {
        c = c[1..c.len() - 1].trim();
    }
    let idx = if c.len() == 1 && c.chars().all(|ch| ch.is_ascii_alphabetic()) {
        crate::types::letter_index(c.chars().next()?)?
    } else if !c.is_empty() && c.len() <= 2 && c.chars().all(|ch| ch.is_ascii_digit()) {
        c.parse::<usize>().ok()?.checked_sub(1)?
    } else {
        return None;
    };
    (idx < n_options).then_some(idx)
}

/// Knobs for one collaboration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub sampling: Sampling,
    /// Extra attempts per agent call after a retryable failure.
    pub retries: u32,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            sampling: Sampling::default(),
            retries: 1,
        }
    }
}

/// A run that stopped early because an agent call failed for good.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("agent {agent_index} failed: {error}")]
pub struct CollaborationFailure {
    /// Turns completed before the failure; `system_answer` is absent.
    pub partial: CollaborationResult,
    pub agent_index: usize,
    pub error: BackendError,
}

/// Last agent decides.
pub fn aggregate(turns: &[AgentTurn]) -> Option<usize> {
    turns.last().and_then(|t| t.final_answer)
}

/// Runs the roster over one instance, one backend call per agent in order.
#[allow(clippy::result_large_err)]
pub fn run_collaboration<B: ChatBackend + ?Sized>(
    roster: &AgentRoster,
    instance: &TaskInstance,
    backend: &B,
    options: &ProtocolOptions,
) -> Result<CollaborationResult, CollaborationFailure> {
    let started = Instant::now();
    let fingerprint = roster.fingerprint();
    let n_options = instance.n_options();
    let mut turns: Vec<AgentTurn> = Vec::with_capacity(roster.experts.len());

    for (pos, expert) in roster.experts.iter().enumerate() {
        let agent_index = pos + 1;
        let history = build_history(roster, &turns, agent_index)
            .expect("turn bookkeeping follows roster order");
        let (system, user) = render_agent_prompts(expert, instance, &history);
        let request = ChatRequest::new(system, user)
            .with_sampling(&options.sampling)
            .with_tag(RequestTag::Agent {
                instance_id: instance.instance_id.clone(),
                agent_index,
                n_options,
            });
        match complete_with_retry(backend, &request, options.retries) {
            Ok(resp) => turns.push(AgentTurn {
                agent_index,
                final_answer: extract_boxed(&resp.full_text, n_options),
                full_output: resp.full_text,
                reasoning_tokens: resp.reasoning_tokens,
                answer_tokens: resp.answer_tokens,
            }),
            Err(error) => {
                return Err(CollaborationFailure {
                    partial: CollaborationResult {
                        instance_id: instance.instance_id.clone(),
                        roster_fingerprint: fingerprint,
                        turns,
                        system_answer: None,
                        correct: false,
                        wall_time_ms: started.elapsed().as_millis() as u64,
                    },
                    agent_index,
                    error,
                })
            }
        }
    }

    let system_answer = aggregate(&turns);
    Ok(CollaborationResult {
        instance_id: instance.instance_id.clone(),
        roster_fingerprint: fingerprint,
        correct: system_answer == Some(instance.gold_index),
        system_answer,
        turns,
        wall_time_ms: started.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{MockBackend, MockScript};
    use crate::types::fixtures::roster;
    use crate::types::{ExpertGroup, Paradigm, TaskDomain};

    fn turn(i: usize, text: &str, ans: Option<usize>) -> AgentTurn {
        AgentTurn {
            agent_index: i,
            full_output: text.into(),
            final_answer: ans,
            reasoning_tokens: 0,
            answer_tokens: 1,
        }
    }

    fn three() -> AgentRoster {
        roster(
            ExpertGroup::Law,
            Paradigm::StructuredWorkflow,
            &["Solver", "Critic", "Coordinator"],
        )
    }

    fn instance(gold: usize) -> TaskInstance {
        TaskInstance::new(
            "q1",
            TaskDomain::Law,
            "Which?",
            vec!["w".into(), "x".into(), "y".into(), "z".into()],
            gold,
        )
        .unwrap()
    }

    #[test]
    fn first_agent_sees_nothing() {
        let h = build_history(&three(), &[], 1).unwrap();
        assert_eq!(h, VisibleHistory::default());
    }

    #[test]
    fn second_agent_sees_full_predecessor() {
        let a = turn(1, "rationale A \\boxed{A}", Some(0));
        let h = build_history(&three(), std::slice::from_ref(&a), 2).unwrap();
        assert_eq!(h.predecessor_full.as_deref(), Some(a.full_output.as_str()));
        assert!(h.earlier_finals.is_empty());
    }

    #[test]
    fn third_agent_sees_letters_of_earlier() {
        let a = turn(1, "rationale A", Some(0));
        let b = turn(2, "rationale B", None);
        let h = build_history(&three(), &[a, b.clone()], 3).unwrap();
        assert_eq!(h.predecessor_full.as_deref(), Some("rationale B"));
        assert_eq!(h.predecessor_role.as_deref(), Some("Critic"));
        assert_eq!(
            h.earlier_finals,
            vec![EarlierFinal {
                agent_index: 1,
                formal_role: "Solver".into(),
                answer: "A".into()
            }]
        );
    }

    #[test]
    fn unparsed_label() {
        let h = build_history(&three(), &[turn(1, "x", None), turn(2, "y", Some(1))], 3).unwrap();
        assert_eq!(h.earlier_finals[0].answer, UNPARSED);
    }

    #[test]
    fn history_length_mismatch_is_state_error() {
        assert!(matches!(
            build_history(&three(), &[], 2),
            Err(ProtocolError::State { .. })
        ));
        assert!(matches!(
            build_history(&three(), &[], 0),
            Err(ProtocolError::State { .. })
        ));
    }

    #[test]
    fn boxed_examples() {
        assert_eq!(
            extract_boxed("As a Solver… My answer is \\boxed{B}", 4),
            Some(1)
        );
        assert_eq!(
            extract_boxed("I considered \\boxed{A} but conclude \\boxed{C}", 4),
            Some(2)
        );
        assert_eq!(extract_boxed("The answer is B.", 4), None);
        assert_eq!(extract_boxed("\\boxed{{D}}", 4), Some(3));
        assert_eq!(extract_boxed("\\boxed{ 2 }", 4), Some(1));
        assert_eq!(extract_boxed("\\boxed{E}", 4), None);
        assert_eq!(extract_boxed("\\boxed{10}", 10), Some(9));
        assert_eq!(extract_boxed("\\boxed{0}", 4), None);
        assert_eq!(extract_boxed("\\boxed{B", 4), None);
    }

    #[test]
    fn single_agent_run() {
        let r = roster(ExpertGroup::Law, Paradigm::DiversityDriven, &["Lone"]);
        let mock = MockBackend::new(MockScript::default().respond("q1", 1, "thinking \\boxed{C}"));
        let res = run_collaboration(&r, &instance(2), &mock, &ProtocolOptions::default()).unwrap();
        assert_eq!(res.turns.len(), 1);
        assert_eq!(res.system_answer, Some(2));
        assert!(res.correct);
    }

    #[test]
    fn last_agent_decides() {
        let script = MockScript::default()
            .respond("q1", 1, "\\boxed{A}")
            .respond("q1", 2, "\\boxed{B}")
            .respond("q1", 3, "\\boxed{B}");
        let mock = MockBackend::new(script);
        let res =
            run_collaboration(&three(), &instance(1), &mock, &ProtocolOptions::default()).unwrap();
        assert_eq!(res.system_answer, Some(1));
        assert!(res.correct);
        assert_eq!(mock.call_count(), 3);
        assert_eq!(res.roster_fingerprint, three().fingerprint());
    }

    #[test]
    fn last_agent_unparsed_is_incorrect() {
        let script = MockScript::default()
            .respond("q1", 1, "\\boxed{B}")
            .respond("q1", 2, "\\boxed{B}")
            .respond("q1", 3, "no idea");
        let res = run_collaboration(
            &three(),
            &instance(1),
            &MockBackend::new(script),
            &ProtocolOptions::default(),
        )
        .unwrap();
        assert_eq!(res.system_answer, None);
        assert!(!res.correct);
    }

    #[test]
    fn terminal_failure_keeps_partial_transcript() {
        let json = r#"{"responses":{"q1":{"*":"\\boxed{A}"}},"failures":{"q1":{"2":5}}}"#;
        let mock = MockBackend::new(MockScript::from_json(json).unwrap());
        let err = run_collaboration(&three(), &instance(0), &mock, &ProtocolOptions::default())
            .unwrap_err();
        assert_eq!(err.agent_index, 2);
        assert_eq!(err.partial.turns.len(), 1);
        assert!(!err.partial.correct);
        // agent 1 once, agent 2 twice (one retry)
        assert_eq!(mock.call_count(), 3);
    }

    #[test]
    fn one_transport_failure_is_retried() {
        let json = r#"{"responses":{"q1":{"*":"\\boxed{A}"}},"failures":{"q1":{"2":1}}}"#;
        let mock = MockBackend::new(MockScript::from_json(json).unwrap());
        let res =
            run_collaboration(&three(), &instance(0), &mock, &ProtocolOptions::default()).unwrap();
        assert!(res.correct);
        assert_eq!(mock.call_count(), 4);
    }
}
