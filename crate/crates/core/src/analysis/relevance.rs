//! Expertise–domain relevance matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::backends::{complete_with_retry, ChatBackend, ChatRequest, RequestTag};
use crate::harness::subsample;
use crate::roles::render_problem;
use crate::types::{TaskDomain, TaskInstance};

pub const RELEVANCE_SYSTEM_PROMPT: &str = "You are a helpful assistant.";

const RELEVANCE_PROMPT: &str = "You are an expert in identifying the domains of expertise required to solve a given problem. \
You will be provided with a question, and your task is to determine which domains from the following list are relevant: ['Math', 'Law', 'Business', 'Health'].
Please analyze the question and return the appropriate domains. There could be more than one domain that is necessary.
Please directly output a python list of the domains without other output.
Please limit your output to 2-3 domains.
For example: ['Med', 'Fina']
Please directly output the list that is loadable by python, no other output. 2-3 domains should be outputted, no more or less.";

/// Expertise columns, in the order the prompt lists them.
pub const EXPERTISE_DOMAINS: [TaskDomain; 4] = [
    TaskDomain::Math,
    TaskDomain::Law,
    TaskDomain::Business,
    TaskDomain::Health,
];

pub fn render_relevance_prompt(instance: &TaskInstance) -> String {
    format!(
        "{RELEVANCE_PROMPT}\n\nQuestion:\n{}",
        render_problem(instance)
    )
}

fn canonical_domain(name: &str) -> Option<TaskDomain> {
    match name.trim().to_ascii_lowercase().as_str() {
        "math" | "mathematics" => Some(TaskDomain::Math),
        "law" | "legal" => Some(TaskDomain::Law),
        "business" | "fina" | "finance" => Some(TaskDomain::Business),
        "health" | "med" | "medical" | "medicine" => Some(TaskDomain::Health),
        _ => None,
    }
}

/// Parses a bracketed list of quoted domain names into 2–3 distinct domains.
pub fn parse_relevance(text: &str) -> Result<Vec<TaskDomain>, String> {
    let start = text.find('[').ok_or("no opening bracket")?;
    let end = text
        .rfind(']')
        .filter(|&e| e > start)
        .ok_or("no closing bracket")?;
    let body = &text[start + 1..end];
    let mut out = Vec::new();
    for raw in body.split(',') {
        let item = raw.trim();
        if item.is_empty() {
            continue;
        }
        let unquoted = item
            .strip_prefix('\'')
            .and_then(|s| s.strip_suffix('\''))
            .or_else(|| item.strip_prefix('"').and_then(|s| s.strip_suffix('"')))
            .ok_or_else(|| format!("unquoted element {item}"))?;
        let dom =
            canonical_domain(unquoted).ok_or_else(|| format!("unknown domain {unquoted:?}"))?;
        if out.contains(&dom) {
            return Err(format!("duplicate domain {unquoted:?}"));
        }
        out.push(dom);
    }
    if !(2..=3).contains(&out.len()) {
        return Err(format!("expected 2-3 domains, got {}", out.len()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceRow {
    pub counts: BTreeMap<TaskDomain, u64>,
    /// Instances queried for this task domain.
    pub sampled: usize,
    /// Instances whose responses stayed invalid after the retry.
    pub dropped: usize,
}

impl RelevanceRow {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Row totals must lie in `[2k, 3k]` for `k` kept instances.
    pub fn within_bounds(&self) -> bool {
        let kept = (self.sampled - self.dropped) as u64;
        (2 * kept..=3 * kept).contains(&self.total())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceMatrix {
    pub rows: BTreeMap<TaskDomain, RelevanceRow>,
    pub samples_per_domain: usize,
}

impl RelevanceMatrix {
    pub fn count(&self, task: TaskDomain, expertise: TaskDomain) -> u64 {
        self.rows
            .get(&task)
            .and_then(|r| r.counts.get(&expertise))
            .copied()
            .unwrap_or(0)
    }
}

/// Queries `backend` for `samples_per_domain` instances of every domain present.
pub fn build_relevance_matrix<B: ChatBackend + ?Sized>(
    instances: &[TaskInstance],
    backend: &B,
    samples_per_domain: usize,
    seed: u64,
) -> Result<RelevanceMatrix, AnalysisError> {
    if samples_per_domain == 0 {
        return Err(AnalysisError::Precondition(
            "samples_per_domain must be >= 1".into(),
        ));
    }
    let mut matrix = RelevanceMatrix {
        samples_per_domain,
        ..Default::default()
    };
    let mut any_valid = false;
    for domain in TaskDomain::ALL {
        let sample = subsample(instances, domain, seed, Some(samples_per_domain));
        if sample.is_empty() {
            continue;
        }
        let row = matrix.rows.entry(domain).or_default();
        for &e in &EXPERTISE_DOMAINS {
            row.counts.insert(e, 0);
        }
        row.sampled = sample.len();
        for inst in sample {
            let mut parsed = None;
            for attempt in 0..2u32 {
                let req = ChatRequest::new(RELEVANCE_SYSTEM_PROMPT, render_relevance_prompt(inst))
                    .with_tag(RequestTag::Relevance {
                        instance_id: inst.instance_id.clone(),
                        attempt,
                    });
                let resp = complete_with_retry(backend, &req, 1)?;
                match parse_relevance(&resp.full_text) {
                    Ok(v) => {
                        parsed = Some(v);
                        break;
                    }
                    Err(reason) => {
                        tracing::debug!(instance = %inst.instance_id, attempt, %reason, "invalid relevance response")
                    }
                }
            }
            match parsed {
                Some(domains) => {
                    any_valid = true;
                    for d in domains {
                        *row.counts.entry(d).or_default() += 1;
                    }
                }
                None => row.dropped += 1,
            }
        }
        if row.dropped > 0 {
            tracing::warn!(%domain, dropped = row.dropped, "relevance responses dropped");
        }
    }
    if !any_valid {
        return Err(AnalysisError::AllInvalid);
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{MockBackend, MockScript};

    #[test]
    fn parses_python_lists_with_aliases() {
        assert_eq!(
            parse_relevance("['Math', 'Health']").unwrap(),
            vec![TaskDomain::Math, TaskDomain::Health]
        );
        assert_eq!(
            parse_relevance("```python\n[\"Med\", \"Fina\", 'law']\n```").unwrap(),
            vec![TaskDomain::Health, TaskDomain::Business, TaskDomain::Law]
        );
        assert!(parse_relevance("['Math']").is_err());
        assert!(parse_relevance("['Math','Law','Health','Business']").is_err());
        assert!(parse_relevance("['Math','Cooking']").is_err());
        assert!(parse_relevance("['Health','Med']").is_err());
        assert!(parse_relevance("Math, Law").is_err());
    }

    fn inst(id: &str, d: TaskDomain) -> TaskInstance {
        TaskInstance::new(id, d, "q", vec!["a".into(), "b".into()], 0).unwrap()
    }

    #[test]
    fn counts_two_math_instances() {
        let data = vec![inst("m1", TaskDomain::Math), inst("m2", TaskDomain::Math)];
        let mut s = MockScript::default();
        s.relevance
            .insert("m1".into(), vec!["['Math','Health']".into()]);
        s.relevance
            .insert("m2".into(), vec!["['Math','Law']".into()]);
        let m = build_relevance_matrix(&data, &MockBackend::new(s), 2, 0).unwrap();
        let row = &m.rows[&TaskDomain::Math];
        assert_eq!(row.counts[&TaskDomain::Math], 2);
        assert_eq!(row.counts[&TaskDomain::Health], 1);
        assert_eq!(row.counts[&TaskDomain::Law], 1);
        assert_eq!(row.counts[&TaskDomain::Business], 0);
        assert!(row.within_bounds());
    }

    #[test]
    fn single_element_retried_then_dropped() {
        let data = vec![inst("m1", TaskDomain::Math), inst("m2", TaskDomain::Math)];
        let mut s = MockScript::default();
        s.relevance.insert("m1".into(), vec!["['Math']".into()]);
        s.relevance.insert(
            "m2".into(),
            vec!["['Math']".into(), "['Math','Law']".into()],
        );
        let mock = MockBackend::new(s);
        let m = build_relevance_matrix(&data, &mock, 2, 0).unwrap();
        let row = &m.rows[&TaskDomain::Math];
        assert_eq!(row.dropped, 1);
        assert_eq!(row.total(), 2);
        assert_eq!(mock.call_count(), 4);
        assert!(row.within_bounds());
    }

    #[test]
    fn all_invalid_is_an_error() {
        let data = vec![inst("m1", TaskDomain::Math)];
        let mut s = MockScript::default();
        s.relevance.insert("m1".into(), vec!["nope".into()]);
        assert!(matches!(
            build_relevance_matrix(&data, &MockBackend::new(s), 1, 0),
            Err(AnalysisError::AllInvalid)
        ));
    }

    #[test]
    fn prompt_carries_question_and_domain_list() {
        let p = render_relevance_prompt(&inst("x", TaskDomain::Law));
        assert!(p.contains("['Math', 'Law', 'Business', 'Health']"));
        assert!(p.contains("2-3 domains"));
        assert!(p.ends_with("q\nA. a\nB. b"));
    }
}
