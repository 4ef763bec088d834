//! JSONL dataset ingestion and seeded subsampling.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::types::{TaskDomain, TaskInstance};

/// Reads one instance per line. Any malformed line aborts the load.
pub fn load_dataset(path: &Path) -> Result<Vec<TaskInstance>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.into(),
        source,
    })?;
    parse_dataset(&text).map_err(|(line, reason)| HarnessError::Schema {
        path: path.into(),
        line,
        reason,
    })
}

/// Parses JSONL text; errors carry the 1-based line number.
pub fn parse_dataset(text: &str) -> Result<Vec<TaskInstance>, (usize, String)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let inst: TaskInstance = serde_json::from_str(line).map_err(|e| (lineno, e.to_string()))?;
        if !seen.insert(inst.instance_id.clone()) {
            return Err((
                lineno,
                format!("duplicate instance_id {:?}", inst.instance_id),
            ));
        }
        out.push(inst);
    }
    Ok(out)
}

fn domain_seed(seed: u64, domain: TaskDomain) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(domain.name().as_bytes());
    h.finalize().into()
}

/// Picks the instances of `domain` used by a plan.
///
/// Ids are sorted lexicographically, permuted with a generator seeded from
/// `(seed, domain)`, and the first `limit` are kept. Without a limit every
/// instance is returned in id order.
pub fn subsample(
    instances: &[TaskInstance],
    domain: TaskDomain,
    seed: u64,
    limit: Option<usize>,
) -> Vec<&TaskInstance> {
    let mut pool: Vec<&TaskInstance> = instances.iter().filter(|i| i.domain == domain).collect();
    pool.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let Some(limit) = limit else { return pool };
    let mut rng = ChaCha8Rng::from_seed(domain_seed(seed, domain));
    pool.shuffle(&mut rng);
    pool.truncate(limit);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAW: &str = r#"{"instance_id":"q1","domain":"Law","question":"…","options":["a","b","c","d"],"gold_index":3}"#;

    #[test]
    fn one_law_instance() {
        let v = parse_dataset(LAW).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].domain, TaskDomain::Law);
        assert_eq!(v[0].gold_index, 3);
    }

    #[test]
    fn gold_out_of_range_reports_line() {
        let bad = LAW
            .replace("\"gold_index\":3", "\"gold_index\":7")
            .replace("q1", "q2");
        let text = format!("{LAW}\n\n{bad}\n");
        let (line, reason) = parse_dataset(&text).unwrap_err();
        assert_eq!(line, 3);
        assert!(reason.contains("gold_index"), "{reason}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let (line, reason) = parse_dataset(&format!("{LAW}\n{LAW}")).unwrap_err();
        assert_eq!(line, 2);
        assert!(reason.contains("duplicate"));
    }

    fn many(n: usize) -> Vec<TaskInstance> {
        (0..n)
            .map(|i| {
                TaskInstance::new(
                    format!("id{i:03}"),
                    TaskDomain::Health,
                    "q",
                    vec!["a".into(), "b".into()],
                    0,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn subsample_is_stable_and_bounded() {
        let data = many(50);
        let a: Vec<_> = subsample(&data, TaskDomain::Health, 7, Some(10))
            .iter()
            .map(|i| i.instance_id.clone())
            .collect();
        let mut shuffled = data.clone();
        shuffled.reverse();
        let b: Vec<_> = subsample(&shuffled, TaskDomain::Health, 7, Some(10))
            .iter()
            .map(|i| i.instance_id.clone())
            .collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let c: Vec<_> = subsample(&data, TaskDomain::Health, 8, Some(10))
            .iter()
            .map(|i| i.instance_id.clone())
            .collect();
        assert_ne!(a, c);
        assert_eq!(subsample(&data, TaskDomain::Health, 7, Some(500)).len(), 50);
        assert!(subsample(&data, TaskDomain::Law, 7, Some(5)).is_empty());
    }
}
