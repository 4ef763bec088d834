//! Experiment execution: datasets, plans, and the resumable run loop.

mod dataset;
mod runlog;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::backends::{ChatBackend, Sampling};
use crate::protocol::{run_collaboration, ProtocolOptions};
use crate::roles::{RoleError, RoleLibrary};
use crate::types::{fingerprint_of, AgentRoster, ExpertGroup, Paradigm, TaskDomain, TaskInstance};

pub use dataset::{load_dataset, parse_dataset, subsample};
pub use runlog::{read_run_log, Cell, ConfigSnapshot, RecordKey, RunLogWriter, RunRecord};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Schema {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Roles(#[from] RoleError),
}

/// Plan sizes; size 1 is reserved for ablations outside plans.
pub const PLAN_SIZES: [usize; 3] = [3, 6, 10];

/// Which slice of the experiment matrix to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset_path: PathBuf,
    pub domains: Vec<TaskDomain>,
    pub groups: Vec<ExpertGroup>,
    pub paradigms: Vec<Paradigm>,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub sample_limit: Option<usize>,
    pub seed: u64,
    /// Name of a backend profile in the CLI config.
    pub backend: String,
    /// Overrides the profile's sampling defaults.
    #[serde(default)]
    pub sampling: Option<Sampling>,
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.into(),
            source,
        })?;
        let plan: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Schema {
            path: path.into(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        fn nonempty_unique<T: Eq + std::hash::Hash + Copy>(
            v: &[T],
            what: &str,
        ) -> Result<(), HarnessError> {
            if v.is_empty() {
                return Err(HarnessError::Plan(format!("{what} must not be empty")));
            }
            if v.iter().copied().collect::<HashSet<_>>().len() != v.len() {
                return Err(HarnessError::Plan(format!("{what} contains duplicates")));
            }
            Ok(())
        }
        nonempty_unique(&self.domains, "domains")?;
        nonempty_unique(&self.groups, "groups")?;
        nonempty_unique(&self.paradigms, "paradigms")?;
        nonempty_unique(&self.sizes, "sizes")?;
        if let Some(bad) = self.sizes.iter().find(|s| !PLAN_SIZES.contains(s)) {
            return Err(HarnessError::Plan(format!(
                "size {bad} not in {PLAN_SIZES:?}"
            )));
        }
        if self.sample_limit == Some(0) {
            return Err(HarnessError::Plan("sample_limit must be >= 1".into()));
        }
        if self.backend.trim().is_empty() {
            return Err(HarnessError::Plan("backend profile name is empty".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_of(self)
    }

    /// Every `(domain, group, paradigm, size)` cell, in execution order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &task_domain in &self.domains {
            for &expert_group in &self.groups {
                for &paradigm in &self.paradigms {
                    for &size in &self.sizes {
                        out.push(Cell {
                            task_domain,
                            expert_group,
                            paradigm,
                            size,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub backend_profile: String,
    pub protocol: ProtocolOptions,
    /// Concurrent collaborations.
    pub parallelism: usize,
    /// Stop scheduling after this many new records (used for crash drills).
    pub stop_after: Option<usize>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            backend_profile: "mock".into(),
            protocol: ProtocolOptions::default(),
            parallelism: 1,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecSummary {
    pub total_jobs: usize,
    pub skipped: usize,
    pub written: usize,
    pub failures: usize,
}

struct Job<'a> {
    cell: Cell,
    roster: &'a AgentRoster,
    roster_fp: String,
    instance: &'a TaskInstance,
}

/// Runs every `(cell, instance)` pair of `plan` not already in the log.
///
/// Records are appended in plan order regardless of `parallelism`, so an
/// interrupted run followed by a resume produces the same log as an
/// uninterrupted one.
pub fn execute_plan<B: ChatBackend + ?Sized>(
    plan: &ExperimentPlan,
    instances: &[TaskInstance],
    library: &RoleLibrary,
    backend: &B,
    log_path: &Path,
    options: &ExecOptions,
) -> Result<ExecSummary, HarnessError> {
    plan.validate()?;
    let cells = plan.cells();
    let mut rosters = BTreeMap::new();
    for c in &cells {
        let r = library.require(c.expert_group, c.paradigm, c.size)?;
        rosters.insert((c.expert_group, c.paradigm, c.size), (r, r.fingerprint()));
    }
    let plan_fp = plan.fingerprint();

    let samples: BTreeMap<TaskDomain, Vec<&TaskInstance>> = plan
        .domains
        .iter()
        .map(|&d| (d, subsample(instances, d, plan.seed, plan.sample_limit)))
        .collect();

    let done: HashSet<RecordKey> = read_run_log(log_path)?.iter().map(RunRecord::key).collect();
    let mut summary = ExecSummary::default();
    let mut jobs = Vec::new();
    for cell in cells {
        let (roster, roster_fp) = &rosters[&(cell.expert_group, cell.paradigm, cell.size)];
        for inst in &samples[&cell.task_domain] {
            summary.total_jobs += 1;
            let key = (plan_fp.clone(), roster_fp.clone(), inst.instance_id.clone());
            if done.contains(&key) {
                summary.skipped += 1;
                continue;
            }
            jobs.push(Job {
                cell,
                roster,
                roster_fp: roster_fp.clone(),
                instance: inst,
            });
        }
    }
    if let Some(limit) = options.stop_after {
        jobs.truncate(limit);
    }
    tracing::info!(
        total = summary.total_jobs,
        skipped = summary.skipped,
        pending = jobs.len(),
        "executing plan"
    );

    let mut writer = RunLogWriter::open(log_path)?;
    let config = ConfigSnapshot {
        backend_profile: options.backend_profile.clone(),
        model: backend.model_name().to_string(),
        sampling: options.protocol.sampling.clone(),
        retries: options.protocol.retries,
    };
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = options.parallelism.max(1).min(jobs.len().max(1));

    std::thread::scope(|scope| -> Result<(), HarnessError> {
        let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, abort, config, plan_fp) = (&jobs, &next, &abort, &config, &plan_fp);
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let seq = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(seq) else { break };
                let (result, failure) =
                    match run_collaboration(job.roster, job.instance, backend, &options.protocol) {
                        Ok(r) => (r, None),
                        Err(f) => (f.partial, Some(f.error.to_string())),
                    };
                let record = RunRecord {
                    plan_fingerprint: plan_fp.clone(),
                    roster_fingerprint: job.roster_fp.clone(),
                    instance_id: job.instance.instance_id.clone(),
                    cell: job.cell,
                    result,
                    failure,
                    config: config.clone(),
                    created_at: chrono::Utc::now().to_rfc3339(),
                };
                if tx.send((seq, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // reorder buffer: write strictly in job order
        let mut pending = BTreeMap::new();
        let mut expected = 0usize;
        for (seq, rec) in rx {
            pending.insert(seq, rec);
            while let Some(rec) = pending.remove(&expected) {
                if let Err(e) = writer.append(&rec) {
                    abort.store(true, Ordering::Relaxed);
                    return Err(e);
                }
                if let Some(reason) = &rec.failure {
                    summary.failures += 1;
                    tracing::warn!(instance = %rec.instance_id, %reason, "instance failed");
                }
                summary.written += 1;
                expected += 1;
                if summary.written % 10 == 0 || expected == jobs.len() {
                    tracing::info!(written = summary.written, of = jobs.len(), "progress");
                }
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{MockBackend, MockScript};

    fn dataset(n: usize) -> Vec<TaskInstance> {
        (0..n)
            .map(|i| {
                TaskInstance::new(
                    format!("law{i:02}"),
                    TaskDomain::Law,
                    format!("q{i}"),
                    vec!["a".into(), "b".into(), "c".into(), "d".into()],
                    i % 4,
                )
                .unwrap()
            })
            .collect()
    }

    fn plan() -> ExperimentPlan {
        ExperimentPlan {
            dataset_path: "data.jsonl".into(),
            domains: vec![TaskDomain::Law],
            groups: vec![ExpertGroup::Law],
            paradigms: vec![Paradigm::StructuredWorkflow],
            sizes: vec![3],
            sample_limit: None,
            seed: 1,
            backend: "mock".into(),
            sampling: None,
        }
    }

    /// Every agent answers A; instances whose gold is A are correct.
    fn always_a() -> MockScript {
        let mut s = MockScript::default();
        for i in 0..10 {
            s = s
                .respond(&format!("law{i:02}"), 1, "\\boxed{A}")
                .respond(&format!("law{i:02}"), 2, "\\boxed{A}")
                .respond(&format!("law{i:02}"), 3, "\\boxed{A}");
        }
        s
    }

    #[test]
    fn plan_validation() {
        let mut p = plan();
        assert!(p.validate().is_ok());
        p.sizes = vec![4];
        assert!(p.validate().is_err());
        p = plan();
        p.sample_limit = Some(0);
        assert!(p.validate().is_err());
        p = plan();
        p.groups.clear();
        assert!(p.validate().is_err());
    }

    #[test]
    fn ten_instances_then_resume_is_free() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let data = dataset(10);
        let lib = RoleLibrary::shipped();
        let mock = MockBackend::new(always_a());
        let s = execute_plan(&plan(), &data, &lib, &mock, &log, &ExecOptions::default()).unwrap();
        assert_eq!(s.written, 10);
        assert_eq!(mock.call_count(), 30);
        let recs = read_run_log(&log).unwrap();
        assert_eq!(recs.len(), 10);
        // gold = i % 4, so ids 0, 4, 8 are correct
        assert_eq!(recs.iter().filter(|r| r.result.correct).count(), 3);

        let mock2 = MockBackend::new(always_a());
        let s2 = execute_plan(&plan(), &data, &lib, &mock2, &log, &ExecOptions::default()).unwrap();
        assert_eq!((s2.written, s2.skipped), (0, 10));
        assert_eq!(mock2.call_count(), 0);
    }

    #[test]
    fn missing_roster_fails_before_any_call() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = plan();
        p.sizes = vec![6];
        let mock = MockBackend::new(always_a());
        let err = execute_plan(
            &p,
            &dataset(3),
            &RoleLibrary::shipped(),
            &mock,
            &dir.path().join("l"),
            &ExecOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            HarnessError::Roles(RoleError::Missing { .. })
        ));
        assert_eq!(mock.call_count(), 0);
    }

    #[test]
    fn failures_are_recorded_not_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let mut script = always_a();
        script
            .failures
            .entry("law00".into())
            .or_default()
            .insert("3".into(), 9);
        let mock = MockBackend::new(script);
        let s = execute_plan(
            &plan(),
            &dataset(10),
            &RoleLibrary::shipped(),
            &mock,
            &log,
            &ExecOptions::default(),
        )
        .unwrap();
        assert_eq!(s.failures, 1);
        let recs = read_run_log(&log).unwrap();
        let failed = recs.iter().find(|r| r.instance_id == "law00").unwrap();
        assert!(failed.failed() && !failed.result.correct);
        assert_eq!(failed.result.turns.len(), 2);
    }

    #[test]
    fn parallel_run_writes_in_plan_order() {
        let dir = tempfile::tempdir().unwrap();
        let (seq_log, par_log) = (dir.path().join("s.jsonl"), dir.path().join("p.jsonl"));
        let data = dataset(10);
        let lib = RoleLibrary::shipped();
        execute_plan(
            &plan(),
            &data,
            &lib,
            &MockBackend::new(always_a()),
            &seq_log,
            &ExecOptions::default(),
        )
        .unwrap();
        let opts = ExecOptions {
            parallelism: 4,
            ..Default::default()
        };
        execute_plan(
            &plan(),
            &data,
            &lib,
            &MockBackend::new(always_a()),
            &par_log,
            &opts,
        )
        .unwrap();
        let ids = |p: &Path| {
            read_run_log(p)
                .unwrap()
                .into_iter()
                .map(|r| r.instance_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(&seq_log), ids(&par_log));
    }

    #[test]
    fn coverage_matches_cells_times_samples() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let mut p = plan();
        p.groups = vec![ExpertGroup::Law, ExpertGroup::Math];
        p.paradigms = Paradigm::ALL.to_vec();
        p.sample_limit = Some(4);
        let script =
            MockScript::default().with_fallback(crate::backends::mock::Fallback::Synthetic);
        let s = execute_plan(
            &p,
            &dataset(10),
            &RoleLibrary::shipped(),
            &MockBackend::new(script),
            &log,
            &ExecOptions::default(),
        )
        .unwrap();
        assert_eq!(s.written, 4 * 4);
        assert_eq!(read_run_log(&log).unwrap().len(), 16);
    }
}
