//! Append-only JSONL run log.
//!
//! One [`RunRecord`] per line. Readers keep the first record for each
//! `(plan_fingerprint, roster_fingerprint, instance_id)` key and ignore a
//! torn final line left by a killed writer; the writer cuts that torn
//! tail off before appending.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::backends::Sampling;
use crate::types::{CollaborationResult, ExpertGroup, Paradigm, TaskDomain};

/// The experiment-matrix coordinates of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub task_domain: TaskDomain,
    pub expert_group: ExpertGroup,
    pub paradigm: Paradigm,
    pub size: usize,
}

/// Settings in force when a record was produced. Never holds credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub backend_profile: String,
    pub model: String,
    pub sampling: Sampling,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub plan_fingerprint: String,
    pub roster_fingerprint: String,
    pub instance_id: String,
    pub cell: Cell,
    pub result: CollaborationResult,
    /// Terminal backend error, if the collaboration did not finish.
    pub failure: Option<String>,
    pub config: ConfigSnapshot,
    pub created_at: String,
}

pub type RecordKey = (String, String, String);

impl RunRecord {
    pub fn key(&self) -> RecordKey {
        (
            self.plan_fingerprint.clone(),
            self.roster_fingerprint.clone(),
            self.instance_id.clone(),
        )
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Reads and de-duplicates a run log. A missing file reads as empty.
pub fn read_run_log(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(HarnessError::Io {
                path: path.into(),
                source,
            })
        }
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(rec) => {
                if seen.insert(rec.key()) {
                    out.push(rec);
                }
            }
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => {
                return Err(HarnessError::Schema {
                    path: path.into(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Single writer appending whole lines.
#[derive(Debug)]
pub struct RunLogWriter {
    path: PathBuf,
    file: File,
}

impl RunLogWriter {
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        let io = |source| HarnessError::Io {
            path: path.into(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        truncate_torn_tail(&mut file).map_err(io)?;
        Ok(Self {
            path: path.into(),
            file,
        })
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<(), HarnessError> {
        let mut line = serde_json::to_vec(record).expect("run records serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|source| HarnessError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

fn truncate_torn_tail(file: &mut File) -> std::io::Result<()> {
    let len = file.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    file.seek(SeekFrom::Start(0))?;
    let mut buf = Vec::with_capacity(len as usize);
    file.read_to_end(&mut buf)?;
    if buf.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = buf.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    tracing::warn!(
        dropped = buf.len() - keep,
        "discarding torn final line of run log"
    );
    file.set_len(keep as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: &str, correct: bool) -> RunRecord {
        RunRecord {
            plan_fingerprint: "p".into(),
            roster_fingerprint: "r".into(),
            instance_id: id.into(),
            cell: Cell {
                task_domain: TaskDomain::Law,
                expert_group: ExpertGroup::Law,
                paradigm: Paradigm::DiversityDriven,
                size: 3,
            },
            result: CollaborationResult {
                instance_id: id.into(),
                roster_fingerprint: "r".into(),
                turns: vec![],
                system_answer: None,
                correct,
                wall_time_ms: 0,
            },
            failure: None,
            config: ConfigSnapshot {
                backend_profile: "mock".into(),
                model: "mock".into(),
                sampling: Sampling::default(),
                retries: 1,
            },
            created_at: "t".into(),
        }
    }

    #[test]
    fn missing_log_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_run_log(&dir.path().join("nope.jsonl"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn dedup_keeps_first() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("runs/log.jsonl");
        let mut w = RunLogWriter::open(&p).unwrap();
        w.append(&record("a", true)).unwrap();
        w.append(&record("a", false)).unwrap();
        w.append(&record("b", false)).unwrap();
        let recs = read_run_log(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].result.correct);
    }

    #[test]
    fn torn_tail_ignored_then_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        {
            let mut w = RunLogWriter::open(&p).unwrap();
            w.append(&record("a", true)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"{\"plan_fingerprint\":\"p\",\"rost").unwrap();
        drop(f);
        assert_eq!(read_run_log(&p).unwrap().len(), 1);

        let mut w = RunLogWriter::open(&p).unwrap();
        w.append(&record("b", true)).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_run_log(&p).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let good = serde_json::to_string(&record("a", true)).unwrap();
        fs::write(&p, format!("{good}\ngarbage\n{good}\n")).unwrap();
        assert!(matches!(
            read_run_log(&p),
            Err(HarnessError::Schema { line: 2, .. })
        ));
    }
}
