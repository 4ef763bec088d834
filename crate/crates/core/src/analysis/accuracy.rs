//! Accuracy matrix, alignment deltas and paradigm comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::harness::{Cell, RunRecord};
use crate::types::{ExpertGroup, Paradigm, ReasoningType, TaskDomain};

/// Exact counts for one cell. Accuracy is derived, never stored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub correct: u64,
    pub n_instances: u64,
    pub total_tokens: u64,
    pub failures: u64,
}

impl CellStats {
    pub fn accuracy(&self) -> f64 {
        if self.n_instances == 0 {
            0.0
        } else {
            self.correct as f64 / self.n_instances as f64
        }
    }

    pub fn tokens_per_instance(&self) -> f64 {
        if self.n_instances == 0 {
            0.0
        } else {
            self.total_tokens as f64 / self.n_instances as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyMatrix {
    pub cells: BTreeMap<Cell, CellStats>,
}

impl AccuracyMatrix {
    pub fn get(&self, cell: &Cell) -> Option<&CellStats> {
        self.cells.get(cell)
    }

    /// Builds a matrix directly from accuracies given as `correct / total`.
    pub fn from_counts(entries: impl IntoIterator<Item = (Cell, u64, u64, u64)>) -> Self {
        let cells = entries
            .into_iter()
            .map(|(cell, correct, n, tokens)| {
                (
                    cell,
                    CellStats {
                        correct,
                        n_instances: n,
                        total_tokens: tokens,
                        failures: 0,
                    },
                )
            })
            .collect();
        Self { cells }
    }
}

/// Tallies records per cell. Failed records count as incorrect.
pub fn compute_accuracy_matrix(records: &[RunRecord]) -> Result<AccuracyMatrix, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    let mut m = AccuracyMatrix::default();
    for r in records {
        let s = m.cells.entry(r.cell).or_default();
        s.n_instances += 1;
        s.correct += u64::from(r.result.correct && r.failure.is_none());
        s.failures += u64::from(r.failure.is_some());
        s.total_tokens += r.result.total_tokens();
    }
    Ok(m)
}

/// Aligned group versus the best misaligned group for one matrix slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentDelta {
    pub task_domain: TaskDomain,
    pub paradigm: Paradigm,
    pub size: usize,
    pub aligned_group: ExpertGroup,
    pub aligned_acc: f64,
    pub best_alternative_group: ExpertGroup,
    pub best_alternative_acc: f64,
    /// `aligned_acc - best_alternative_acc`, as a fraction.
    pub delta_abs: f64,
    /// `delta_abs / best_alternative_acc`; absent when the alternative scored 0.
    pub delta_rel: Option<f64>,
}

/// The default mapping: Math→Math, Business→Finance, Health→Medical, Law→Law.
pub fn default_alignment() -> BTreeMap<TaskDomain, ExpertGroup> {
    TaskDomain::ALL
        .iter()
        .map(|&d| (d, d.aligned_group()))
        .collect()
}

pub fn compute_alignment_deltas(
    matrix: &AccuracyMatrix,
    alignment: &BTreeMap<TaskDomain, ExpertGroup>,
) -> Result<Vec<AlignmentDelta>, AnalysisError> {
    // (domain, paradigm, size) -> group -> accuracy
    let mut slices: BTreeMap<(TaskDomain, Paradigm, usize), BTreeMap<ExpertGroup, f64>> =
        BTreeMap::new();
    for (c, s) in &matrix.cells {
        slices
            .entry((c.task_domain, c.paradigm, c.size))
            .or_default()
            .insert(c.expert_group, s.accuracy());
    }
    let mut out = Vec::new();
    for ((task_domain, paradigm, size), groups) in slices {
        let aligned_group = *alignment.get(&task_domain).ok_or_else(|| {
            AnalysisError::MissingCell(format!("no aligned group for {task_domain}"))
        })?;
        let aligned_acc = *groups.get(&aligned_group).ok_or_else(|| {
            AnalysisError::MissingCell(format!(
                "{task_domain}/{paradigm}/{size}: aligned group {aligned_group} absent"
            ))
        })?;
        let (best_alternative_group, best_alternative_acc) = groups
            .iter()
            .filter(|(g, _)| **g != aligned_group)
            .fold(
                None,
                |best: Option<(ExpertGroup, f64)>, (&g, &a)| match best {
                    Some((_, b)) if b >= a => best,
                    _ => Some((g, a)),
                },
            )
            .ok_or_else(|| {
                AnalysisError::MissingCell(format!(
                    "{task_domain}/{paradigm}/{size}: no alternative group"
                ))
            })?;
        let delta_abs = aligned_acc - best_alternative_acc;
        let delta_rel = (best_alternative_acc > 0.0).then(|| delta_abs / best_alternative_acc);
        out.push(AlignmentDelta {
            task_domain,
            paradigm,
            size,
            aligned_group,
            aligned_acc,
            best_alternative_group,
            best_alternative_acc,
            delta_abs,
            delta_rel,
        });
    }
    Ok(out)
}

/// Mean relative delta over contextual-reasoning domains, per (paradigm, size).
pub fn contextual_mean_delta_rel(deltas: &[AlignmentDelta]) -> BTreeMap<(Paradigm, usize), f64> {
    let mut acc: BTreeMap<(Paradigm, usize), (f64, usize)> = BTreeMap::new();
    for d in deltas {
        if d.task_domain.reasoning_type() != ReasoningType::Contextual {
            continue;
        }
        if let Some(rel) = d.delta_rel {
            let e = acc.entry((d.paradigm, d.size)).or_default();
            e.0 += rel;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

/// Relative advantage of diversity-driven over structured-workflow rosters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmComparison {
    pub task_domain: TaskDomain,
    pub expert_group: ExpertGroup,
    pub size: usize,
    pub diversity_acc: f64,
    pub workflow_acc: f64,
    /// `(diversity - workflow) / workflow`; absent when workflow scored 0.
    pub rel_advantage: Option<f64>,
}

pub fn compare_paradigms(matrix: &AccuracyMatrix) -> Vec<ParadigmComparison> {
    let mut out = Vec::new();
    for (c, s) in &matrix.cells {
        if c.paradigm != Paradigm::DiversityDriven {
            continue;
        }
        let wf = Cell {
            paradigm: Paradigm::StructuredWorkflow,
            ..*c
        };
        let Some(w) = matrix.get(&wf) else { continue };
        let (d, w) = (s.accuracy(), w.accuracy());
        out.push(ParadigmComparison {
            task_domain: c.task_domain,
            expert_group: c.expert_group,
            size: c.size,
            diversity_acc: d,
            workflow_acc: w,
            rel_advantage: (w > 0.0).then(|| (d - w) / w),
        });
    }
    out
}
