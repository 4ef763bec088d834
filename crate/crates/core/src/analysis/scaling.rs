//! Performance gained per unit of extra token spend as rosters grow.

use serde::{Deserialize, Serialize};

use super::{AccuracyMatrix, AnalysisError};
use crate::harness::Cell;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingEntry {
    pub cell: Cell,
    pub baseline_acc: f64,
    pub acc: f64,
    /// Mean tokens per instance.
    pub baseline_tokens: f64,
    pub tokens: f64,
    pub perf_improvement_rel: f64,
    pub token_overhead_rel: f64,
    pub pot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub cell: Cell,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub baseline_size: usize,
    pub entries: Vec<ScalingEntry>,
    pub skipped: Vec<SkippedCell>,
}

/// `(perf_improvement_rel, token_overhead_rel, pot)`, or why it is undefined.
pub fn performance_over_tokens(
    baseline_acc: f64,
    acc: f64,
    baseline_tokens: f64,
    tokens: f64,
) -> Result<(f64, f64, f64), &'static str> {
    if baseline_acc <= 0.0 {
        return Err("baseline accuracy is zero");
    }
    if baseline_tokens <= 0.0 {
        return Err("baseline token count is zero");
    }
    let perf = (acc - baseline_acc) / baseline_acc;
    let overhead = (tokens - baseline_tokens) / baseline_tokens;
    if overhead <= 0.0 {
        return Err("token overhead is not positive");
    }
    Ok((perf, overhead, perf / overhead))
}

/// Compares every non-baseline cell with the baseline-size cell of the
/// same domain, group and paradigm.
pub fn compute_scaling_report(
    matrix: &AccuracyMatrix,
    baseline_size: usize,
) -> Result<ScalingReport, AnalysisError> {
    let mut report = ScalingReport {
        baseline_size,
        ..Default::default()
    };
    for (cell, stats) in &matrix.cells {
        if cell.size == baseline_size {
            continue;
        }
        let base_cell = Cell {
            size: baseline_size,
            ..*cell
        };
        let base = matrix.get(&base_cell).ok_or_else(|| {
            AnalysisError::MissingCell(format!(
                "{}/{}/{}: no size-{baseline_size} baseline",
                cell.task_domain, cell.expert_group, cell.paradigm
            ))
        })?;
        let (ba, a) = (base.accuracy(), stats.accuracy());
        let (bt, t) = (base.tokens_per_instance(), stats.tokens_per_instance());
        match performance_over_tokens(ba, a, bt, t) {
            Ok((perf, overhead, pot)) => report.entries.push(ScalingEntry {
                cell: *cell,
                baseline_acc: ba,
                acc: a,
                baseline_tokens: bt,
                tokens: t,
                perf_improvement_rel: perf,
                token_overhead_rel: overhead,
                pot,
            }),
            Err(note) => report.skipped.push(SkippedCell {
                cell: *cell,
                note: note.into(),
            }),
        }
    }
    Ok(report)
}
