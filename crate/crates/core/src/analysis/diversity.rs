//! Pairwise semantic similarity between agent outputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::backends::{Embedder, EmbeddingVector};
use crate::harness::{Cell, RunRecord};

/// Cosine similarity, clamped to `[-1, 1]`. A zero vector scores 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(
        a.len(),
        b.len(),
        "cosine of vectors with different dimensions"
    );
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSimilarity {
    /// 1-based agent indices, `i < j`.
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
}

/// All `n(n-1)/2` unordered pairs, in `(i, j)` lexicographic order.
pub fn pairwise_similarities(vectors: &[EmbeddingVector]) -> Vec<PairSimilarity> {
    let mut out = Vec::with_capacity(vectors.len() * vectors.len().saturating_sub(1) / 2);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            out.push(PairSimilarity {
                i: i + 1,
                j: j + 1,
                similarity: cosine_similarity(&vectors[i].values, &vectors[j].values),
            });
        }
    }
    out
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// 10th through 90th percentiles.
    pub deciles: [f64; 9],
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut deciles = [0.0; 9];
        for (k, d) in deciles.iter_mut().enumerate() {
            *d = quantile(&sorted, (k + 1) as f64 / 10.0);
        }
        Some(Self {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(&sorted, 0.5),
            deciles,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDiversity {
    pub cell: Cell,
    pub instance_id: String,
    pub pairs: Vec<PairSimilarity>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiversity {
    pub cell: Cell,
    /// Every pair from every instance in the cell.
    pub pooled: Distribution,
    /// One value per instance: its mean pair similarity.
    pub per_instance: Distribution,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub instances: Vec<InstanceDiversity>,
    pub cells: Vec<CellDiversity>,
    /// Records left out because they failed or had fewer than two turns.
    pub skipped: usize,
}

pub fn compute_diversity<E: Embedder + ?Sized>(
    records: &[RunRecord],
    embedder: &E,
) -> Result<DiversityReport, AnalysisError> {
    let mut report = DiversityReport::default();
    for r in records {
        if r.failed() || r.result.turns.len() < 2 {
            report.skipped += 1;
            continue;
        }
        let texts: Vec<String> = r
            .result
            .turns
            .iter()
            .map(|t| t.full_output.clone())
            .collect();
        let vectors = embedder.embed(&texts)?;
        let pairs = pairwise_similarities(&vectors);
        let mean = pairs.iter().map(|p| p.similarity).sum::<f64>() / pairs.len() as f64;
        report.instances.push(InstanceDiversity {
            cell: r.cell,
            instance_id: r.instance_id.clone(),
            pairs,
            mean,
        });
    }
    if report.instances.is_empty() {
        return Err(AnalysisError::Precondition(
            "no completed multi-agent records to measure".into(),
        ));
    }
    let mut by_cell: BTreeMap<Cell, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for inst in &report.instances {
        let e = by_cell.entry(inst.cell).or_default();
        e.0.extend(inst.pairs.iter().map(|p| p.similarity));
        e.1.push(inst.mean);
    }
    report.cells = by_cell
        .into_iter()
        .map(|(cell, (pooled, means))| CellDiversity {
            cell,
            pooled: Distribution::of(&pooled).expect("non-empty"),
            per_instance: Distribution::of(&means).expect("non-empty"),
        })
        .collect();
    Ok(report)
}
