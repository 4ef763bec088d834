//! Aggregate metrics over run logs and their on-disk reports.

use std::path::PathBuf;

use crate::backends::BackendError;
use crate::harness::HarnessError;

mod accuracy;
mod diversity;
mod relevance;
pub mod report;
mod scaling;

pub use accuracy::{
    compare_paradigms, compute_accuracy_matrix, compute_alignment_deltas,
    contextual_mean_delta_rel, default_alignment, AccuracyMatrix, AlignmentDelta, CellStats,
    ParadigmComparison,
};
pub use diversity::{
    compute_diversity, cosine_similarity, pairwise_similarities, CellDiversity, Distribution,
    DiversityReport, InstanceDiversity, PairSimilarity,
};
pub use relevance::{
    build_relevance_matrix, parse_relevance, render_relevance_prompt, RelevanceMatrix,
    RelevanceRow, EXPERTISE_DOMAINS, RELEVANCE_SYSTEM_PROMPT,
};
pub use report::{AnalysisBundle, ANALYSIS_FILE};
pub use scaling::{
    compute_scaling_report, performance_over_tokens, ScalingEntry, ScalingReport, SkippedCell,
};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("run log holds no records")]
    EmptyLog,
    #[error("missing cell: {0}")]
    MissingCell(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("every relevance response was invalid")]
    AllInvalid,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}
