//! Serializable analysis bundle and its CSV / JSON / SVG rendering.
//!
//! Rendering is a pure function of the bundle, so writing the same bundle
//! twice gives byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    AccuracyMatrix, AlignmentDelta, AnalysisError, CellStats, DiversityReport, ParadigmComparison,
    RelevanceMatrix, ScalingReport, EXPERTISE_DOMAINS,
};
use crate::harness::Cell;
use crate::types::{ExpertGroup, Paradigm, TaskDomain};

/// Machine-readable output of `analyze`, input of `report`.
pub const ANALYSIS_FILE: &str = "analysis.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub cell: Cell,
    pub stats: CellStats,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualMean {
    pub paradigm: Paradigm,
    pub size: usize,
    pub mean_delta_rel: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub accuracy: Vec<AccuracyRow>,
    pub deltas: Vec<AlignmentDelta>,
    pub contextual_mean: Vec<ContextualMean>,
    pub paradigms: Vec<ParadigmComparison>,
    pub scaling: Option<ScalingReport>,
    pub diversity: Option<DiversityReport>,
    pub relevance: Option<RelevanceMatrix>,
    pub notes: Vec<String>,
}

impl AnalysisBundle {
    pub fn set_accuracy(&mut self, m: &AccuracyMatrix) {
        self.accuracy = m
            .cells
            .iter()
            .map(|(c, s)| AccuracyRow {
                cell: *c,
                stats: *s,
                accuracy: s.accuracy(),
            })
            .collect();
    }

    pub fn accuracy_matrix(&self) -> AccuracyMatrix {
        AccuracyMatrix {
            cells: self.accuracy.iter().map(|r| (r.cell, r.stats)).collect(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, AnalysisError> {
        let path = dir.join(ANALYSIS_FILE);
        let text = fs::read_to_string(&path).map_err(|source| AnalysisError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| AnalysisError::Format {
            path,
            reason: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, AnalysisError> {
        let path = dir.join(ANALYSIS_FILE);
        let text = serde_json::to_string_pretty(self).expect("bundle serializes") + "\n";
        write(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), AnalysisError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| AnalysisError::Io {
            path: dir.into(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| AnalysisError::Io {
        path: path.into(),
        source,
    })
}

fn num(x: f64) -> String {
    assert!(x.is_finite(), "non-finite value reached a report");
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn cell_cols(c: &Cell) -> Vec<String> {
    vec![
        c.task_domain.to_string(),
        c.expert_group.to_string(),
        c.paradigm.to_string(),
        c.size.to_string(),
    ]
}

const CELL_HEADER: [&str; 4] = ["task_domain", "expert_group", "paradigm", "size"];

fn with_cell(extra: &[&'static str]) -> Vec<&'static str> {
    CELL_HEADER.iter().chain(extra).copied().collect()
}

/// Renders every report file for `bundle` into `dir`. Returns the paths written.
pub fn write_report(bundle: &AnalysisBundle, dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();

    files.push((
        "accuracy.csv".into(),
        csv_bytes(
            &with_cell(&[
                "correct",
                "n_instances",
                "accuracy",
                "total_tokens",
                "failures",
            ]),
            bundle
                .accuracy
                .iter()
                .map(|r| {
                    let mut row = cell_cols(&r.cell);
                    row.extend([
                        r.stats.correct.to_string(),
                        r.stats.n_instances.to_string(),
                        num(r.accuracy),
                        r.stats.total_tokens.to_string(),
                        r.stats.failures.to_string(),
                    ]);
                    row
                })
                .collect(),
        ),
    ));

    files.push((
        "deltas.csv".into(),
        csv_bytes(
            &[
                "task_domain",
                "paradigm",
                "size",
                "aligned_group",
                "aligned_acc",
                "best_alternative_group",
                "best_alternative_acc",
                "delta_abs",
                "delta_rel",
                "delta_abs_pp",
                "delta_rel_pct",
            ],
            bundle
                .deltas
                .iter()
                .map(|d| {
                    vec![
                        d.task_domain.to_string(),
                        d.paradigm.to_string(),
                        d.size.to_string(),
                        d.aligned_group.to_string(),
                        num(d.aligned_acc),
                        d.best_alternative_group.to_string(),
                        num(d.best_alternative_acc),
                        num(d.delta_abs),
                        opt(d.delta_rel),
                        pct(d.delta_abs),
                        d.delta_rel.map(pct).unwrap_or_default(),
                    ]
                })
                .collect(),
        ),
    ));

    if !bundle.paradigms.is_empty() {
        files.push((
            "paradigms.csv".into(),
            csv_bytes(
                &[
                    "task_domain",
                    "expert_group",
                    "size",
                    "diversity_acc",
                    "workflow_acc",
                    "rel_advantage",
                ],
                bundle
                    .paradigms
                    .iter()
                    .map(|p| {
                        vec![
                            p.task_domain.to_string(),
                            p.expert_group.to_string(),
                            p.size.to_string(),
                            num(p.diversity_acc),
                            num(p.workflow_acc),
                            opt(p.rel_advantage),
                        ]
                    })
                    .collect(),
            ),
        ));
    }

    if let Some(s) = &bundle.scaling {
        files.push((
            "pot.csv".into(),
            csv_bytes(
                &with_cell(&[
                    "baseline_acc",
                    "acc",
                    "baseline_tokens",
                    "tokens",
                    "perf_improvement_rel",
                    "token_overhead_rel",
                    "pot",
                ]),
                s.entries
                    .iter()
                    .map(|e| {
                        let mut row = cell_cols(&e.cell);
                        row.extend(
                            [
                                e.baseline_acc,
                                e.acc,
                                e.baseline_tokens,
                                e.tokens,
                                e.perf_improvement_rel,
                                e.token_overhead_rel,
                                e.pot,
                            ]
                            .map(num),
                        );
                        row
                    })
                    .collect(),
            ),
        ));
        files.push((
            "pot_skipped.csv".into(),
            csv_bytes(
                &with_cell(&["note"]),
                s.skipped
                    .iter()
                    .map(|k| {
                        let mut row = cell_cols(&k.cell);
                        row.push(k.note.clone());
                        row
                    })
                    .collect(),
            ),
        ));
    }

    if let Some(d) = &bundle.diversity {
        let mut header = with_cell(&["aggregation", "count", "mean", "median"]);
        header.extend([
            "p10", "p20", "p30", "p40", "p50", "p60", "p70", "p80", "p90",
        ]);
        let mut rows = Vec::new();
        for c in &d.cells {
            for (name, dist) in [("pooled", &c.pooled), ("per_instance", &c.per_instance)] {
                let mut row = cell_cols(&c.cell);
                row.extend([
                    name.to_string(),
                    dist.count.to_string(),
                    num(dist.mean),
                    num(dist.median),
                ]);
                row.extend(dist.deciles.iter().map(|&x| num(x)));
                rows.push(row);
            }
        }
        files.push(("diversity.csv".into(), csv_bytes(&header, rows)));

        let mut rows = Vec::new();
        for inst in &d.instances {
            for p in &inst.pairs {
                let mut row = cell_cols(&inst.cell);
                row.extend([
                    inst.instance_id.clone(),
                    p.i.to_string(),
                    p.j.to_string(),
                    num(p.similarity),
                ]);
                rows.push(row);
            }
        }
        files.push((
            "diversity_pairs.csv".into(),
            csv_bytes(
                &with_cell(&["instance_id", "agent_i", "agent_j", "similarity"]),
                rows,
            ),
        ));
    }

    if let Some(r) = &bundle.relevance {
        let mut header = vec!["task_domain"];
        header.extend(EXPERTISE_DOMAINS.iter().map(|d| d.name()));
        header.extend(["sampled", "dropped"]);
        let rows = r
            .rows
            .iter()
            .map(|(d, row)| {
                let mut v = vec![d.to_string()];
                v.extend(
                    EXPERTISE_DOMAINS
                        .iter()
                        .map(|e| r.count(*d, *e).to_string()),
                );
                v.extend([row.sampled.to_string(), row.dropped.to_string()]);
                v
            })
            .collect();
        files.push(("relevance.csv".into(), csv_bytes(&header, rows)));

        let labels: Vec<String> = r.rows.keys().map(|d| d.to_string()).collect();
        let cols: Vec<String> = EXPERTISE_DOMAINS.iter().map(|d| d.to_string()).collect();
        let values: Vec<Vec<f64>> = r
            .rows
            .keys()
            .map(|d| {
                EXPERTISE_DOMAINS
                    .iter()
                    .map(|e| r.count(*d, *e) as f64)
                    .collect()
            })
            .collect();
        files.push((
            "relevance.svg".into(),
            heatmap_svg("Expertise relevance", &labels, &cols, &values, |v| {
                format!("{v}")
            })
            .into_bytes(),
        ));
    }

    for (paradigm, size, svg) in accuracy_heatmaps(bundle) {
        files.push((
            format!("accuracy_{}_{size}.svg", paradigm.slug()),
            svg.into_bytes(),
        ));
    }

    files.push(("summary.json".into(), summary_json(bundle)));

    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        write(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn summary_json(b: &AnalysisBundle) -> Vec<u8> {
    let deltas: Vec<_> = b
        .deltas
        .iter()
        .map(|d| {
            serde_json::json!({
                "task_domain": d.task_domain,
                "paradigm": d.paradigm,
                "size": d.size,
                "aligned_group": d.aligned_group,
                "best_alternative_group": d.best_alternative_group,
                "delta_abs_pp": pct(d.delta_abs),
                "delta_rel_pct": d.delta_rel.map(pct),
            })
        })
        .collect();
    let v = serde_json::json!({
        "cells": b.accuracy.len(),
        "records": b.accuracy.iter().map(|r| r.stats.n_instances).sum::<u64>(),
        "failures": b.accuracy.iter().map(|r| r.stats.failures).sum::<u64>(),
        "deltas": deltas,
        "contextual_mean_delta_rel_pct": b.contextual_mean.iter().map(|c| serde_json::json!({
            "paradigm": c.paradigm, "size": c.size, "value": pct(c.mean_delta_rel),
        })).collect::<Vec<_>>(),
        "pot_entries": b.scaling.as_ref().map(|s| s.entries.len()),
        "pot_skipped": b.scaling.as_ref().map(|s| s.skipped.len()),
        "diversity_instances": b.diversity.as_ref().map(|d| d.instances.len()),
        "relevance_dropped": b.relevance.as_ref().map(|r| r.rows.values().map(|x| x.dropped).sum::<usize>()),
        "notes": b.notes,
    });
    let mut out = serde_json::to_vec_pretty(&v).expect("summary serializes");
    out.push(b'\n');
    out
}

fn accuracy_heatmaps(b: &AnalysisBundle) -> Vec<(Paradigm, usize, String)> {
    let mut slices: BTreeMap<(Paradigm, usize), BTreeMap<(TaskDomain, ExpertGroup), f64>> =
        BTreeMap::new();
    for r in &b.accuracy {
        slices
            .entry((r.cell.paradigm, r.cell.size))
            .or_default()
            .insert((r.cell.task_domain, r.cell.expert_group), r.accuracy);
    }
    slices
        .into_iter()
        .map(|((p, n), cells)| {
            let rows: Vec<TaskDomain> = TaskDomain::ALL
                .into_iter()
                .filter(|d| cells.keys().any(|k| k.0 == *d))
                .collect();
            let cols: Vec<ExpertGroup> = ExpertGroup::ALL
                .into_iter()
                .filter(|g| cells.keys().any(|k| k.1 == *g))
                .collect();
            let values: Vec<Vec<f64>> = rows
                .iter()
                .map(|d| {
                    cols.iter()
                        .map(|g| cells.get(&(*d, *g)).copied().unwrap_or(f64::NAN))
                        .collect()
                })
                .collect();
            let svg = heatmap_svg(
                &format!("Accuracy, {p}, n={n}"),
                &rows.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
                &cols.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
                &values,
                |v| format!("{:.1}", v * 100.0),
            );
            (p, n, svg)
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Grid of labelled squares, shaded linearly between the min and max value.
/// NaN entries mark absent cells and are drawn grey without a label.
pub fn heatmap_svg(
    title: &str,
    rows: &[String],
    cols: &[String],
    values: &[Vec<f64>],
    label: impl Fn(f64) -> String,
) -> String {
    const CELL: usize = 64;
    const LEFT: usize = 110;
    const TOP: usize = 56;
    let finite = values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let width = LEFT + CELL * cols.len() + 10;
    let height = TOP + CELL * rows.len() + 10;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s += &format!(
        "<text x=\"10\" y=\"18\" font-size=\"14\">{}</text>\n",
        escape(title)
    );
    for (j, c) in cols.iter().enumerate() {
        let x = LEFT + j * CELL + CELL / 2;
        s += &format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            TOP - 8,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + i * CELL;
        s += &format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            LEFT - 8,
            y + CELL / 2 + 4,
            escape(r)
        );
        for (j, &v) in values[i].iter().enumerate() {
            let x = LEFT + j * CELL;
            if !v.is_finite() {
                s += &format!("<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"#dddddd\"/>\n");
                continue;
            }
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let shade = |from: f64, to: f64| (from + (to - from) * t).round() as u8;
            let fill = format!(
                "#{:02x}{:02x}{:02x}",
                shade(247.0, 8.0),
                shade(251.0, 48.0),
                shade(255.0, 107.0)
            );
            let ink = if t > 0.5 { "#ffffff" } else { "#000000" };
            s += &format!("<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#ffffff\"/>\n");
            s += &format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{}</text>\n",
                x + CELL / 2,
                y + CELL / 2 + 4,
                escape(&label(v))
            );
        }
    }
    s += "</svg>\n";
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> AnalysisBundle {
        let c = |g| Cell {
            task_domain: TaskDomain::Law,
            expert_group: g,
            paradigm: Paradigm::DiversityDriven,
            size: 3,
        };
        let m = AccuracyMatrix::from_counts([
            (c(ExpertGroup::Law), 21, 100, 500),
            (c(ExpertGroup::Math), 19, 100, 400),
        ]);
        let mut b = AnalysisBundle::default();
        b.set_accuracy(&m);
        b.deltas =
            super::super::compute_alignment_deltas(&m, &super::super::default_alignment()).unwrap();
        b
    }

    #[test]
    fn rendering_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle();
        b.save(dir.path()).unwrap();
        let first: Vec<_> = write_report(&b, dir.path())
            .unwrap()
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect();
        let again = AnalysisBundle::load(dir.path()).unwrap();
        assert_eq!(again, b);
        let second: Vec<_> = write_report(&again, dir.path())
            .unwrap()
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect();
        assert_eq!(first, second);
    }

    #[test]
    fn deltas_csv_rounds_only_presentation_columns() {
        let dir = tempfile::tempdir().unwrap();
        write_report(&bundle(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("deltas.csv")).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.ends_with(",2.0,10.5"), "{line}");
    }

    #[test]
    fn svg_shades_extremes() {
        let svg = heatmap_svg(
            "t",
            &["a".into()],
            &["x".into(), "y".into()],
            &[vec![0.0, 1.0]],
            |v| v.to_string(),
        );
        assert!(svg.contains("#f7fbff"));
        assert!(svg.contains("#08306b"));
        assert!(svg.starts_with("<svg"));
    }
}
