use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::Threshold;
use crate::model::{Result, SyncGraph};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PipelineCount {
    pub pipeline: String,
    /// Missing relations of this shape in one instance of the pipeline.
    pub occurrences: u64,
    pub instances: u64,
}

impl PipelineCount {
    pub fn count(&self) -> u64 {
        self.occurrences * self.instances
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DistributionRow {
    pub depth: u64,
    pub width: u32,
    pub counts: Vec<PipelineCount>,
    pub total: u64,
}

/// Missing relations grouped by (depth, width) across several pipelines.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DistributionReport {
    pub rows: Vec<DistributionRow>,
}

impl DistributionReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// One line per (row, pipeline); `count` already includes the instance
    /// multiplicity and `total` repeats the row total.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("depth\twidth\tpipeline\tcount\ttotal\n");
        for row in &self.rows {
            for c in &row.counts {
                let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", row.depth, row.width, c.pipeline, c.count(), row.total);
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let lines: Vec<serde_json::Value> = self
            .rows
            .iter()
            .flat_map(|row| {
                row.counts.iter().map(move |c| {
                    serde_json::json!({
                        "depth": row.depth,
                        "width": row.width,
                        "pipeline": c.pipeline,
                        "occurrences": c.occurrences,
                        "instances": c.instances,
                        "count": c.count(),
                        "total": row.total,
                    })
                })
            })
            .collect();
        serde_json::Value::Array(lines)
    }
}

/// Groups the missing relations of each `(name, graph, instances)` entry by
/// (depth, width), keeping rows with `depth >= min_depth`. Graphs must be
/// balanced.
pub fn report_distribution(inputs: &[(&str, &SyncGraph, u64)], min_depth: u64) -> Result<DistributionReport> {
    let mut table: BTreeMap<(u64, u32), Vec<PipelineCount>> = BTreeMap::new();
    for &(name, graph, instances) in inputs {
        let mut local: BTreeMap<(u64, u32), u64> = BTreeMap::new();
        for m in graph.missing_relations()? {
            if m.depth >= min_depth {
                *local.entry((m.depth, m.width)).or_default() += 1;
            }
        }
        for (key, occurrences) in local {
            table.entry(key).or_default().push(PipelineCount {
                pipeline: name.to_string(),
                occurrences,
                instances,
            });
        }
    }
    let rows = table
        .into_iter()
        .map(|((depth, width), counts)| {
            let total = counts.iter().map(PipelineCount::count).sum();
            DistributionRow { depth, width, counts, total }
        })
        .collect();
    Ok(DistributionReport { rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SweepCandidate {
    pub depth: Threshold,
    pub width: Threshold,
    /// Propagations that become FIFOs under this candidate.
    pub fifos: usize,
}

/// Candidate FIFO thresholds for the missing relations of a balanced graph.
pub fn sweep_thresholds(graph: &SyncGraph) -> Result<Vec<SweepCandidate>> {
    let shapes: Vec<(u64, u32)> = graph.missing_relations()?.iter().map(|m| (m.depth, m.width)).collect();
    Ok(sweep_thresholds_for(&shapes))
}

/// Every observed depth (at least 2) crossed with every observed width,
/// with pairs collapsed when they send the same propagations to FIFOs.
/// Each group is represented by its tightest pair; the no-FIFO baseline
/// `(inf, inf)` comes last.
pub fn sweep_thresholds_for(shapes: &[(u64, u32)]) -> Vec<SweepCandidate> {
    let depths: BTreeSet<u64> = shapes.iter().map(|s| s.0).filter(|&d| d >= 2).collect();
    let widths: BTreeSet<u32> = shapes.iter().map(|s| s.1).collect();
    let mut groups: BTreeMap<Vec<bool>, (u64, u32)> = BTreeMap::new();
    for &d in &depths {
        for &w in &widths {
            let partition: Vec<bool> = shapes.iter().map(|&(l, sw)| l >= 2 && l >= d && sw >= w).collect();
            let rep = groups.entry(partition).or_insert((d, w));
            *rep = (rep.0.max(d), rep.1.max(w));
        }
    }
    let mut out: Vec<SweepCandidate> = groups
        .into_iter()
        .map(|(partition, (d, w))| SweepCandidate {
            depth: Threshold::At(d),
            width: Threshold::At(w as u64),
            fifos: partition.iter().filter(|&&b| b).count(),
        })
        .collect();
    out.sort();
    out.push(SweepCandidate { depth: Threshold::Infinite, width: Threshold::Infinite, fifos: 0 });
    out
}
