//! Threshold sweeps. Every candidate policy is elaborated and checked
//! against the baseline by simulation before anything is written.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::flow::{elaborate, Elaboration, FlowError};
use crate::model::SyncGraph;
use crate::netlist::{CellCounts, DotOptions};
use crate::protocol::Protocol;
use crate::resolve::{balance_merges, sweep_thresholds, PrimitivePolicy, ShiftregMode, Strategy, Threshold};
use crate::sim::{check_equivalence, SimError, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("variant `{variant}`: {source}")]
    Sim { variant: String, source: SimError },
    #[error("variant `{variant}` is not equivalent to the baseline: {verdict}")]
    NotEquivalent { variant: String, verdict: Verdict },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub protocol: Protocol,
    pub trials: usize,
    pub cycles: usize,
    pub seed: u64,
    /// Test hook: corrupt one operator in the named variant before checking.
    pub inject_fault: Option<String>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { protocol: Protocol::Raw, trials: 8, cycles: 500, seed: 1, inject_fault: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariantPlan {
    pub name: String,
    pub strategy: Strategy,
}

fn threshold_tag(t: Threshold) -> String {
    match t {
        Threshold::At(n) => n.to_string(),
        Threshold::Infinite => "inf".into(),
    }
}

/// Shift-register-mode baselines first (`auto` is the reference), then one
/// FIFO variant per finite sweep candidate.
pub fn plan_variants(graph: &SyncGraph) -> Result<Vec<VariantPlan>, FlowError> {
    let balanced = balance_merges(graph)?;
    let mut plans = vec![
        VariantPlan { name: "auto".into(), strategy: Strategy::DirectBackward(PrimitivePolicy::auto()) },
        VariantPlan { name: "force_reg".into(), strategy: Strategy::DirectBackward(PrimitivePolicy::chains(ShiftregMode::ForceReg)) },
        VariantPlan { name: "force_srl".into(), strategy: Strategy::DirectBackward(PrimitivePolicy::chains(ShiftregMode::ForceSrl)) },
    ];
    for c in sweep_thresholds(&balanced)? {
        if c.depth == Threshold::Infinite && c.width == Threshold::Infinite {
            continue;
        }
        let policy = PrimitivePolicy { depth_threshold: c.depth, width_threshold: c.width, shiftreg: ShiftregMode::Auto };
        plans.push(VariantPlan {
            name: format!("fifo_d{}_w{}", threshold_tag(c.depth), threshold_tag(c.width)),
            strategy: Strategy::DirectBackward(policy),
        });
    }
    Ok(plans)
}

#[derive(Clone, Debug, Serialize)]
pub struct CellDelta {
    pub reg: i64,
    pub reg_bits: i64,
    pub shift_reg: i64,
    pub fifo: i64,
    pub counter: i64,
    pub comb: i64,
}

impl CellDelta {
    fn between(base: &CellCounts, c: &CellCounts) -> Self {
        let d = |a: usize, b: usize| b as i64 - a as i64;
        CellDelta {
            reg: d(base.reg, c.reg),
            reg_bits: c.reg_bits as i64 - base.reg_bits as i64,
            shift_reg: d(base.shift_reg, c.shift_reg),
            fifo: d(base.fifo, c.fifo),
            counter: d(base.counter, c.counter),
            comb: d(base.comb, c.comb),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PolicySummary {
    pub depth_threshold: String,
    pub width_threshold: String,
    pub shiftreg: ShiftregMode,
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantManifest {
    pub variant: String,
    pub pipeline: String,
    pub strategy: String,
    pub protocol: Protocol,
    pub policy: PolicySummary,
    pub latency: Vec<crate::netlist::OutputLatency>,
    pub cells: CellCounts,
    pub delta_vs_baseline: CellDelta,
    pub equivalence: String,
    /// Other candidates that lowered to the identical circuit.
    pub aliases: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepIndex {
    pub pipeline: String,
    pub protocol: Protocol,
    pub baseline: String,
    pub trials: usize,
    pub cycles: usize,
    pub seed: u64,
    pub variants: Vec<IndexEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IndexEntry {
    pub variant: String,
    pub dir: String,
    pub strategy: String,
    pub fifos: usize,
    pub cells: CellCounts,
    pub delta_vs_baseline: CellDelta,
}

pub struct SweepVariant {
    pub manifest: VariantManifest,
    pub verilog: String,
    pub dot: String,
}

pub struct SweepOutcome {
    pub index: SweepIndex,
    pub variants: Vec<SweepVariant>,
}

/// Elaborates every planned variant in parallel, drops variants whose
/// Verilog is identical to an earlier one, and checks each survivor
/// against the `auto` baseline. Nothing is written here.
pub fn run_sweep(graph: &SyncGraph, options: &SweepOptions) -> Result<SweepOutcome, SweepError> {
    let plans = plan_variants(graph)?;
    let elaborated: Vec<(VariantPlan, Elaboration, String)> = plans
        .into_par_iter()
        .map(|plan| {
            let mut e = elaborate(graph, &plan.strategy, options.protocol)?;
            if options.inject_fault.as_deref() == Some(plan.name.as_str()) {
                e.netlist.inject_fault();
            }
            let verilog = e.verilog(None);
            Ok((plan, e, verilog))
        })
        .collect::<Result<_, FlowError>>()?;

    let mut kept: Vec<(VariantPlan, Elaboration, String, Vec<String>)> = Vec::new();
    for (plan, e, verilog) in elaborated {
        match kept.iter_mut().find(|k| k.2 == verilog) {
            Some(k) => k.3.push(plan.name),
            None => kept.push((plan, e, verilog, Vec::new())),
        }
    }

    let baseline = &kept[0].1.netlist;
    let verdicts: Vec<Result<Verdict, SweepError>> = kept
        .par_iter()
        .map(|(plan, e, _, _)| {
            let v = check_equivalence(baseline, &e.netlist, options.trials, options.cycles, options.seed)
                .map_err(|source| SweepError::Sim { variant: plan.name.clone(), source })?;
            if !v.is_ok() {
                return Err(SweepError::NotEquivalent { variant: plan.name.clone(), verdict: v });
            }
            Ok(v)
        })
        .collect();

    let base_cells = baseline.cell_counts();
    let mut variants = Vec::new();
    for ((plan, e, _, aliases), verdict) in kept.iter().zip(verdicts) {
        let verdict = verdict?;
        let policy = e.policy;
        let header = format!("{} variant {} ({})", graph.name, plan.name, plan.strategy);
        let cells = e.netlist.cell_counts();
        let manifest = VariantManifest {
            variant: plan.name.clone(),
            pipeline: graph.name.clone(),
            strategy: plan.strategy.to_string(),
            protocol: options.protocol,
            policy: PolicySummary {
                depth_threshold: threshold_tag(policy.depth_threshold),
                width_threshold: threshold_tag(policy.width_threshold),
                shiftreg: policy.shiftreg,
            },
            latency: e.netlist.latencies.clone(),
            cells,
            delta_vs_baseline: CellDelta::between(&base_cells, &cells),
            equivalence: verdict.to_string(),
            aliases: aliases.clone(),
        };
        variants.push(SweepVariant {
            manifest,
            verilog: e.verilog(Some(header)),
            dot: e.dot(&DotOptions { color: false }),
        });
    }

    let index = SweepIndex {
        pipeline: graph.name.clone(),
        protocol: options.protocol,
        baseline: variants[0].manifest.variant.clone(),
        trials: options.trials,
        cycles: options.cycles,
        seed: options.seed,
        variants: variants
            .iter()
            .map(|v| IndexEntry {
                variant: v.manifest.variant.clone(),
                dir: v.manifest.variant.clone(),
                strategy: v.manifest.strategy.clone(),
                fifos: v.manifest.cells.fifo,
                cells: v.manifest.cells,
                delta_vs_baseline: v.manifest.delta_vs_baseline.clone(),
            })
            .collect(),
    };
    Ok(SweepOutcome { index, variants })
}

fn write(path: PathBuf, contents: &str) -> Result<(), SweepError> {
    fs::write(&path, contents).map_err(|source| SweepError::Io { path, source })
}

impl SweepOutcome {
    /// Writes `<dir>/<variant>/{<pipeline>.v, <pipeline>.dot, manifest.json}`
    /// and `<dir>/index.json`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SweepError> {
        let pipeline = &self.index.pipeline;
        for v in &self.variants {
            let sub = dir.join(&v.manifest.variant);
            fs::create_dir_all(&sub).map_err(|source| SweepError::Io { path: sub.clone(), source })?;
            write(sub.join(format!("{pipeline}.v")), &v.verilog)?;
            write(sub.join(format!("{pipeline}.dot")), &v.dot)?;
            let manifest = serde_json::to_string_pretty(&v.manifest).expect("manifest serializes");
            write(sub.join("manifest.json"), &(manifest + "\n"))?;
        }
        let index = serde_json::to_string_pretty(&self.index).expect("index serializes");
        write(dir.join("index.json"), &(index + "\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn quick() -> SweepOptions {
        SweepOptions { trials: 2, cycles: 120, ..SweepOptions::default() }
    }

    #[test]
    fn delayed_running_example_has_fifo_variant() {
        let g = fixtures::running_example_delay().build().unwrap();
        let out = run_sweep(&g, &quick()).unwrap();
        let names: Vec<&str> = out.index.variants.iter().map(|v| v.variant.as_str()).collect();
        assert_eq!(names[0], "auto");
        let fifo = out.index.variants.iter().find(|v| v.variant == "fifo_d4_w4").expect("fifo variant");
        assert_eq!(fifo.fifos, 1);
        assert!(fifo.delta_vs_baseline.reg < 0);
        assert!(names.contains(&"force_reg") && names.contains(&"force_srl"));
    }

    #[test]
    fn shallow_pipeline_keeps_one_variant() {
        let g = fixtures::passthrough().build().unwrap();
        let out = run_sweep(&g, &quick()).unwrap();
        assert_eq!(out.index.variants.len(), 1);
        assert_eq!(out.variants[0].manifest.aliases, vec!["force_reg", "force_srl"]);
    }

    #[test]
    fn faulty_variant_aborts_the_sweep() {
        let g = fixtures::running_example_delay().build().unwrap();
        let opts = SweepOptions { inject_fault: Some("force_srl".into()), ..quick() };
        match run_sweep(&g, &opts) {
            Err(SweepError::NotEquivalent { variant, .. }) => assert_eq!(variant, "force_srl"),
            other => panic!("{:?}", other.map(|o| o.index)),
        }
    }
}
