mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use config::{ConfigError, RunConfig};
use pipeforge::bits::Bits;
use pipeforge::explore::{run_sweep, SweepError, SweepOptions};
use pipeforge::flow::{elaborate, FlowError};
use pipeforge::model::{ModelError, SyncGraph};
use pipeforge::netlist::{emit_dot, Cell, DotOptions, Netlist};
use pipeforge::protocol::Protocol;
use pipeforge::resolve::{balance_merges, report_distribution};
use pipeforge::sim::{self, check_golden, measured_latency, SimError, Stimulus};
use pipeforge::spec_file::{PipelineSpecFile, SpecError};

#[derive(Parser)]
#[command(name = "pipeforge", version, about = "Latency-aware pipeline elaboration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Elaborate a pipeline and print its synchronization graph summary.
    Build {
        spec: PathBuf,
        /// Write the pre-resolution graph as DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Emit Verilog and DOT for one strategy and protocol.
    Generate {
        spec: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        verilog: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Directory for outputs whose path is not given explicitly.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Missing relations grouped by (depth, width) across pipelines.
    Report {
        /// `PATH` or `NAME=PATH`; the same file may appear under several names.
        #[arg(required = true)]
        specs: Vec<String>,
        #[arg(long, default_value_t = 0)]
        min_depth: u64,
        #[arg(long, value_enum, default_value_t = ReportFormat::Tsv)]
        report_format: ReportFormat,
        /// Instance multiplicity as `NAME=COUNT` (default 1).
        #[arg(long = "instances")]
        instances: Vec<String>,
    },
    /// Generate and verify one variant per candidate primitive policy.
    Sweep {
        spec: PathBuf,
        #[arg(long, default_value = "raw")]
        protocol: String,
        #[arg(long, default_value = "sweep")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        trials: usize,
        #[arg(long, default_value_t = 500)]
        cycles: usize,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Simulate the lowered netlist, print its latency and write traces.
    Simulate {
        spec: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cycles: usize,
        #[arg(long, default_value_t = sim::DEFAULT_RESET_CYCLES)]
        reset_cycles: usize,
        /// Probability that the sink is ready in a cycle (ready_valid only).
        #[arg(long)]
        sink_duty: Option<f64>,
        /// Probability that the source offers an item in a cycle (ready_valid only).
        #[arg(long)]
        source_duty: Option<f64>,
        /// JSON stimulus file instead of random inputs.
        #[arg(long)]
        stimulus: Option<PathBuf>,
        /// Extra internal nets to record.
        #[arg(long)]
        probe: Vec<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "direct")]
    strategy: String,
    #[arg(long)]
    depth_threshold: Option<String>,
    #[arg(long)]
    width_threshold: Option<String>,
    #[arg(long)]
    shiftreg: Option<String>,
    #[arg(long, default_value = "raw")]
    protocol: String,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, ConfigError> {
        RunConfig::new(
            &self.strategy,
            self.depth_threshold.as_deref(),
            self.width_threshold.as_deref(),
            self.shiftreg.as_deref(),
            &self.protocol,
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Tsv,
    Json,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("simulation diverged from the reference evaluation: {0}")]
    Diverged(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Spec(SpecError::Model(_)) => 3,
            CliError::Spec(_) => 2,
            CliError::Sim(SimError::ResetTooLong { .. } | SimError::StimulusWidth { .. } | SimError::UnknownPort(_) | SimError::UnknownProbe(_)) => 2,
            CliError::Sweep(SweepError::Io { .. }) | CliError::Write { .. } => 1,
            CliError::Diverged(_) | CliError::Model(_) | CliError::Flow(_) | CliError::Sim(_) | CliError::Sweep(_) => 3,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn color_enabled() -> bool {
    DotOptions::from_env().color
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Write { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn plural(n: usize, noun: &str) -> String {
    if n == 1 {
        format!("1 {noun}")
    } else {
        format!("{n} {noun}s")
    }
}

fn load(spec: &Path) -> Result<SyncGraph> {
    Ok(PipelineSpecFile::load(spec)?.build()?)
}

fn cmd_build(spec: &Path, dot: Option<&Path>) -> Result<()> {
    let graph = balance_merges(&load(spec)?)?;
    let missing = graph.missing_relations()?;
    let order: Vec<&str> = graph.forward_order()?.into_iter().map(|z| graph.label(z)).collect();
    println!(
        "{}: {}, {} ({})",
        graph.name,
        plural(graph.zones.len(), "zone"),
        plural(missing.len(), "missing relation"),
        plural(graph.relations.len(), "relation")
    );
    println!("order: {}", order.join(" "));
    for m in &missing {
        println!(
            "missing: {} from {} to {} (depth {}, width {})",
            m.signal,
            graph.label(m.available_zone),
            graph.label(m.needing_zone),
            m.depth,
            m.width
        );
    }
    if let Some(path) = dot {
        write_file(path, &emit_dot(&graph, &DotOptions::from_env()))?;
    }
    Ok(())
}

fn cmd_generate(spec: &Path, run: &RunArgs, verilog: Option<PathBuf>, dot: Option<PathBuf>, out_dir: &Path) -> Result<()> {
    let config = run.config()?;
    let graph = load(spec)?;
    let e = elaborate(&graph, &config.strategy, config.protocol)?;
    let verilog = verilog.unwrap_or_else(|| out_dir.join(format!("{}.v", graph.name)));
    let dot = dot.unwrap_or_else(|| verilog.with_extension("dot"));
    let header = format!("{} ({}, {})", graph.name, config.strategy, config.protocol);
    write_file(&verilog, &e.verilog(Some(header)))?;
    write_file(&dot, &e.dot(&DotOptions::from_env()))?;
    let c = e.netlist.cell_counts();
    let latency = e.netlist.latencies.iter().map(|l| format!("{}={}", l.port, l.latency)).collect::<Vec<_>>();
    println!("{}: {} / {}", graph.name, config.strategy, config.protocol);
    println!("latency: {}", latency.join(" "));
    println!(
        "cells: {} reg ({} bits), {} shift_reg, {} fifo, {} counter, {} comb",
        c.reg, c.reg_bits, c.shift_reg, c.fifo, c.counter, c.comb
    );
    println!("wrote {} and {}", verilog.display(), dot.display());
    Ok(())
}

fn cmd_report(specs: &[String], min_depth: u64, format: ReportFormat, instances: &[String]) -> Result<()> {
    let mut multiplicity: BTreeMap<&str, u64> = BTreeMap::new();
    for i in instances {
        let (name, count) = i.split_once('=').ok_or_else(|| CliError::Usage(format!("--instances expects NAME=COUNT, got `{i}`")))?;
        let count = count.parse().map_err(|_| CliError::Usage(format!("bad instance count in `{i}`")))?;
        multiplicity.insert(name, count);
    }
    let mut graphs: Vec<(String, SyncGraph)> = Vec::new();
    for s in specs {
        let (name, path) = match s.split_once('=') {
            Some((n, p)) => (Some(n.to_string()), p),
            None => (None, s.as_str()),
        };
        let graph = balance_merges(&load(Path::new(path))?)?;
        let mut name = name.unwrap_or_else(|| graph.name.clone());
        if graphs.iter().any(|(n, _)| *n == name) {
            let mut k = 2;
            while graphs.iter().any(|(n, _)| *n == format!("{name}_{k}")) {
                k += 1;
            }
            name = format!("{name}_{k}");
        }
        graphs.push((name, graph));
    }
    let inputs: Vec<(&str, &SyncGraph, u64)> =
        graphs.iter().map(|(n, g)| (n.as_str(), g, multiplicity.get(n.as_str()).copied().unwrap_or(1))).collect();
    let report = report_distribution(&inputs, min_depth)?;
    match format {
        ReportFormat::Tsv => print!("{}", report.to_tsv()),
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report.to_json()).expect("report serializes")),
    }
    Ok(())
}

fn cmd_sweep(spec: &Path, options: SweepOptions, out_dir: &Path) -> Result<()> {
    let graph = load(spec)?;
    let outcome = run_sweep(&graph, &options)?;
    outcome.write_to(out_dir)?;
    for v in &outcome.index.variants {
        let d = &v.delta_vs_baseline;
        println!(
            "{:<24} {:<28} fifo {:+} reg {:+} ({:+} bits) shift_reg {:+}",
            v.variant, v.strategy, d.fifo, d.reg, d.reg_bits, d.shift_reg
        );
    }
    println!("{} variants verified, index at {}", outcome.index.variants.len(), out_dir.join("index.json").display());
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StimulusFile {
    #[serde(default)]
    reset_cycles: Option<usize>,
    items: Vec<BTreeMap<String, serde_json::Value>>,
    #[serde(default)]
    source_valid: Vec<bool>,
    #[serde(default)]
    sink_ready: Vec<bool>,
}

fn read_stimulus(path: &Path, n: &Netlist, cycles: usize, reset_cycles: usize) -> Result<Stimulus> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let file: StimulusFile =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let widths: BTreeMap<String, u32> = sim::data_inputs(n).into_iter().collect();
    let mut items = Vec::new();
    for (k, item) in file.items.iter().enumerate() {
        let mut values = Vec::new();
        for (name, v) in item {
            let width = *widths.get(name).ok_or_else(|| CliError::Sim(SimError::UnknownPort(name.clone())))?;
            let text = match v {
                serde_json::Value::Number(x) => x.to_string(),
                serde_json::Value::String(s) => s.clone(),
                _ => return Err(CliError::Usage(format!("item {k}: `{name}` must be a number or string"))),
            };
            let wide = Bits::parse(&text, width + 64)
                .ok_or_else(|| CliError::Usage(format!("item {k}: `{name}` has unparsable value `{text}`")))?;
            let bits = wide.resize(width);
            if bits.resize(width + 64) != wide {
                return Err(CliError::Usage(format!("item {k}: value `{text}` does not fit in `{name}` ({width} bits)")));
            }
            values.push((name.clone(), bits));
        }
        items.push(values.into_iter().collect());
    }
    Ok(Stimulus {
        cycles,
        reset_cycles: file.reset_cycles.unwrap_or(reset_cycles),
        items,
        source_valid: file.source_valid,
        sink_ready: file.sink_ready,
    })
}

struct SimulateArgs<'a> {
    seed: u64,
    cycles: usize,
    reset_cycles: usize,
    sink_duty: Option<f64>,
    source_duty: Option<f64>,
    stimulus: Option<&'a Path>,
    probes: &'a [String],
    out_dir: &'a Path,
}

fn cmd_simulate(spec: &Path, run: &RunArgs, a: SimulateArgs) -> Result<()> {
    let config = run.config()?;
    if a.cycles < a.reset_cycles {
        return Err(SimError::ResetTooLong { cycles: a.cycles, reset_cycles: a.reset_cycles }.into());
    }
    for duty in [a.sink_duty, a.source_duty].into_iter().flatten() {
        if !(0.0..=1.0).contains(&duty) {
            return Err(CliError::Usage(format!("duty cycle {duty} is outside [0, 1]")));
        }
    }
    let graph = load(spec)?;
    let e = elaborate(&graph, &config.strategy, config.protocol)?;
    let n = &e.netlist;
    let mut stim = match a.stimulus {
        Some(path) => read_stimulus(path, n, a.cycles, a.reset_cycles)?,
        None => Stimulus { reset_cycles: a.reset_cycles, ..Stimulus::random(n, a.cycles, a.seed) },
    };
    if a.stimulus.is_none() && (a.sink_duty.is_some() || a.source_duty.is_some()) {
        stim = stim.with_duty(a.source_duty.unwrap_or(1.0), a.sink_duty.unwrap_or(1.0), a.seed);
    }
    let mut probes: Vec<&str> = n
        .cells
        .iter()
        .filter_map(|c| match c {
            Cell::Counter { q, .. } => Some(n.net(*q).name.as_str()),
            _ => None,
        })
        .collect();
    probes.extend(a.probes.iter().map(String::as_str));
    let trace = sim::simulate_with_probes(n, &stim, &probes)?;
    let latency = measured_latency(n, a.seed)?;
    let verdict = check_golden(&e.resolved, n, &stim)?;

    let base = a.out_dir.join(&graph.name);
    let vcd = base.with_extension("vcd");
    let csv = base.with_extension("csv");
    write_file(&vcd, &trace.to_vcd())?;
    write_file(&csv, &trace.to_csv())?;
    println!("latency: {latency}");
    println!("golden check: {verdict}");
    if config.protocol == Protocol::ReadyValid {
        let log = a.out_dir.join(format!("{}.transactions.json", graph.name));
        let body = serde_json::json!({ "accepted_inputs": trace.accepted_inputs, "accepted_outputs": trace.accepted_outputs });
        write_file(&log, &(serde_json::to_string_pretty(&body).expect("transactions serialize") + "\n"))?;
        println!(
            "accepted: {} inputs, {} outputs, order {}",
            trace.accepted_inputs.len(),
            trace.accepted_outputs.len(),
            if verdict.is_ok() { "preserved" } else { "VIOLATED" }
        );
        println!("wrote {}", log.display());
    }
    println!("wrote {} and {}", vcd.display(), csv.display());
    if verdict.is_ok() {
        Ok(())
    } else {
        Err(CliError::Diverged(verdict.to_string()))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build { spec, dot } => cmd_build(&spec, dot.as_deref()),
        Command::Generate { spec, run, verilog, dot, out_dir } => cmd_generate(&spec, &run, verilog, dot, &out_dir),
        Command::Report { specs, min_depth, report_format, instances } => {
            cmd_report(&specs, min_depth, report_format, &instances)
        }
        Command::Sweep { spec, protocol, out_dir, seed, trials, cycles, inject_fault } => {
            let protocol = protocol.parse().map_err(|_| ConfigError::Protocol(protocol.clone()))?;
            cmd_sweep(&spec, SweepOptions { protocol, trials, cycles, seed, inject_fault }, &out_dir)
        }
        Command::Simulate {
            spec,
            run,
            seed,
            cycles,
            reset_cycles,
            sink_duty,
            source_duty,
            stimulus,
            probe,
            out_dir,
        } => cmd_simulate(
            &spec,
            &run,
            SimulateArgs {
                seed,
                cycles,
                reset_cycles,
                sink_duty,
                source_duty,
                stimulus: stimulus.as_deref(),
                probes: &probe,
                out_dir: &out_dir,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let prefix = if color_enabled() && std::io::stderr().is_terminal() { "\x1b[31merror\x1b[0m" } else { "error" };
            eprintln!("{prefix}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
