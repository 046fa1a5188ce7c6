//! Synchronization model: signals grouped into TimeZones, connected by
//! Relations that carry a latency which may still be missing.
//!
//! A pipeline is recorded with [`PipeBuilder`] and elaborated by
//! [`PipeBuilder::build`] into a [`SyncGraph`]. Every downstream by-name
//! reference to a signal that is not declared in the reading zone becomes a
//! `PendingLocal` slot backed by a `Missing` relation; merge edges stay
//! `Missing` until [`crate::resolve::balance_merges`] runs.

mod builder;
mod eval;
pub mod expr;
mod graph;

pub use builder::{PipeBuilder, MAIN};
pub use eval::evaluate;
pub use expr::{constant, var, Expr};
pub use graph::*;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZoneId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StepId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    Wire,
    Reg,
    /// Multi-cycle step, at least two cycles.
    Delay(u32),
}

impl StepKind {
    pub fn latency(self) -> u64 {
        match self {
            StepKind::Wire => 0,
            StepKind::Reg => 1,
            StepKind::Delay(n) => n as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Define {
    pub name: String,
    pub width: u32,
    pub expr: Expr,
}

/// One recorded PipeStep: a latency kind and the signals it defines in its
/// sink zone from values of its source zone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepBody {
    pub name: String,
    pub kind: StepKind,
    pub defines: Vec<Define>,
}

impl StepBody {
    pub fn new(name: &str, kind: StepKind) -> Self {
        StepBody { name: name.to_string(), kind, defines: Vec::new() }
    }

    pub fn wire(name: &str) -> Self {
        Self::new(name, StepKind::Wire)
    }

    pub fn reg(name: &str) -> Self {
        Self::new(name, StepKind::Reg)
    }

    pub fn delay(name: &str, cycles: u32) -> Self {
        Self::new(name, StepKind::Delay(cycles))
    }

    pub fn define(mut self, name: &str, width: u32, expr: Expr) -> Self {
        self.defines.push(Define { name: name.to_string(), width, expr });
        self
    }

    /// Names read from the source zone. Inside a wire step, a define may
    /// use an earlier define of the same step; those are not source reads.
    pub fn reads(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut local: Vec<&str> = Vec::new();
        for d in &self.defines {
            for r in d.expr.refs() {
                let chained = self.kind == StepKind::Wire && local.contains(&r.as_str());
                if !chained && !out.contains(&r) {
                    out.push(r);
                }
            }
            local.push(&d.name);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("signal `{signal}` is declared more than once")]
    DuplicateSignal { signal: String },
    #[error("`{name}` cannot be used as a name: {reason}")]
    InvalidName { name: String, reason: &'static str },
    #[error("signal `{signal}` has zero width")]
    ZeroWidth { signal: String },
    #[error("branch `{branch}` is closed")]
    BranchClosed { branch: String },
    #[error("a branch named `{branch}` already exists")]
    DuplicateBranch { branch: String },
    #[error("unknown branch `{branch}`")]
    UnknownBranch { branch: String },
    #[error("branch `{branch}` cannot be merged into itself")]
    SelfMerge { branch: String },
    #[error("signal `{signal}` is not declared upstream of zone `{zone}`")]
    UnknownSignal { signal: String, zone: String },
    #[error("branch `{branch}` is neither merged nor terminated by an output")]
    UnterminatedBranch { branch: String },
    #[error("step `{step}`: a delay step needs at least 2 cycles, got {cycles}")]
    InvalidDelay { step: String, cycles: u32 },
    #[error("signal `{signal}`: expression is {inferred} bits wide but declared as {declared}")]
    WidthMismatch { signal: String, declared: u32, inferred: u32 },
    #[error("signal `{signal}`: {message}")]
    ExprWidth { signal: String, message: String },
    #[error("output `{output}` is driven twice")]
    DuplicateOutput { output: String },
    #[error("the synchronization graph contains a cycle")]
    CycleDetected,
    #[error("no path from `{from}` to `{to}`")]
    NoPath { from: String, to: String },
    #[error("paths from `{from}` to `{to}` disagree on latency: {latencies:?}")]
    UnbalancedPaths { from: String, to: String, latencies: Vec<u64> },
    #[error("relation {relation} (`{from}` -> `{to}`) has no known latency")]
    MissingLatency { relation: usize, from: String, to: String },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
