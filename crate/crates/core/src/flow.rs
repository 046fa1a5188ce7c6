//! End-to-end elaboration from a built graph to a checked netlist.

use crate::model::{ModelError, SyncGraph};
use crate::netlist::{emit_dot, emit_verilog, lower, DotOptions, EmitOptions, Netlist, NetlistError};
use crate::protocol::{apply_protocol, HandshakePlan, Protocol, ProtocolError};
use crate::resolve::{balance_merges, resolve, validate, PrimitivePolicy, Strategy, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FlowError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("validation failed:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Clone, Debug)]
pub struct Elaboration {
    pub balanced: SyncGraph,
    pub resolved: SyncGraph,
    pub plan: HandshakePlan,
    pub policy: PrimitivePolicy,
    pub netlist: Netlist,
}

pub fn elaborate(graph: &SyncGraph, strategy: &Strategy, protocol: Protocol) -> Result<Elaboration, FlowError> {
    let balanced = balance_merges(graph)?;
    let resolved = resolve(&balanced, strategy)?;
    let report = validate(&resolved);
    if !report.is_ok() {
        return Err(FlowError::Invalid(report));
    }
    let plan = apply_protocol(&resolved, protocol)?;
    let policy = strategy.policy();
    let netlist = lower(&resolved, &plan, &policy)?;
    Ok(Elaboration { balanced, resolved, plan, policy, netlist })
}

impl Elaboration {
    pub fn verilog(&self, header: Option<String>) -> String {
        let options = EmitOptions { header, ..EmitOptions::for_policy(&self.policy) };
        emit_verilog(&self.netlist, &options)
    }

    pub fn dot(&self, options: &DotOptions) -> String {
        emit_dot(&self.resolved, options)
    }
}
