//! Protocol configuration: no signaling (`Raw`) or a ready/valid handshake
//! with a valid chain and one backpressure net shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, RelationId, SyncGraph, ZoneId};
use crate::resolve::{validate, PrimitiveKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Raw,
    ReadyValid,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Raw => "raw",
            Protocol::ReadyValid => "ready_valid",
        })
    }
}

impl FromStr for Protocol {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, ProtocolError> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "raw" => Ok(Protocol::Raw),
            "ready_valid" | "readyvalid" | "rv" => Ok(Protocol::ReadyValid),
            _ => Err(ProtocolError::Unknown(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("unknown protocol `{0}`")]
    Unknown(String),
    #[error("ready/valid backpressure needs a single output zone, found {zones}")]
    MultiOutputBackpressure { zones: usize },
    #[error("a constant-latency FIFO needs depth >= 2, got {0}")]
    FifoTooShallow(u64),
    #[error("graph is not fully synchronized: {0}")]
    Unresolved(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// 1-bit control expression over the named nets around one FIFO.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ControlExpr {
    True,
    NotReset,
    UpstreamValid,
    DownstreamReady,
    Full,
    Empty,
    /// The startup counter has reached zero.
    ReadStartZero,
    Not(Box<ControlExpr>),
    And(Vec<ControlExpr>),
}

impl ControlExpr {
    fn not(e: ControlExpr) -> ControlExpr {
        ControlExpr::Not(Box::new(e))
    }
}

impl fmt::Display for ControlExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlExpr::True => f.write_str("1"),
            ControlExpr::NotReset => f.write_str("!reset"),
            ControlExpr::UpstreamValid => f.write_str("upstream.valid"),
            ControlExpr::DownstreamReady => f.write_str("downstream.ready"),
            ControlExpr::Full => f.write_str("fifo.full"),
            ControlExpr::Empty => f.write_str("fifo.empty"),
            ControlExpr::ReadStartZero => f.write_str("read_start == 0"),
            ControlExpr::Not(e) => write!(f, "!{e}"),
            ControlExpr::And(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" && ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

/// Control wiring of one FIFO. Under `Raw` the FIFO is a fixed delay line
/// whose read side is held off by a counter starting at `counter_init`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FifoWiring {
    pub write_enable: ControlExpr,
    pub read_enable: ControlExpr,
    pub downstream_valid: Option<ControlExpr>,
    pub upstream_ready: Option<ControlExpr>,
    pub counter_init: Option<u64>,
}

/// The read port is registered: data appears one cycle after the read.
pub const FIFO_READ_LATENCY: u64 = 1;

pub fn fifo_handshake_wiring(depth: u64, protocol: Protocol) -> Result<FifoWiring, ProtocolError> {
    if depth < 2 {
        return Err(ProtocolError::FifoTooShallow(depth));
    }
    Ok(match protocol {
        Protocol::Raw => FifoWiring {
            write_enable: ControlExpr::NotReset,
            read_enable: ControlExpr::ReadStartZero,
            downstream_valid: None,
            upstream_ready: None,
            counter_init: Some(depth - FIFO_READ_LATENCY),
        },
        Protocol::ReadyValid => FifoWiring {
            write_enable: ControlExpr::And(vec![ControlExpr::UpstreamValid, ControlExpr::not(ControlExpr::Full)]),
            read_enable: ControlExpr::And(vec![ControlExpr::DownstreamReady, ControlExpr::not(ControlExpr::Empty)]),
            downstream_valid: Some(ControlExpr::not(ControlExpr::Empty)),
            upstream_ready: Some(ControlExpr::not(ControlExpr::Full)),
            counter_init: None,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FifoBinding {
    pub relation: RelationId,
    pub signal: String,
    pub depth: u64,
    /// Valid-chain taps feeding the upstream valid and the (early) downstream
    /// ready of the FIFO.
    pub write_tap: u64,
    pub read_tap: u64,
    pub wiring: FifoWiring,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HandshakePlan {
    pub protocol: Protocol,
    /// Number of valid registers: `v[0]` is the input valid, `v[len]` the
    /// output valid.
    pub valid_chain_len: u64,
    /// Valid-chain index of every zone.
    pub zone_valid: Vec<(ZoneId, u64)>,
    /// Name of the single net clock-enabling every sequential element.
    pub ready_net: Option<String>,
    pub fifo_bindings: Vec<FifoBinding>,
}

impl HandshakePlan {
    pub fn valid_of(&self, zone: ZoneId) -> Option<u64> {
        self.zone_valid.iter().find(|(z, _)| *z == zone).map(|(_, v)| *v)
    }
}

pub const READY_NET: &str = "out_ready";

pub fn apply_protocol(graph: &SyncGraph, protocol: Protocol) -> Result<HandshakePlan, ProtocolError> {
    let report = validate(graph);
    if !report.is_ok() {
        return Err(ProtocolError::Unresolved(report.to_string()));
    }
    let depth = graph.zone_depths()?;
    let outputs = graph.output_zones();
    if protocol == Protocol::ReadyValid && outputs.len() > 1 {
        return Err(ProtocolError::MultiOutputBackpressure { zones: outputs.len() });
    }
    let mut fifo_bindings = Vec::new();
    for r in &graph.relations {
        if let Some(PrimitiveKind::Fifo { depth: n, .. }) = r.primitive {
            fifo_bindings.push(FifoBinding {
                relation: r.id,
                signal: r.signal.clone().unwrap_or_default(),
                depth: n,
                write_tap: depth[r.source.0],
                read_tap: depth[r.sink.0] - FIFO_READ_LATENCY,
                wiring: fifo_handshake_wiring(n, protocol)?,
            });
        }
    }
    let plan = match protocol {
        Protocol::Raw => HandshakePlan {
            protocol,
            valid_chain_len: 0,
            zone_valid: Vec::new(),
            ready_net: None,
            fifo_bindings,
        },
        Protocol::ReadyValid => HandshakePlan {
            protocol,
            valid_chain_len: outputs.iter().map(|z| depth[z.0]).max().unwrap_or(0),
            zone_valid: graph.zones.iter().map(|z| (z.id, depth[z.id.0])).collect(),
            ready_net: Some(READY_NET.to_string()),
            fifo_bindings,
        },
    };
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::resolve::{resolve, PrimitivePolicy, Strategy};

    fn resolved(p: crate::model::PipeBuilder, s: Strategy) -> SyncGraph {
        resolve(&p.build().unwrap(), &s).unwrap()
    }

    #[test]
    fn ready_valid_chain_matches_latency() {
        let g = resolved(fixtures::running_example(), Strategy::DirectBackward(PrimitivePolicy::auto()));
        let plan = apply_protocol(&g, Protocol::ReadyValid).unwrap();
        assert_eq!(plan.valid_chain_len, 2);
        assert_eq!(plan.ready_net.as_deref(), Some("out_ready"));
        assert_eq!(plan.valid_of(g.zone_by_label("addA").unwrap()), Some(1));
    }

    #[test]
    fn raw_plan_is_empty() {
        let g = resolved(fixtures::running_example(), Strategy::PeerToPeerBackward);
        let plan = apply_protocol(&g, Protocol::Raw).unwrap();
        assert!(plan.zone_valid.is_empty() && plan.ready_net.is_none() && plan.fifo_bindings.is_empty());
    }

    #[test]
    fn two_outputs_reject_backpressure() {
        let g = resolved(fixtures::two_outputs(), Strategy::PeerToPeerBackward);
        assert_eq!(
            apply_protocol(&g, Protocol::ReadyValid),
            Err(ProtocolError::MultiOutputBackpressure { zones: 2 })
        );
        assert!(apply_protocol(&g, Protocol::Raw).is_ok());
    }

    #[test]
    fn fifo_wiring_forms() {
        let rv = fifo_handshake_wiring(4, Protocol::ReadyValid).unwrap();
        assert_eq!(rv.write_enable.to_string(), "upstream.valid && !fifo.full");
        assert_eq!(rv.read_enable.to_string(), "downstream.ready && !fifo.empty");
        assert_eq!(rv.downstream_valid.unwrap().to_string(), "!fifo.empty");
        assert_eq!(rv.upstream_ready.unwrap().to_string(), "!fifo.full");
        let raw = fifo_handshake_wiring(4, Protocol::Raw).unwrap();
        assert_eq!(raw.read_enable.to_string(), "read_start == 0");
        assert_eq!(raw.counter_init, Some(3));
        assert_eq!(fifo_handshake_wiring(1, Protocol::Raw), Err(ProtocolError::FifoTooShallow(1)));
    }
}
