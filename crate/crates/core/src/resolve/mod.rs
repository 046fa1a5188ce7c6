//! Graph rewrites that turn a built graph into a fully synchronized one:
//! merge balancing, the three resolution algorithms, and validation.

mod policy;
mod report;
mod validate;

pub use policy::{
    select_primitive, ChainStyle, PolicyError, PrimitiveKind, PrimitivePolicy, ShiftregMode, Strategy, Threshold,
};
pub use report::{
    report_distribution, sweep_thresholds, sweep_thresholds_for, DistributionReport, DistributionRow,
    PipelineCount, SweepCandidate,
};
pub use validate::{validate, Check, ValidationIssue, ValidationReport};

use crate::model::{
    Implementation, Latency, ModelError, Relation, RelationId, RelationOrigin, Result, SignalStatus, Slot,
    SyncGraph, ZoneId,
};

/// Sets every missing merge edge so that all input-to-merge paths share the
/// longest path sum. The longest branch gets a 0-latency edge.
pub fn balance_merges(graph: &SyncGraph) -> Result<SyncGraph> {
    let mut g = graph.clone();
    let order = g.forward_order()?;
    let mut dist = vec![0u64; g.zones.len()];
    for &z in &order {
        if z == g.input_zone {
            continue;
        }
        let inbound: Vec<(RelationId, ZoneId, Latency)> =
            g.inbound(z).iter().map(|r| (r.id, r.source, r.latency)).collect();
        let target = inbound
            .iter()
            .map(|&(_, s, l)| dist[s.0] + l.known().unwrap_or(0))
            .max()
            .unwrap_or(0);
        for (id, s, l) in inbound {
            if l == Latency::Missing {
                g.relations[id.0].latency = Latency::Known(target - dist[s.0]);
            }
        }
        dist[z.0] = target;
    }
    Ok(g)
}

/// Balances merges, then implements every missing relation with `strategy`.
pub fn resolve(graph: &SyncGraph, strategy: &Strategy) -> Result<SyncGraph> {
    let balanced = balance_merges(graph)?;
    match strategy {
        Strategy::ExhaustiveForward => resolve_exhaustive_forward(&balanced),
        Strategy::PeerToPeerBackward => resolve_p2p_backward(&balanced),
        Strategy::DirectBackward(policy) => resolve_direct_backward(&balanced, policy),
    }
}

/// Drops the placeholder relations recorded for pending slots. They are
/// created after every structural relation, so they form the tail.
fn strip_pending(g: &mut SyncGraph) {
    let keep = g
        .relations
        .iter()
        .position(|r| r.origin == RelationOrigin::Resolution && r.latency == Latency::Missing)
        .unwrap_or(g.relations.len());
    debug_assert!(g.relations[keep..].iter().all(|r| r.latency == Latency::Missing));
    g.relations.truncate(keep);
    for zone in &mut g.zones {
        for slot in zone.slots.values_mut() {
            if slot.feed.is_some_and(|f| f.0 >= keep) {
                slot.feed = None;
            }
        }
    }
}

fn add_propagation(
    g: &mut SyncGraph,
    source: ZoneId,
    sink: ZoneId,
    latency: u64,
    signal: &str,
    implementation: Implementation,
    primitive: PrimitiveKind,
) -> RelationId {
    let id = RelationId(g.relations.len());
    g.relations.push(Relation {
        id,
        source,
        sink,
        latency: Latency::Known(latency),
        protocol: None,
        origin: RelationOrigin::Resolution,
        signal: Some(signal.to_string()),
        step: None,
        implementation: Some(implementation),
        primitive: Some(primitive),
    });
    id
}

/// Status of a propagated slot: consumed by a step leaving the zone, or
/// only by an output port.
fn propagated_status(g: &SyncGraph, zone: ZoneId, signal: &str) -> SignalStatus {
    let read_by_step = g.steps.iter().any(|s| s.source == zone && s.body.reads().iter().any(|r| r == signal));
    let output = g.outputs.iter().any(|o| o.zone == zone && o.signal == signal);
    if output && !read_by_step {
        SignalStatus::ConnectedExternal
    } else {
        SignalStatus::Propagated
    }
}

fn width_of(g: &SyncGraph, signal: &str) -> u32 {
    g.signals[signal].width
}

/// Forwards every available signal through every relation, whether or not
/// it is used downstream.
pub fn resolve_exhaustive_forward(graph: &SyncGraph) -> Result<SyncGraph> {
    let mut g = graph.clone();
    let order = g.forward_order()?;
    g.zone_depths()?;
    strip_pending(&mut g);
    let hop = PrimitivePolicy::auto();
    for &z in &order {
        let inbound: Vec<(ZoneId, u64)> = g
            .inbound(z)
            .iter()
            .map(|r| (r.source, r.latency.known().expect("balanced")))
            .collect();
        for (src, lat) in inbound {
            let names: Vec<String> = g.zones[src.0].slots.keys().cloned().collect();
            for s in names {
                let pending = match g.zones[z.0].slots.get(&s) {
                    Some(slot) if slot.status != SignalStatus::PendingLocal => continue,
                    Some(_) => true,
                    None => false,
                };
                let prim = select_primitive(lat, width_of(&g, &s), &hop);
                let rel = add_propagation(&mut g, src, z, lat, &s, Implementation::Transitive, prim);
                let status = if pending { propagated_status(&g, z, &s) } else { SignalStatus::Propagated };
                g.zones[z.0].slots.insert(s, Slot { status, feed: Some(rel) });
            }
        }
    }
    Ok(g)
}

/// Requests each missing signal from the preceding zone, leaving a
/// placeholder slot in every zone it passes through.
pub fn resolve_p2p_backward(graph: &SyncGraph) -> Result<SyncGraph> {
    let mut g = graph.clone();
    let order = g.backward_order()?;
    g.zone_depths()?;
    strip_pending(&mut g);
    let hop = PrimitivePolicy::auto();
    for &z in &order {
        let pending: Vec<String> = g.zones[z.0]
            .slots
            .iter()
            .filter(|(_, s)| s.status == SignalStatus::PendingLocal)
            .map(|(n, _)| n.clone())
            .collect();
        for s in pending {
            let decl = g.signals[&s].declaring_zone;
            let edge = g
                .inbound(z)
                .into_iter()
                .find(|r| r.source == decl || g.ancestors(r.source)[decl.0])
                .map(|r| (r.source, r.latency.known().expect("balanced")));
            let Some((src, lat)) = edge else {
                return Err(ModelError::UnknownSignal { signal: s, zone: g.label(g.input_zone).to_string() });
            };
            if !g.zones[src.0].slots.contains_key(&s) {
                g.zones[src.0].slots.insert(s.clone(), Slot { status: SignalStatus::PendingLocal, feed: None });
            }
            let prim = select_primitive(lat, width_of(&g, &s), &hop);
            let rel = add_propagation(&mut g, src, z, lat, &s, Implementation::Transitive, prim);
            let status = propagated_status(&g, z, &s);
            g.zones[z.0].slots.insert(s, Slot { status, feed: Some(rel) });
        }
    }
    Ok(g)
}

/// Implements each missing relation as one direct connection from the
/// nearest zone where the signal is available, sized by `policy`.
pub fn resolve_direct_backward(graph: &SyncGraph, policy: &PrimitivePolicy) -> Result<SyncGraph> {
    let missing = graph.missing_relations()?;
    let mut g = graph.clone();
    strip_pending(&mut g);
    for m in missing.iter().rev() {
        let prim = select_primitive(m.depth, m.width, policy);
        let rel = add_propagation(
            &mut g,
            m.available_zone,
            m.needing_zone,
            m.depth,
            &m.signal,
            Implementation::Direct,
            prim,
        );
        let status = propagated_status(&g, m.needing_zone, &m.signal);
        g.zones[m.needing_zone.0].slots.insert(m.signal.clone(), Slot { status, feed: Some(rel) });
    }
    Ok(g)
}
