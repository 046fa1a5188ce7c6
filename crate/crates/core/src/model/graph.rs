use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::Serialize;

use super::{BranchId, ModelError, RelationId, Result, StepBody, StepId, ZoneId};
use crate::protocol::Protocol;
use crate::resolve::PrimitiveKind;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignalDecl {
    pub name: String,
    pub width: u32,
    pub declaring_zone: ZoneId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SignalStatus {
    PendingLocal,
    DeclaredLocalUse,
    DeclaredUnused,
    Propagated,
    ConnectedExternal,
}

impl SignalStatus {
    pub fn is_declared(self) -> bool {
        matches!(self, SignalStatus::DeclaredLocalUse | SignalStatus::DeclaredUnused)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Slot {
    pub status: SignalStatus,
    /// Relation that brings the value into this zone; `None` for declarations.
    pub feed: Option<RelationId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ZoneKind {
    Input,
    Step,
    Merge,
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TimeZone {
    pub id: ZoneId,
    pub label: String,
    pub kind: ZoneKind,
    pub branch: BranchId,
    pub slots: IndexMap<String, Slot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Latency {
    Known(u64),
    Missing,
}

impl Latency {
    pub fn known(self) -> Option<u64> {
        match self {
            Latency::Known(l) => Some(l),
            Latency::Missing => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RelationOrigin {
    UserStep,
    Balancing,
    Resolution,
}

/// How a propagation relation was implemented: hop by hop along existing
/// relations, or as one direct connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Implementation {
    Transitive,
    Direct,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Relation {
    pub id: RelationId,
    pub source: ZoneId,
    pub sink: ZoneId,
    pub latency: Latency,
    pub protocol: Option<Protocol>,
    pub origin: RelationOrigin,
    /// Propagated signal, for `Resolution` relations.
    pub signal: Option<String>,
    pub step: Option<StepId>,
    pub implementation: Option<Implementation>,
    pub primitive: Option<PrimitiveKind>,
}

impl Relation {
    /// Step and merge edges define the schedule; propagation relations do not.
    pub fn is_structural(&self) -> bool {
        self.origin != RelationOrigin::Resolution
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordedStep {
    pub body: StepBody,
    pub source: ZoneId,
    pub sink: ZoneId,
    pub relation: RelationId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OutputPort {
    pub name: String,
    pub signal: String,
    pub zone: ZoneId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BranchInfo {
    pub name: String,
    pub parent: Option<BranchId>,
    /// Zone the branch was split from (the input zone for `main`).
    pub root: ZoneId,
    pub zones: Vec<ZoneId>,
    pub merged_into: Option<ZoneId>,
}

/// A propagation still to be implemented, characterized after balancing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MissingRelation {
    pub signal: String,
    pub available_zone: ZoneId,
    pub needing_zone: ZoneId,
    pub depth: u64,
    pub width: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncGraph {
    pub name: String,
    pub zones: Vec<TimeZone>,
    pub relations: Vec<Relation>,
    pub signals: IndexMap<String, SignalDecl>,
    pub steps: Vec<RecordedStep>,
    pub outputs: Vec<OutputPort>,
    pub branches: Vec<BranchInfo>,
    pub input_zone: ZoneId,
}

impl SyncGraph {
    pub fn zone(&self, id: ZoneId) -> &TimeZone {
        &self.zones[id.0]
    }

    pub fn relation(&self, id: RelationId) -> &Relation {
        &self.relations[id.0]
    }

    pub fn zone_by_label(&self, label: &str) -> Option<ZoneId> {
        self.zones.iter().find(|z| z.label == label).map(|z| z.id)
    }

    pub fn label(&self, id: ZoneId) -> &str {
        &self.zones[id.0].label
    }

    pub fn output_zones(&self) -> Vec<ZoneId> {
        let mut out: Vec<ZoneId> = Vec::new();
        for o in &self.outputs {
            if !out.contains(&o.zone) {
                out.push(o.zone);
            }
        }
        out
    }

    pub fn structural(&self) -> impl Iterator<Item = &Relation> {
        self.relations.iter().filter(|r| r.is_structural())
    }

    /// Structural relations entering `zone`, in creation order.
    pub fn inbound(&self, zone: ZoneId) -> Vec<&Relation> {
        self.structural().filter(|r| r.sink == zone).collect()
    }

    pub fn outbound(&self, zone: ZoneId) -> Vec<&Relation> {
        self.structural().filter(|r| r.source == zone).collect()
    }

    pub fn missing_relation_count(&self) -> usize {
        self.relations.iter().filter(|r| r.latency == Latency::Missing).count()
    }

    /// Zones reachable backwards from `zone` through structural relations,
    /// `zone` itself excluded.
    pub fn ancestors(&self, zone: ZoneId) -> Vec<bool> {
        let mut seen = vec![false; self.zones.len()];
        let mut stack = vec![zone];
        while let Some(z) = stack.pop() {
            for r in self.structural().filter(|r| r.sink == z) {
                if !seen[r.source.0] {
                    seen[r.source.0] = true;
                    stack.push(r.source);
                }
            }
        }
        seen
    }

    /// Depth-first order from the input zone. At a split, zones of the
    /// split-off branches come before the continuation of the splitting
    /// branch; a zone is entered once all its predecessors are placed.
    pub fn forward_order(&self) -> Result<Vec<ZoneId>> {
        let n = self.zones.len();
        let mut pending: Vec<usize> = vec![0; n];
        for r in self.structural() {
            pending[r.sink.0] += 1;
        }
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        let mut stack = vec![self.input_zone];
        if pending[self.input_zone.0] != 0 {
            return Err(ModelError::CycleDetected);
        }
        while let Some(z) = stack.pop() {
            if placed[z.0] {
                continue;
            }
            placed[z.0] = true;
            order.push(z);
            let children = self.ordered_children(z);
            let mut ready = Vec::new();
            for c in children {
                pending[c.0] -= 1;
                if pending[c.0] == 0 {
                    ready.push(c);
                }
            }
            // the first ready child must be visited first
            for c in ready.into_iter().rev() {
                stack.push(c);
            }
        }
        if order.len() != n {
            return Err(ModelError::CycleDetected);
        }
        Ok(order)
    }

    /// Successors of `zone` ranked for traversal: split-off branches first
    /// (creation order), then the zone's own branch.
    fn ordered_children(&self, zone: ZoneId) -> Vec<ZoneId> {
        let own = self.zones[zone.0].branch;
        let mut edges: Vec<(bool, usize, ZoneId)> = self
            .outbound(zone)
            .into_iter()
            .map(|r| (self.zones[r.sink.0].branch == own, r.id.0, r.sink))
            .collect();
        edges.sort();
        edges.into_iter().map(|(_, _, z)| z).collect()
    }

    pub fn backward_order(&self) -> Result<Vec<ZoneId>> {
        let mut order = self.forward_order()?;
        order.reverse();
        Ok(order)
    }

    /// Cycle distance of every zone from the input zone. Requires balanced
    /// merges: all input-to-zone paths must agree.
    pub fn zone_depths(&self) -> Result<Vec<u64>> {
        let order = self.forward_order()?;
        let mut depth: Vec<Option<u64>> = vec![None; self.zones.len()];
        depth[self.input_zone.0] = Some(0);
        for &z in &order {
            if z == self.input_zone {
                continue;
            }
            let mut seen: BTreeSet<u64> = BTreeSet::new();
            for r in self.inbound(z) {
                let l = r.latency.known().ok_or_else(|| self.missing_err(r))?;
                seen.insert(depth[r.source.0].expect("topological order") + l);
            }
            if seen.len() > 1 {
                return Err(ModelError::UnbalancedPaths {
                    from: self.label(self.input_zone).to_string(),
                    to: self.label(z).to_string(),
                    latencies: seen.into_iter().collect(),
                });
            }
            depth[z.0] = seen.into_iter().next();
        }
        Ok(depth.into_iter().map(|d| d.unwrap_or(0)).collect())
    }

    fn missing_err(&self, r: &Relation) -> ModelError {
        ModelError::MissingLatency {
            relation: r.id.0,
            from: self.label(r.source).to_string(),
            to: self.label(r.sink).to_string(),
        }
    }

    /// Latency of the equivalent relation `from -> to`, composed of the
    /// structural relations along any path between them.
    pub fn equivalent_latency(&self, from: ZoneId, to: ZoneId) -> Result<u64> {
        let order = self.forward_order()?;
        let mut sums: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); self.zones.len()];
        sums[from.0].insert(0);
        let start = order.iter().position(|&z| z == from).unwrap();
        for &z in &order[start..] {
            if sums[z.0].is_empty() {
                continue;
            }
            for r in self.outbound(z) {
                let l = r.latency.known().ok_or_else(|| self.missing_err(r))?;
                let next: Vec<u64> = sums[z.0].iter().map(|s| s + l).collect();
                sums[r.sink.0].extend(next);
            }
        }
        let at = &sums[to.0];
        match at.len() {
            0 => Err(ModelError::NoPath { from: self.label(from).to_string(), to: self.label(to).to_string() }),
            1 => Ok(*at.iter().next().unwrap()),
            _ => Err(ModelError::UnbalancedPaths {
                from: self.label(from).to_string(),
                to: self.label(to).to_string(),
                latencies: at.iter().copied().collect(),
            }),
        }
    }

    /// Total latency from the input zone to each output port.
    pub fn output_latencies(&self) -> Result<Vec<u64>> {
        let d = self.zone_depths()?;
        Ok(self.outputs.iter().map(|o| d[o.zone.0]).collect())
    }

    /// Characterizes every pending slot: the nearest upstream zone where the
    /// signal is available (declared, or itself used there) and the
    /// propagation depth from it.
    pub fn missing_relations(&self) -> Result<Vec<MissingRelation>> {
        let depth = self.zone_depths()?;
        let order = self.forward_order()?;
        let mut rank = vec![0usize; self.zones.len()];
        for (i, z) in order.iter().enumerate() {
            rank[z.0] = i;
        }
        let mut out = Vec::new();
        for &z in &order {
            let zone = &self.zones[z.0];
            let anc = self.ancestors(z);
            for (signal, slot) in &zone.slots {
                if slot.status != SignalStatus::PendingLocal {
                    continue;
                }
                let available = self
                    .nearest_availability(signal, &anc, &depth, &rank)
                    .ok_or_else(|| ModelError::UnknownSignal {
                        signal: signal.clone(),
                        zone: zone.label.clone(),
                    })?;
                out.push(MissingRelation {
                    signal: signal.clone(),
                    available_zone: available,
                    needing_zone: z,
                    depth: depth[z.0] - depth[available.0],
                    width: self.signals[signal].width,
                });
            }
        }
        Ok(out)
    }

    /// Ancestor holding `signal` at the smallest cycle distance; the
    /// declaration wins ties, then the zone placed later in forward order.
    pub(crate) fn nearest_availability(
        &self,
        signal: &str,
        ancestors: &[bool],
        depth: &[u64],
        rank: &[usize],
    ) -> Option<ZoneId> {
        let decl = self.signals.get(signal)?.declaring_zone;
        self.zones
            .iter()
            .filter(|a| ancestors[a.id.0] && a.slots.contains_key(signal))
            .max_by_key(|a| (depth[a.id.0], a.id == decl, rank[a.id.0]))
            .map(|a| a.id)
    }
}
