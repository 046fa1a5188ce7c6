use std::collections::HashMap;

use indexmap::IndexMap;

use super::{
    BranchId, BranchInfo, Latency, ModelError, OutputPort, RecordedStep, Relation, RelationId,
    RelationOrigin, Result, SignalDecl, SignalStatus, Slot, StepBody, StepId, StepKind, SyncGraph,
    TimeZone, ZoneId, ZoneKind,
};

/// Handle of the branch every pipeline starts with.
pub const MAIN: BranchId = BranchId(0);

const INPUT_LABEL: &str = "_init_";

#[derive(Clone, Debug)]
enum Event {
    Step { branch: BranchId, body: StepBody },
    Split { child: BranchId, parent: BranchId },
    Merge { branches: Vec<BranchId>, into: BranchId },
}

#[derive(Clone, Debug)]
struct BranchRec {
    name: String,
    merged: bool,
}

/// Port names the generated circuit uses for its own control signals.
pub const RESERVED_PORTS: [&str; 6] = ["clk", "rst", "in_valid", "in_ready", "out_valid", "out_ready"];

const VERILOG_KEYWORDS: &[&str] = &[
    "always", "and", "assign", "begin", "buf", "case", "casex", "casez", "default", "defparam", "else", "end",
    "endcase", "endfunction", "endmodule", "endtask", "for", "forever", "function", "generate", "endgenerate",
    "genvar", "if", "initial", "inout", "input", "integer", "localparam", "module", "nand", "negedge", "nor",
    "not", "or", "output", "parameter", "posedge", "real", "reg", "repeat", "signed", "task", "time", "tri",
    "wait", "while", "wire", "xnor", "xor",
];

/// Signal and port names become Verilog identifiers, so they must be plain
/// identifiers that are neither keywords nor reserved control ports.
fn check_name(name: &str) -> Result<()> {
    let invalid = |reason| Err(ModelError::InvalidName { name: name.to_string(), reason });
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return invalid("must start with a letter or underscore"),
    }
    if !chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return invalid("only letters, digits and underscores are allowed");
    }
    if RESERVED_PORTS.contains(&name) {
        return invalid("reserved for a control port");
    }
    if VERILOG_KEYWORDS.contains(&name) {
        return invalid("Verilog keyword");
    }
    Ok(())
}

/// Records a pipeline description; [`PipeBuilder::build`] replays the log
/// into a [`SyncGraph`].
#[derive(Clone, Debug)]
pub struct PipeBuilder {
    name: String,
    inputs: Vec<(String, u32)>,
    branches: Vec<BranchRec>,
    events: Vec<Event>,
    outputs: Vec<(String, String, BranchId)>,
    declared: HashMap<String, u32>,
}

impl PipeBuilder {
    pub fn new(name: &str, inputs: &[(&str, u32)]) -> Result<Self> {
        let mut b = PipeBuilder {
            name: name.to_string(),
            inputs: Vec::new(),
            branches: vec![BranchRec { name: "main".into(), merged: false }],
            events: Vec::new(),
            outputs: Vec::new(),
            declared: HashMap::new(),
        };
        for &(n, w) in inputs {
            b.extend_input(n, w)?;
        }
        Ok(b)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Adds an externally driven signal to the input zone.
    pub fn extend_input(&mut self, name: &str, width: u32) -> Result<()> {
        self.declare(name, width)?;
        self.inputs.push((name.to_string(), width));
        Ok(())
    }

    fn declare(&mut self, name: &str, width: u32) -> Result<()> {
        check_name(name)?;
        if width == 0 {
            return Err(ModelError::ZeroWidth { signal: name.to_string() });
        }
        if self.declared.contains_key(name) {
            return Err(ModelError::DuplicateSignal { signal: name.to_string() });
        }
        self.declared.insert(name.to_string(), width);
        Ok(())
    }

    pub fn branch_id(&self, name: &str) -> Option<BranchId> {
        self.branches.iter().position(|b| b.name == name).map(BranchId)
    }

    fn open(&self, branch: BranchId) -> Result<&BranchRec> {
        let rec = self
            .branches
            .get(branch.0)
            .ok_or_else(|| ModelError::UnknownBranch { branch: format!("#{}", branch.0) })?;
        if rec.merged {
            return Err(ModelError::BranchClosed { branch: rec.name.clone() });
        }
        Ok(rec)
    }

    pub fn add_step(&mut self, branch: BranchId, body: StepBody) -> Result<BranchId> {
        self.open(branch)?;
        if let StepKind::Delay(n) = body.kind {
            if n < 2 {
                return Err(ModelError::InvalidDelay { step: body.name.clone(), cycles: n });
            }
        }
        let mut fresh: Vec<&str> = Vec::new();
        for d in &body.defines {
            check_name(&d.name)?;
            if d.width == 0 {
                return Err(ModelError::ZeroWidth { signal: d.name.clone() });
            }
            if self.declared.contains_key(&d.name) || fresh.contains(&d.name.as_str()) {
                return Err(ModelError::DuplicateSignal { signal: d.name.clone() });
            }
            fresh.push(&d.name);
        }
        for d in &body.defines {
            self.declared.insert(d.name.clone(), d.width);
        }
        self.events.push(Event::Step { branch, body });
        Ok(branch)
    }

    /// Opens a new branch rooted at the current tip of `parent`.
    pub fn split(&mut self, parent: BranchId, name: &str) -> Result<BranchId> {
        self.open(parent)?;
        if self.branch_id(name).is_some() {
            return Err(ModelError::DuplicateBranch { branch: name.to_string() });
        }
        let child = BranchId(self.branches.len());
        self.branches.push(BranchRec {
            name: name.to_string(),
            merged: false,
        });
        self.events.push(Event::Split { child, parent });
        Ok(child)
    }

    pub fn merge(&mut self, branch: BranchId) -> Result<BranchId> {
        self.merge_into(&[branch], MAIN)
    }

    /// Joins the tips of `branches` with the tip of `into` in a new merge
    /// zone, which becomes the tip of `into`.
    pub fn merge_into(&mut self, branches: &[BranchId], into: BranchId) -> Result<BranchId> {
        self.open(into)?;
        for (i, &b) in branches.iter().enumerate() {
            let rec = self.open(b)?;
            if b == into || branches[..i].contains(&b) {
                return Err(ModelError::SelfMerge { branch: rec.name.clone() });
            }
        }
        for &b in branches {
            self.branches[b.0].merged = true;
        }
        self.events.push(Event::Merge { branches: branches.to_vec(), into });
        Ok(into)
    }

    pub fn drive_output(&mut self, mapping: &[(&str, &str)]) -> Result<()> {
        self.drive_output_on(MAIN, mapping)
    }

    /// Connects signals to output ports at the final tip of `branch`.
    pub fn drive_output_on(&mut self, branch: BranchId, mapping: &[(&str, &str)]) -> Result<()> {
        let label = self.open(branch)?.name.clone();
        for &(port, signal) in mapping {
            check_name(port)?;
            if self.inputs.iter().any(|(i, _)| i == port) {
                return Err(ModelError::InvalidName { name: port.to_string(), reason: "already an input port" });
            }
            if !self.declared.contains_key(signal) {
                return Err(ModelError::UnknownSignal { signal: signal.to_string(), zone: label });
            }
            if self.outputs.iter().any(|(p, _, _)| p == port) {
                return Err(ModelError::DuplicateOutput { output: port.to_string() });
            }
            self.outputs.push((port.to_string(), signal.to_string(), branch));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<SyncGraph> {
        for (i, b) in self.branches.iter().enumerate() {
            let has_output = self.outputs.iter().any(|o| o.2 == BranchId(i));
            if !b.merged && !has_output {
                return Err(ModelError::UnterminatedBranch { branch: b.name.clone() });
            }
        }
        Replay::new(self).run()
    }
}

struct Replay<'a> {
    src: &'a PipeBuilder,
    g: SyncGraph,
    tips: Vec<ZoneId>,
    /// Reads per zone in first-use order; resolved once all zones exist.
    reads: Vec<Vec<String>>,
}

impl<'a> Replay<'a> {
    fn new(src: &'a PipeBuilder) -> Self {
        let g = SyncGraph {
            name: src.name.clone(),
            zones: Vec::new(),
            relations: Vec::new(),
            signals: IndexMap::new(),
            steps: Vec::new(),
            outputs: Vec::new(),
            branches: Vec::new(),
            input_zone: ZoneId(0),
        };
        Replay { src, g, tips: Vec::new(), reads: Vec::new() }
    }

    fn new_zone(&mut self, label: &str, kind: ZoneKind, branch: BranchId) -> ZoneId {
        let id = ZoneId(self.g.zones.len());
        let mut unique = label.to_string();
        let mut k = 2;
        while self.g.zones.iter().any(|z| z.label == unique) {
            unique = format!("{label}_{k}");
            k += 1;
        }
        self.g.zones.push(TimeZone { id, label: unique, kind, branch, slots: IndexMap::new() });
        self.reads.push(Vec::new());
        self.g.branches[branch.0].zones.push(id);
        id
    }

    fn relation(&mut self, source: ZoneId, sink: ZoneId, latency: Latency, origin: RelationOrigin) -> RelationId {
        let id = RelationId(self.g.relations.len());
        self.g.relations.push(Relation {
            id,
            source,
            sink,
            latency,
            protocol: None,
            origin,
            signal: None,
            step: None,
            implementation: None,
            primitive: None,
        });
        id
    }

    fn declare(&mut self, zone: ZoneId, name: &str, width: u32) {
        self.g.signals.insert(
            name.to_string(),
            SignalDecl { name: name.to_string(), width, declaring_zone: zone },
        );
        self.g.zones[zone.0]
            .slots
            .insert(name.to_string(), Slot { status: SignalStatus::DeclaredUnused, feed: None });
    }

    fn note_read(&mut self, zone: ZoneId, name: &str) {
        let reads = &mut self.reads[zone.0];
        if !reads.iter().any(|r| r == name) {
            reads.push(name.to_string());
        }
    }

    fn run(mut self) -> Result<SyncGraph> {
        self.g.branches.push(BranchInfo {
            name: self.src.branches[0].name.clone(),
            parent: None,
            root: ZoneId(0),
            zones: Vec::new(),
            merged_into: None,
        });
        let input = self.new_zone(INPUT_LABEL, ZoneKind::Input, MAIN);
        self.g.input_zone = input;
        for (n, w) in &self.src.inputs {
            self.declare(input, n, *w);
        }
        self.tips.push(input);

        for ev in &self.src.events {
            match ev {
                Event::Step { branch, body } => self.step(*branch, body),
                Event::Split { child, parent } => {
                    let root = self.tips[parent.0];
                    self.g.branches.push(BranchInfo {
                        name: self.src.branches[child.0].name.clone(),
                        parent: Some(*parent),
                        root,
                        zones: Vec::new(),
                        merged_into: None,
                    });
                    self.tips.push(root);
                }
                Event::Merge { branches, into } => self.merge(branches, *into),
            }
        }

        for (port, signal, branch) in &self.src.outputs {
            let zone = self.tips[branch.0];
            if self.g.zones[zone.0].kind != ZoneKind::Input {
                self.g.zones[zone.0].kind = ZoneKind::Output;
            }
            self.note_read(zone, signal);
            self.g.outputs.push(OutputPort { name: port.clone(), signal: signal.clone(), zone });
        }

        self.resolve_reads()?;
        self.check_widths()?;
        self.g.forward_order()?;
        Ok(self.g)
    }

    fn step(&mut self, branch: BranchId, body: &StepBody) {
        let source = self.tips[branch.0];
        let sink = self.new_zone(&body.name, ZoneKind::Step, branch);
        let rel = self.relation(source, sink, Latency::Known(body.kind.latency()), RelationOrigin::UserStep);
        let step = StepId(self.g.steps.len());
        self.g.relations[rel.0].step = Some(step);
        for r in body.reads() {
            self.note_read(source, &r);
        }
        for d in &body.defines {
            self.declare(sink, &d.name, d.width);
        }
        if body.kind == StepKind::Wire {
            // chained defines are consumed inside the sink zone
            for r in body.defines.iter().flat_map(|d| d.expr.refs()) {
                if body.defines.iter().any(|d| d.name == r) {
                    self.note_read(sink, &r);
                }
            }
        }
        self.g.steps.push(RecordedStep { body: body.clone(), source, sink, relation: rel });
        self.tips[branch.0] = sink;
    }

    fn merge(&mut self, branches: &[BranchId], into: BranchId) {
        let first = &self.src.branches[branches[0].0].name;
        let last = match self.g.branches[branches[0].0].zones.last() {
            Some(z) => self.g.zones[z.0].label.clone(),
            None => self.g.zones[self.tips[branches[0].0].0].label.clone(),
        };
        let label = format!("merged_{first}_{last}");
        let target_tip = self.tips[into.0];
        let zone = self.new_zone(&label, ZoneKind::Merge, into);
        let mut sources = vec![target_tip];
        for b in branches {
            let tip = self.tips[b.0];
            if !sources.contains(&tip) {
                sources.push(tip);
            }
            self.g.branches[b.0].merged_into = Some(zone);
        }
        for s in sources {
            self.relation(s, zone, Latency::Missing, RelationOrigin::Balancing);
        }
        self.tips[into.0] = zone;
    }

    /// Marks each read as a local use, a merge-carried value, or a pending
    /// slot backed by a missing relation. Unknown names are reported at the
    /// first zone in forward order that needs them.
    fn resolve_reads(&mut self) -> Result<()> {
        let order = self.g.forward_order()?;
        for &z in &order {
            let anc = self.g.ancestors(z);
            for name in self.reads[z.0].clone() {
                let known = self.g.signals.get(&name).map(|d| d.declaring_zone);
                let slot = self.g.zones[z.0].slots.get(&name).map(|s| s.status);
                match (known, slot) {
                    (Some(decl), Some(_)) if decl == z => {
                        self.g.zones[z.0].slots[&name].status = SignalStatus::DeclaredLocalUse;
                    }
                    (Some(decl), _) if anc[decl.0] => {
                        // a merge zone carries whatever its inbound tips declare
                        let carried = self
                            .g
                            .inbound(z)
                            .into_iter()
                            .find(|r| r.origin == RelationOrigin::Balancing && r.source == decl)
                            .map(|r| r.id);
                        let slot = match carried {
                            Some(feed) => Slot { status: SignalStatus::Propagated, feed: Some(feed) },
                            None => {
                                let rel = self.relation(decl, z, Latency::Missing, RelationOrigin::Resolution);
                                self.g.relations[rel.0].signal = Some(name.clone());
                                Slot { status: SignalStatus::PendingLocal, feed: Some(rel) }
                            }
                        };
                        self.g.zones[z.0].slots.insert(name.clone(), slot);
                    }
                    _ => {
                        return Err(ModelError::UnknownSignal {
                            signal: name,
                            zone: self.g.zones[z.0].label.clone(),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    fn check_widths(&self) -> Result<()> {
        for step in &self.g.steps {
            let mut local: HashMap<&str, u32> = HashMap::new();
            for d in &step.body.defines {
                let lookup = |n: &str| {
                    if step.body.kind == StepKind::Wire {
                        if let Some(w) = local.get(n) {
                            return Some(*w);
                        }
                    }
                    self.g.signals.get(n).map(|s| s.width)
                };
                let inferred = d.expr.width(&lookup).map_err(|e| ModelError::ExprWidth {
                    signal: d.name.clone(),
                    message: e.to_string(),
                })?;
                if inferred != d.width {
                    return Err(ModelError::WidthMismatch {
                        signal: d.name.clone(),
                        declared: d.width,
                        inferred,
                    });
                }
                local.insert(&d.name, d.width);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::var;
    use crate::resolve::balance_merges;

    fn labels(g: &SyncGraph, order: &[ZoneId]) -> Vec<String> {
        order.iter().map(|z| g.label(*z).to_string()).collect()
    }

    #[test]
    fn running_example_order_and_latency() {
        let g = fixtures::running_example().build().unwrap();
        let fwd = g.forward_order().unwrap();
        assert_eq!(labels(&g, &fwd), ["_init_", "mul", "addA", "addB", "merged_mul_mul", "xor"]);
        assert_eq!(
            labels(&g, &g.backward_order().unwrap()),
            ["xor", "merged_mul_mul", "addB", "addA", "mul", "_init_"]
        );
        let merged = g.zone_by_label("merged_mul_mul").unwrap();
        assert_eq!(g.inbound(merged).len(), 2);
        assert!(g.inbound(merged).iter().all(|r| r.latency == Latency::Missing));
        let b = balance_merges(&g).unwrap();
        let xor = b.zone_by_label("xor").unwrap();
        assert_eq!(b.equivalent_latency(b.input_zone, xor).unwrap(), 2);
        assert_eq!(b.equivalent_latency(xor, xor).unwrap(), 0);
        let d = balance_merges(&fixtures::running(false, Some(2)).build().unwrap()).unwrap();
        assert_eq!(d.equivalent_latency(d.input_zone, d.zone_by_label("xor").unwrap()).unwrap(), 4);
    }

    #[test]
    fn pending_slots_and_missing_relations() {
        let g = balance_merges(&fixtures::running_example_e().build().unwrap()).unwrap();
        let xor = g.zone_by_label("xor").unwrap();
        assert_eq!(g.zone(xor).slots["e"].status, SignalStatus::PendingLocal);
        assert_eq!(g.zone(xor).kind, ZoneKind::Output);
        let m: Vec<(String, String, String, u64, u32)> = g
            .missing_relations()
            .unwrap()
            .into_iter()
            .map(|m| {
                (m.signal, g.label(m.available_zone).into(), g.label(m.needing_zone).into(), m.depth, m.width)
            })
            .collect();
        assert_eq!(
            m,
            vec![
                ("x".into(), "_init_".into(), "addA".into(), 1, 8),
                ("e".into(), "_init_".into(), "xor".into(), 2, 4),
            ]
        );
        // merge carriage: values declared at inbound tips are usable in the merge zone
        let merged = g.zone(g.zone_by_label("merged_mul_mul").unwrap());
        assert_eq!(merged.slots["mulXY"].status, SignalStatus::Propagated);
        assert_eq!(merged.slots["sum2XY"].status, SignalStatus::Propagated);
        let d = balance_merges(&fixtures::running_example_delay().build().unwrap()).unwrap();
        assert_eq!(d.missing_relations().unwrap()[1].depth, 4);
    }

    #[test]
    fn missing_relations_need_balancing() {
        let g = fixtures::running_example_e().build().unwrap();
        assert!(matches!(g.missing_relations(), Err(ModelError::MissingLatency { .. })));
    }

    #[test]
    fn builder_errors() {
        assert_eq!(
            PipeBuilder::new("p", &[("x", 8), ("x", 8)]).unwrap_err(),
            ModelError::DuplicateSignal { signal: "x".into() }
        );
        assert_eq!(PipeBuilder::new("p", &[("x", 0)]).unwrap_err(), ModelError::ZeroWidth { signal: "x".into() });
        let mut p = PipeBuilder::new("p", &[("x", 8)]).unwrap();
        let twice = StepBody::reg("s").define("a", 8, var("x")).define("a", 8, var("x"));
        assert_eq!(p.add_step(MAIN, twice).unwrap_err(), ModelError::DuplicateSignal { signal: "a".into() });
        assert_eq!(p.merge(MAIN).unwrap_err(), ModelError::SelfMerge { branch: "main".into() });
        let b = p.split(MAIN, "b").unwrap();
        p.merge(b).unwrap();
        assert_eq!(p.split(b, "c").unwrap_err(), ModelError::BranchClosed { branch: "b".into() });
        assert_eq!(
            p.add_step(b, StepBody::reg("t")).unwrap_err(),
            ModelError::BranchClosed { branch: "b".into() }
        );
        assert_eq!(
            p.drive_output(&[("q", "missing")]).unwrap_err(),
            ModelError::UnknownSignal { signal: "missing".into(), zone: "main".into() }
        );
        assert_eq!(
            p.add_step(MAIN, StepBody::delay("d", 1)).unwrap_err(),
            ModelError::InvalidDelay { step: "d".into(), cycles: 1 }
        );
    }

    #[test]
    fn names_must_be_plain_identifiers() {
        let bad = |n: &str| matches!(PipeBuilder::new("p", &[(n, 8)]), Err(ModelError::InvalidName { .. }));
        for n in ["rst", "clk", "out_ready", "wire", "9a", "a-b", ""] {
            assert!(bad(n), "{n}");
        }
        assert!(!bad("_ok9"));
        let mut p = PipeBuilder::new("p", &[("x", 8)]).unwrap();
        assert!(matches!(p.drive_output(&[("x", "x")]), Err(ModelError::InvalidName { .. })));
        assert!(matches!(
            p.add_step(MAIN, StepBody::reg("s").define("in_valid", 8, var("x"))),
            Err(ModelError::InvalidName { .. })
        ));
    }

    #[test]
    fn unknown_read_names_first_zone() {
        let mut p = PipeBuilder::new("p", &[("x", 8)]).unwrap();
        p.add_step(MAIN, StepBody::reg("s1").define("a", 8, var("x"))).unwrap();
        p.add_step(MAIN, StepBody::reg("s2").define("b", 8, var("ghost"))).unwrap();
        p.drive_output(&[("q", "b")]).unwrap();
        assert_eq!(p.build().unwrap_err(), ModelError::UnknownSignal { signal: "ghost".into(), zone: "s1".into() });
    }

    #[test]
    fn parallel_declaration_is_not_visible() {
        let mut p = PipeBuilder::new("p", &[("x", 8)]).unwrap();
        let side = p.split(MAIN, "side").unwrap();
        p.add_step(side, StepBody::reg("s").define("a", 8, var("x"))).unwrap();
        p.add_step(MAIN, StepBody::reg("m").define("b", 8, var("a"))).unwrap();
        p.merge(side).unwrap();
        p.drive_output(&[("q", "b")]).unwrap();
        assert_eq!(p.build().unwrap_err(), ModelError::UnknownSignal { signal: "a".into(), zone: "_init_".into() });
    }

    #[test]
    fn empty_branch_merge_has_one_trivial_edge() {
        let mut p = PipeBuilder::new("p", &[("x", 8)]).unwrap();
        let b = p.split(MAIN, "b").unwrap();
        p.merge(b).unwrap();
        p.drive_output(&[("q", "x")]).unwrap();
        let g = balance_merges(&p.build().unwrap()).unwrap();
        let merged = g.zone_by_label("merged_b__init_").unwrap();
        let inbound = g.inbound(merged);
        assert_eq!(inbound.len(), 1);
        assert_eq!(inbound[0].latency, Latency::Known(0));
    }

    #[test]
    fn width_mismatch_and_unterminated_branch() {
        let mut p = PipeBuilder::new("p", &[("x", 8)]).unwrap();
        p.add_step(MAIN, StepBody::reg("s").define("a", 9, var("x"))).unwrap();
        p.drive_output(&[("q", "a")]).unwrap();
        assert_eq!(
            p.build().unwrap_err(),
            ModelError::WidthMismatch { signal: "a".into(), declared: 9, inferred: 8 }
        );
        let mut p = PipeBuilder::new("p", &[("x", 8)]).unwrap();
        p.split(MAIN, "lost").unwrap();
        p.drive_output(&[("q", "x")]).unwrap();
        assert_eq!(p.build().unwrap_err(), ModelError::UnterminatedBranch { branch: "lost".into() });
    }

    #[test]
    fn passthrough_has_two_zones() {
        let g = fixtures::passthrough().build().unwrap();
        assert_eq!(g.zones.len(), 2);
        assert_eq!(g.zone(g.input_zone).slots["a"].status, SignalStatus::DeclaredLocalUse);
        assert!(g.missing_relations().unwrap().is_empty());
        let mut p = PipeBuilder::new("p", &[("a", 8)]).unwrap();
        p.drive_output(&[("q", "a")]).unwrap();
        assert_eq!(p.build().unwrap().zones.len(), 1);
    }

    #[test]
    fn build_is_deterministic() {
        let a = fixtures::running_example_e().build().unwrap();
        let b = fixtures::running_example_e().build().unwrap();
        assert_eq!(a, b);
    }
}
