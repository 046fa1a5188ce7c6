use std::fmt::Write as _;

use crate::model::{Implementation, Latency, RelationOrigin, SignalStatus, SyncGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DotOptions {
    pub color: bool,
}

impl Default for DotOptions {
    fn default() -> Self {
        DotOptions { color: true }
    }
}

impl DotOptions {
    /// Colors stay on unless `PIPEFORGE_COLOR` is set to `0`, `off`,
    /// `false` or `never`.
    pub fn from_env() -> Self {
        let off = std::env::var("PIPEFORGE_COLOR")
            .map(|v| matches!(v.to_ascii_lowercase().as_str(), "0" | "off" | "false" | "never" | "no"))
            .unwrap_or(false);
        DotOptions { color: !off }
    }
}

fn status_color(status: SignalStatus) -> &'static str {
    match status {
        SignalStatus::PendingLocal => "red",
        SignalStatus::DeclaredLocalUse => "darkgreen",
        SignalStatus::DeclaredUnused => "gray50",
        SignalStatus::Propagated => "blue",
        SignalStatus::ConnectedExternal => "black",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Graphviz rendering of a graph at any stage: one table node per zone
/// listing its slots, edges labeled with latency or `?`.
pub fn emit_dot(graph: &SyncGraph, options: &DotOptions) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", escape(&graph.name));
    let _ = writeln!(out, "    rankdir=TB;");
    let _ = writeln!(out, "    node [shape=plaintext, fontname=\"Helvetica\"];");
    let _ = writeln!(out, "    edge [fontname=\"Helvetica\"];");
    for z in &graph.zones {
        let _ = write!(
            out,
            "    z{} [label=<<table border=\"0\" cellborder=\"1\" cellspacing=\"0\"><tr><td{}><b>{}</b></td></tr>",
            z.id.0,
            if options.color { " bgcolor=\"lightgray\"" } else { "" },
            escape(&z.label)
        );
        for (name, slot) in &z.slots {
            let text = escape(name);
            if options.color {
                let _ = write!(out, "<tr><td><font color=\"{}\">{text}</font></td></tr>", status_color(slot.status));
            } else {
                let _ = write!(out, "<tr><td>{text}</td></tr>");
            }
        }
        let _ = writeln!(out, "</table>>];");
    }
    for r in &graph.relations {
        let label = match r.latency {
            Latency::Known(l) => l.to_string(),
            Latency::Missing => "?".to_string(),
        };
        let label = match &r.signal {
            Some(s) => format!("{} [{label}]", escape(s)),
            None => format!("[{label}]"),
        };
        let (style, color) = match (r.latency, r.origin, r.implementation) {
            (Latency::Missing, _, _) => ("dashed", "red"),
            (_, RelationOrigin::Resolution, Some(Implementation::Transitive)) => ("dotted", "blue"),
            (_, RelationOrigin::Resolution, _) => ("solid", "purple"),
            _ => ("solid", "black"),
        };
        let color_attr = if options.color { format!(", color={color}, fontcolor={color}") } else { String::new() };
        let _ = writeln!(
            out,
            "    z{} -> z{} [label=\"{label}\", style={style}{color_attr}];",
            r.source.0, r.sink.0
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::resolve::{balance_merges, resolve, PrimitivePolicy, Strategy};

    fn edge_line<'a>(dot: &'a str, from: usize, to: usize, signal: &str) -> &'a str {
        let prefix = format!("z{from} -> z{to} [label=\"{signal}");
        dot.lines().find(|l| l.trim_start().starts_with(&prefix)).unwrap()
    }

    #[test]
    fn missing_then_direct() {
        let g = balance_merges(&fixtures::running_example_e().build().unwrap()).unwrap();
        let xor = g.zone_by_label("xor").unwrap().0;
        let dot = emit_dot(&g, &DotOptions::default());
        let line = edge_line(&dot, 0, xor, "e");
        assert!(line.contains("[?]") && line.contains("dashed") && line.contains("red"), "{line}");
        assert!(dot.contains("<font color=\"red\">e</font>"));

        let r = resolve(&g, &Strategy::DirectBackward(PrimitivePolicy::auto())).unwrap();
        let dot = emit_dot(&r, &DotOptions::default());
        let line = edge_line(&dot, 0, xor, "e");
        assert!(line.contains("[2]") && line.contains("solid") && line.contains("purple"), "{line}");
    }

    #[test]
    fn passthrough_has_two_nodes_one_edge() {
        let g = fixtures::passthrough().build().unwrap();
        let dot = emit_dot(&g, &DotOptions { color: false });
        assert_eq!(dot.matches("<table").count(), 2);
        assert_eq!(dot.matches(" -> ").count(), 1);
        assert!(dot.contains("[label=\"[0]\""));
        assert!(!dot.contains("color="));
    }
}
