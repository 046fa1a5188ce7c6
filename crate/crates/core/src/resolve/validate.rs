use std::fmt;

use serde::Serialize;

use crate::model::{Latency, RelationOrigin, SignalStatus, SyncGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Check {
    NoMissing,
    Balanced,
    Feeds,
    Acyclic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub check: Check,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn failed(&self, check: Check) -> bool {
        self.issues.iter().any(|i| i.check == check)
    }

    fn push(&mut self, check: Check, message: String) {
        self.issues.push(ValidationIssue { check, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("all checks passed");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{:?}: {}", issue.check, issue.message)?;
        }
        Ok(())
    }
}

/// Checks a resolved graph for synchronization consistency. Failures are
/// collected, not raised.
pub fn validate(g: &SyncGraph) -> ValidationReport {
    let mut report = ValidationReport::default();

    for r in &g.relations {
        if r.latency == Latency::Missing {
            report.push(
                Check::NoMissing,
                format!("relation {} (`{}` -> `{}`) is missing", r.id.0, g.label(r.source), g.label(r.sink)),
            );
        }
    }
    for z in &g.zones {
        for (name, slot) in &z.slots {
            if slot.status == SignalStatus::PendingLocal {
                report.push(Check::NoMissing, format!("`{name}` is still pending in `{}`", z.label));
            }
        }
    }

    if g.forward_order().is_err() {
        report.push(Check::Acyclic, "the graph contains a cycle".to_string());
        return report;
    }

    let depth = match g.zone_depths() {
        Ok(d) => Some(d),
        Err(e) => {
            report.push(Check::Balanced, e.to_string());
            None
        }
    };

    for z in &g.zones {
        for (name, slot) in &z.slots {
            if slot.status.is_declared() || slot.status == SignalStatus::PendingLocal {
                continue;
            }
            let Some(feed) = slot.feed.filter(|f| f.0 < g.relations.len()) else {
                report.push(Check::Feeds, format!("`{name}` in `{}` has no feeding relation", z.label));
                continue;
            };
            let r = g.relation(feed);
            let signal_ok = match r.origin {
                RelationOrigin::Resolution => r.signal.as_deref() == Some(name.as_str()),
                _ => g.signals.get(name).is_some_and(|d| d.declaring_zone == r.source),
            };
            if r.sink != z.id || !signal_ok || !g.zone(r.source).slots.contains_key(name) {
                report.push(
                    Check::Feeds,
                    format!("`{name}` in `{}` is fed by unrelated relation {}", z.label, feed.0),
                );
                continue;
            }
            let feeders = g
                .relations
                .iter()
                .filter(|o| {
                    o.origin == RelationOrigin::Resolution && o.sink == z.id && o.signal.as_deref() == Some(name)
                })
                .count();
            if feeders > 1 {
                report.push(Check::Feeds, format!("`{name}` in `{}` is driven by {feeders} relations", z.label));
            }
            if let (Some(depth), Latency::Known(l)) = (&depth, r.latency) {
                let expected = depth[z.id.0].checked_sub(depth[r.source.0]);
                if expected != Some(l) {
                    report.push(
                        Check::Feeds,
                        format!(
                            "relation {} carrying `{name}` from `{}` to `{}` has latency {l}, expected {}",
                            feed.0,
                            g.label(r.source),
                            z.label,
                            expected.map_or("none".to_string(), |e| e.to_string()),
                        ),
                    );
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::resolve::{balance_merges, resolve, PrimitivePolicy, Strategy};

    #[test]
    fn unresolved_graph_reports_missing() {
        let g = balance_merges(&fixtures::running_example_e().build().unwrap()).unwrap();
        let report = validate(&g);
        assert!(report.failed(Check::NoMissing));
        assert!(report.to_string().contains("`e` is still pending in `xor`"));
    }

    #[test]
    fn corrupted_latency_names_relation() {
        let mut g = resolve(
            &fixtures::running_example_e().build().unwrap(),
            &Strategy::DirectBackward(PrimitivePolicy::auto()),
        )
        .unwrap();
        let xor = g.zone_by_label("xor").unwrap();
        let feed = g.zone(xor).slots["e"].feed.unwrap();
        g.relations[feed.0].latency = Latency::Known(3);
        let report = validate(&g);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].check, Check::Feeds);
        assert!(report.issues[0].message.contains(&format!("relation {}", feed.0)));
    }
}
