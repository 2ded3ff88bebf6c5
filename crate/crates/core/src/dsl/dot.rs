//! Graphviz export. Thimacs become nested clusters; at the dynamic level
//! each event is a cluster of proxy nodes for the nodes it covers.

use std::fmt::Write;

use thiserror::Error;

use crate::dynamics::derive_chronology;
use crate::model::{ActionKind, Child, ChronoKind, Model, NodeRef, ThimacIdx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Level {
    #[default]
    Static,
    Dynamic,
}

impl std::str::FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(Level::Static),
            "dynamic" => Ok(Level::Dynamic),
            other => Err(format!("unknown level `{other}` (static|dynamic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DotError {
    #[error("dynamic export needs at least one event")]
    NoEvents,
}

fn q(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn node_attrs(model: &Model, n: NodeRef) -> String {
    match n {
        NodeRef::Action(i) => {
            let a = &model.actions[i];
            let label = match &a.label {
                Some(l) => format!("{} ({})\n{}", a.name, a.kind, l),
                None => format!("{} ({})", a.name, a.kind),
            };
            let style = if a.implicit { ", style=dotted" } else { "" };
            let shape = if a.kind == ActionKind::Create { "box" } else { "ellipse" };
            format!("label={}, shape={shape}{style}", q(&label))
        }
        NodeRef::Storage(i) => {
            let s = &model.storages[i];
            format!("label={}, shape=cylinder", q(&s.label))
        }
        NodeRef::Junction(i) => {
            let j = &model.junctions[i];
            format!("label={}, shape=diamond", q(j.mode.keyword()))
        }
    }
}

fn cluster(model: &Model, t: ThimacIdx, depth: usize, out: &mut String) {
    let th = model.thimac(t);
    let pad = "  ".repeat(depth);
    let _ = writeln!(out, "{pad}subgraph {} {{", q(&format!("cluster_{}", th.id)));
    let mut label = th.name.clone();
    if !th.realizable {
        label.push_str(" (unrealizable)");
    }
    if th.delimiter {
        label.push_str(" (delimiter)");
    }
    let _ = writeln!(out, "{pad}  label={};", q(&label));
    for child in &th.children {
        match *child {
            Child::Thimac(sub) => cluster(model, sub, depth + 1, out),
            Child::Node(n) => {
                let _ = writeln!(out, "{pad}  {} [{}];", q(model.node_id(n)), node_attrs(model, n));
            }
        }
    }
    let _ = writeln!(out, "{pad}}}");
}

pub fn export_dot(model: &Model, level: Level) -> Result<String, DotError> {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", q(&model.name));
    match level {
        Level::Static => {
            if !model.is_empty() {
                out.push_str("  compound=true;\n");
            }
            for root in model.roots() {
                cluster(model, root, 1, &mut out);
            }
            for f in &model.flows {
                let _ = writeln!(out, "  {} -> {};", q(model.node_id(f.from)), q(model.node_id(f.to)));
            }
            for t in &model.triggers {
                let _ = writeln!(
                    out,
                    "  {} -> {} [style=dashed];",
                    q(model.node_id(t.from)),
                    q(model.node_id(t.to))
                );
            }
        }
        Level::Dynamic => dynamic(model, &mut out)?,
    }
    out.push_str("}\n");
    Ok(out)
}

fn dynamic(model: &Model, out: &mut String) -> Result<(), DotError> {
    if model.events.is_empty() {
        return Err(DotError::NoEvents);
    }
    let proxy = |e: &str, n: NodeRef| format!("{e}/{}", model.node_id(n));
    let anchor = |e: &str| format!("event:{e}");
    for (i, ev) in model.events.iter().enumerate() {
        let mut label = ev.label.clone().unwrap_or_else(|| ev.id.clone());
        if ev.polarity == crate::model::Polarity::Absent {
            label.push_str(" (absent)");
        }
        let _ = writeln!(out, "  subgraph {} {{", q(&format!("cluster_event_{}", ev.id)));
        let _ = writeln!(out, "    label={};\n    style=rounded;", q(&label));
        let _ = writeln!(out, "    {} [shape=point];", q(&anchor(&ev.id)));
        let nodes = model.cover_nodes(crate::model::EventIdx(i));
        for &n in &nodes {
            let _ = writeln!(out, "    {} [{}];", q(&proxy(&ev.id, n)), node_attrs(model, n));
        }
        for f in &model.flows {
            if nodes.contains(&f.from) && nodes.contains(&f.to) {
                let _ = writeln!(out, "    {} -> {};", q(&proxy(&ev.id, f.from)), q(&proxy(&ev.id, f.to)));
            }
        }
        for t in &model.triggers {
            if nodes.contains(&t.from) && nodes.contains(&t.to) {
                let _ = writeln!(
                    out,
                    "    {} -> {} [style=dashed];",
                    q(&proxy(&ev.id, t.from)),
                    q(&proxy(&ev.id, t.to))
                );
            }
        }
        out.push_str("  }\n");
    }
    // Chronology between anchors; declared edges when derivation fails.
    let edges: Vec<(String, String, ChronoKind)> = match derive_chronology(model) {
        Ok(g) => g
            .edges
            .iter()
            .map(|e| (g.events[e.from].clone(), g.events[e.to].clone(), e.kind))
            .collect(),
        Err(_) => model
            .chronology
            .iter()
            .map(|c| (model.event(c.from).id.clone(), model.event(c.to).id.clone(), c.kind))
            .collect(),
    };
    for (a, b, kind) in edges {
        let attrs = match kind {
            ChronoKind::Precede => "color=blue",
            ChronoKind::Repeat => "color=blue, style=bold, label=\"repeat\"",
        };
        let _ = writeln!(out, "  {} -> {} [{attrs}];", q(&anchor(&a)), q(&anchor(&b)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    #[test]
    fn empty_model_has_empty_body() {
        let m = Model::new("empty").unwrap();
        assert_eq!(export_dot(&m, Level::Static).unwrap(), "digraph \"empty\" {\n}\n");
        assert_eq!(export_dot(&m, Level::Dynamic), Err(DotError::NoEvents));
    }

    #[test]
    fn styling_contract() {
        let m = parse_model(
            r#"model "s" {
  thimac A {
    create c
    process p
    storage s
  }
  flow A.c -> A.p
  trigger A.p => A.c
  event e covers { A }
}"#,
        )
        .unwrap();
        let s = export_dot(&m, Level::Static).unwrap();
        assert!(s.contains("subgraph \"cluster_A\""));
        assert!(s.contains("\"A.p\" -> \"A.c\" [style=dashed];"));
        assert!(s.contains("\"A.c\" -> \"A.p\";"));
        assert!(s.contains("shape=cylinder"));
        let d = export_dot(&m, Level::Dynamic).unwrap();
        assert!(d.contains("subgraph \"cluster_event_e\""));
        assert!(d.contains("\"e/A.s\""));
    }
}
