use std::fmt::Write;

use crate::model::{Child, ChronoKind, Model, NodeRef, Polarity, Tense, ThimacIdx};

/// Canonical `.tm` text: two-space indentation, one item per line, items in
/// declaration order grouped as thimacs, flows, triggers, guards, events,
/// chronology, focus groups. Implicit creates are not printed.
pub fn render_model(model: &Model) -> String {
    let mut body = String::new();
    for root in model.roots() {
        render_thimac(model, root, 1, &mut body);
    }
    for f in &model.flows {
        let _ = writeln!(body, "  flow {} -> {}", model.node_id(f.from), model.node_id(f.to));
    }
    for t in &model.triggers {
        let _ = writeln!(body, "  trigger {} => {}", model.node_id(t.from), model.node_id(t.to));
    }
    for g in &model.guards {
        let not = if g.negated { "not " } else { "" };
        let _ = writeln!(body, "  guard {not}{} on {}", g.input, model.node_id(g.node));
    }
    for e in &model.events {
        let mut line = format!("  event {}", e.id);
        if let Some(label) = &e.label {
            let _ = write!(line, " {}", quote(label));
        }
        if e.polarity == Polarity::Absent {
            line.push_str(" absent");
        }
        if let Some(d) = &e.duration {
            let _ = write!(line, " duration {} {}", d.magnitude, d.unit);
        }
        match e.tense {
            Some(Tense::Past) => line.push_str(" tense past"),
            Some(Tense::Now) => line.push_str(" tense now"),
            None => {}
        }
        let covers: Vec<&str> = e.covers.iter().map(|c| model.cover_id(*c)).collect();
        let _ = writeln!(body, "{line} covers {{ {} }}", covers.join(", "));
    }
    if !model.chronology.is_empty() {
        body.push_str("  chronology {\n");
        for c in &model.chronology {
            let repeat = if c.kind == ChronoKind::Repeat { "repeat " } else { "" };
            let _ = writeln!(
                body,
                "    {repeat}{} -> {}",
                model.event(c.from).id,
                model.event(c.to).id
            );
        }
        body.push_str("  }\n");
    }
    for f in &model.focus {
        let ids: Vec<&str> = f.events.iter().map(|e| model.event(*e).id.as_str()).collect();
        let _ = writeln!(body, "  focus {} {{ {} }}", f.name, ids.join(", "));
    }
    if body.is_empty() {
        format!("model {} {{ }}\n", quote(&model.name))
    } else {
        format!("model {} {{\n{body}}}\n", quote(&model.name))
    }
}

fn render_thimac(model: &Model, t: ThimacIdx, depth: usize, out: &mut String) {
    let th = model.thimac(t);
    let pad = "  ".repeat(depth);
    let mut head = format!("{pad}thimac {}", th.name);
    if !th.realizable {
        head.push_str(" unrealizable");
    }
    if th.delimiter {
        head.push_str(" delimiter");
    }
    let mut inner = String::new();
    for child in &th.children {
        match *child {
            Child::Thimac(sub) => render_thimac(model, sub, depth + 1, &mut inner),
            Child::Node(NodeRef::Action(i)) => {
                let a = &model.actions[i];
                if a.implicit {
                    continue;
                }
                let _ = write!(inner, "{pad}  {} {}", a.kind, a.name);
                if let Some(label) = &a.label {
                    let _ = write!(inner, " {}", quote(label));
                }
                inner.push('\n');
            }
            Child::Node(NodeRef::Storage(i)) => {
                let s = &model.storages[i];
                let _ = write!(inner, "{pad}  storage {}", s.name);
                if s.label != s.name {
                    let _ = write!(inner, " {}", quote(&s.label));
                }
                inner.push('\n');
            }
            Child::Node(NodeRef::Junction(i)) => {
                let j = &model.junctions[i];
                let _ = writeln!(inner, "{pad}  junction {} {}", j.mode.keyword(), j.name);
            }
        }
    }
    if inner.is_empty() {
        let _ = writeln!(out, "{head} {{ }}");
    } else {
        let _ = write!(out, "{head} {{\n{inner}{pad}}}\n");
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
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
