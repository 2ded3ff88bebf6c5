//! Whole-model checks. Constructors already enforce local rules; these
//! re-check them (imported JSON bypasses the constructors) and add the
//! rules that need the complete graph.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::diag::Diagnostic;
use crate::dynamics::{cover_connected, derive_chronology, unwitnessed_declarations, DynError};
use crate::model::{ActionKind, ChronoKind, Cover, EventIdx, Model, NodeRef, Polarity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Diagnostic>,
}

impl ValidationReport {
    fn from_keyed(mut keyed: Vec<(Key, Diagnostic)>) -> ValidationReport {
        keyed.sort_by_key(|(k, _)| *k);
        let findings: Vec<Diagnostic> = keyed.into_iter().map(|(_, d)| d).collect();
        ValidationReport {
            ok: !findings.iter().any(Diagnostic::is_error),
            findings,
        }
    }

    pub fn merge(mut self, other: ValidationReport) -> ValidationReport {
        self.ok &= other.ok;
        self.findings.extend(other.findings);
        self
    }

    pub fn has(&self, code: &str) -> bool {
        self.findings.iter().any(|d| d.code == code)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Finding order: element class, then declaration index, then rule order.
type Key = (u8, usize, u8);

const THIMAC: u8 = 0;
const NODE: u8 = 1;
const FLOW: u8 = 2;
const EVENT: u8 = 4;
const CHRONO: u8 = 5;

fn is_storage(n: NodeRef) -> bool {
    matches!(n, NodeRef::Storage(_))
}

fn kind(model: &Model, n: NodeRef) -> Option<ActionKind> {
    model.action_kind(n)
}

/// Walks flows from `start` through Transfer nodes and junctions in one
/// direction and returns the first non-relay nodes reached.
fn chain_ends(model: &Model, start: NodeRef, upstream: bool) -> Vec<NodeRef> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    let mut ends = Vec::new();
    while let Some(x) = stack.pop() {
        if !seen.insert(x) {
            continue;
        }
        let relay = matches!(x, NodeRef::Junction(_)) || kind(model, x) == Some(ActionKind::Transfer);
        if !relay {
            ends.push(x);
            continue;
        }
        for f in &model.flows {
            if upstream && f.to == x {
                stack.push(f.from);
            } else if !upstream && f.from == x {
                stack.push(f.to);
            }
        }
    }
    ends
}

pub fn validate_static(model: &Model) -> ValidationReport {
    let mut out: Vec<(Key, Diagnostic)> = Vec::new();

    for (i, t) in model.thimacs.iter().enumerate() {
        let mut cur = t.parent;
        let mut steps = 0;
        while let Some(p) = cur {
            steps += 1;
            if p.0 == i || steps > model.thimacs.len() {
                out.push((
                    (THIMAC, i, 0),
                    Diagnostic::error("CONTAIN_ACYCLIC", format!("thimac `{}` contains itself", t.id), None),
                ));
                break;
            }
            cur = model.thimacs.get(p.0).and_then(|x| x.parent);
        }
    }

    let nodes: Vec<NodeRef> = model.nodes().collect();
    for &n in &nodes {
        let slot = model.node_slot(n);
        let ins = model.flows.iter().filter(|f| f.to == n).count();
        let outs = model.flows.iter().filter(|f| f.from == n).count();
        match n {
            NodeRef::Junction(_) if ins < 2 || outs < 1 => out.push((
                (NODE, slot, 0),
                Diagnostic::error(
                    "JUNCTION_ARITY",
                    format!("junction `{}` has {ins} inputs and {outs} outputs (needs >=2 and >=1)", model.node_id(n)),
                    None,
                ),
            )),
            NodeRef::Storage(_) if ins + outs == 0 => out.push((
                (NODE, slot, 1),
                Diagnostic::warning("UNUSED_STORAGE", format!("storage `{}` has no flows", model.node_id(n))),
            )),
            _ if kind(model, n) == Some(ActionKind::Transfer) && (ins == 0 || outs == 0) => out.push((
                (NODE, slot, 2),
                Diagnostic::error(
                    "DANGLING",
                    format!("transfer `{}` has {ins} incoming and {outs} outgoing flows", model.node_id(n)),
                    None,
                ),
            )),
            _ => {}
        }
    }

    for (i, f) in model.flows.iter().enumerate() {
        let row = model.adjacency_row(f.from, f.to);
        if !row.is_legal() {
            out.push((
                (FLOW, i, 0),
                Diagnostic::error(
                    "FLOW_ADJ",
                    format!("flow `{}` -> `{}` is {row}", model.node_id(f.from), model.node_id(f.to)),
                    None,
                ),
            ));
            continue;
        }
        let crossing = !row.same_owner
            && kind(model, f.from) == Some(ActionKind::Transfer)
            && kind(model, f.to) == Some(ActionKind::Transfer);
        if !crossing {
            continue;
        }
        let up_ok = chain_ends(model, f.from, true)
            .into_iter()
            .any(|x| is_storage(x) || kind(model, x) == Some(ActionKind::Release));
        let down_ok = chain_ends(model, f.to, false)
            .into_iter()
            .any(|x| is_storage(x) || kind(model, x) == Some(ActionKind::Receive));
        if !up_ok || !down_ok {
            let missing = match (up_ok, down_ok) {
                (false, false) => "release upstream and receive downstream",
                (false, true) => "release upstream",
                _ => "receive downstream",
            };
            out.push((
                (FLOW, i, 1),
                Diagnostic::error(
                    "XFER_PAIR",
                    format!(
                        "crossing `{}` -> `{}` lacks a {missing}",
                        model.node_id(f.from),
                        model.node_id(f.to)
                    ),
                    None,
                ),
            ));
        }
    }
    ValidationReport::from_keyed(out)
}

fn cover_known(model: &Model, c: Cover) -> bool {
    match c {
        Cover::Thimac(t) => t.0 < model.thimacs.len(),
        Cover::Node(NodeRef::Action(i)) => i < model.actions.len(),
        Cover::Node(NodeRef::Storage(i)) => i < model.storages.len(),
        Cover::Node(NodeRef::Junction(i)) => i < model.junctions.len(),
    }
}

pub fn validate_dynamic(model: &Model) -> ValidationReport {
    let mut out: Vec<(Key, Diagnostic)> = Vec::new();
    let mut all_known = true;

    for (i, ev) in model.events.iter().enumerate() {
        if !ev.covers.iter().all(|c| cover_known(model, *c)) {
            all_known = false;
            out.push((
                (EVENT, i, 0),
                Diagnostic::error("EVENT_KNOWN", format!("event `{}` covers an unknown element", ev.id), None),
            ));
            continue;
        }
        if ev.covers.is_empty() || !cover_connected(model, &ev.covers) {
            let what = if ev.covers.is_empty() { "nothing" } else { "a disconnected region" };
            out.push((
                (EVENT, i, 1),
                Diagnostic::error("EVENT_COVER", format!("event `{}` covers {what}", ev.id), None),
            ));
        }
        let thimacs = model.cover_thimacs(EventIdx(i));
        let unrealizable: Vec<&str> = thimacs
            .iter()
            .map(|t| model.thimac(*t))
            .filter(|t| !t.realizable)
            .map(|t| t.id.as_str())
            .collect();
        if let Some(first) = unrealizable.first() {
            let (code, why) = match ev.polarity {
                Polarity::Absent => ("ABSENT_REALIZABLE", "absent event negates the never-realizable"),
                Polarity::Present => ("PRESENT_REALIZABLE", "present event realizes the never-realizable"),
            };
            out.push((
                (EVENT, i, 2),
                Diagnostic::error(code, format!("{why} thimac `{first}` (event `{}`)", ev.id), None),
            ));
        }
    }

    let n = model.events.len();
    let declared: Vec<(usize, usize)> = model
        .chronology
        .iter()
        .filter(|c| c.kind == ChronoKind::Precede && c.from.0 < n && c.to.0 < n)
        .map(|c| (c.from.0, c.to.0))
        .collect();
    if let Some(cycle) = declared_cycle(n, &declared) {
        let names: Vec<&str> = cycle.iter().map(|&e| model.event(EventIdx(e)).id.as_str()).collect();
        out.push((
            (CHRONO, 0, 0),
            Diagnostic::error(
                "CHRONO_ACYCLIC",
                format!("declared chronology has a cycle through {}", names.join(" -> ")),
                None,
            ),
        ));
    } else if all_known {
        match derive_chronology(model) {
            Ok(graph) => {
                for (k, (a, b)) in unwitnessed_declarations(model, &graph).into_iter().enumerate() {
                    out.push((
                        (CHRONO, k, 2),
                        Diagnostic::warning(
                            "CHRONO_UNWITNESSED",
                            format!(
                                "declared `{}` -> `{}` has no static edge between the covers",
                                model.event(a).id,
                                model.event(b).id
                            ),
                        ),
                    ));
                }
            }
            Err(e @ DynError::ChronoCycle(_)) => out.push((
                (CHRONO, 0, 0),
                Diagnostic::error("CHRONO_ACYCLIC", format!("derived {e}; declare the back edge with `repeat`"), None),
            )),
            Err(e) => out.push(((CHRONO, 0, 1), Diagnostic::error("CHRONO_REPEAT", e.to_string(), None))),
        }
    }
    ValidationReport::from_keyed(out)
}

fn declared_cycle(n: usize, pairs: &[(usize, usize)]) -> Option<Vec<usize>> {
    // Repeatedly strip sources; whatever survives lies on or behind a cycle.
    let mut alive: BTreeSet<usize> = (0..n).collect();
    loop {
        let src = alive
            .iter()
            .copied()
            .find(|&v| !pairs.iter().any(|&(a, b)| b == v && alive.contains(&a)));
        match src {
            Some(v) => {
                alive.remove(&v);
            }
            None => break,
        }
    }
    if alive.is_empty() {
        return None;
    }
    // Walk predecessors inside the survivors until a vertex repeats.
    let mut walk = vec![*alive.iter().next().expect("nonempty")];
    loop {
        let cur = *walk.last().expect("nonempty");
        let prev = pairs
            .iter()
            .find(|&&(a, b)| b == cur && alive.contains(&a))
            .map(|&(a, _)| a)
            .expect("survivors have live predecessors");
        if let Some(at) = walk.iter().position(|&v| v == prev) {
            let mut cyc: Vec<usize> = walk[at..].to_vec();
            cyc.reverse();
            cyc.push(cyc[0]);
            return Some(cyc);
        }
        walk.push(prev);
    }
}

/// Static and dynamic findings together.
pub fn validate(model: &Model) -> ValidationReport {
    validate_static(model).merge(validate_dynamic(model))
}
