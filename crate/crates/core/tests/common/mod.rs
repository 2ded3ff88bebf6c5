#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use thimac::dsl::parse_model;
use thimac::dynamics::define_event;
use thimac::model::{
    ActionKind, ChronoKind, Cover, Duration, Event, EventIdx, JunctionMode, NodeRef, Polarity, Tense, ThimacIdx,
};
use thimac::Model;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn load(file: &str) -> Model {
    let path = fixture_dir().join(file);
    let src = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_model(&src).unwrap_or_else(|d| panic!("{file}: {d:?}"))
}

/// Raw draws; `build` folds them into a model. Every pick is taken modulo the
/// size of whatever it selects, so any draw yields a well-formed model.
/// (parent pick, unrealizable, delimiter, members as (kind code, label)).
pub type ThimacDraw = (usize, bool, bool, Vec<(u8, Option<String>)>);
/// (cover pick, absent, half-unit duration, tense code, label).
pub type EventDraw = (usize, bool, Option<u8>, u8, Option<String>);

#[derive(Debug, Clone)]
pub struct Blueprint {
    pub thimacs: Vec<ThimacDraw>,
    pub flows: Vec<(usize, usize)>,
    pub triggers: Vec<(usize, usize)>,
    pub guards: Vec<(usize, u8, bool)>,
    pub events: Vec<EventDraw>,
    pub chronology: Vec<(usize, usize, bool)>,
    pub focus: Vec<Vec<usize>>,
}

fn label() -> impl Strategy<Value = Option<String>> {
    proptest::option::of("[a-z \"\\\\\n]{0,8}")
}

pub fn blueprint() -> impl Strategy<Value = Blueprint> {
    let member = (any::<u8>(), label());
    let thimac = (any::<usize>(), any::<bool>(), any::<bool>(), prop::collection::vec(member, 0..5));
    (
        prop::collection::vec(thimac, 1..6),
        prop::collection::vec((any::<usize>(), any::<usize>()), 0..24),
        prop::collection::vec((any::<usize>(), any::<usize>()), 0..6),
        prop::collection::vec((any::<usize>(), 0u8..3, any::<bool>()), 0..4),
        prop::collection::vec((any::<usize>(), any::<bool>(), proptest::option::of(0u8..8), 0u8..3, label()), 0..6),
        prop::collection::vec((any::<usize>(), any::<usize>(), any::<bool>()), 0..4),
        prop::collection::vec(prop::collection::vec(any::<usize>(), 1..4), 0..3),
    )
        .prop_map(|(thimacs, flows, triggers, guards, events, chronology, focus)| Blueprint {
            thimacs,
            flows,
            triggers,
            guards,
            events,
            chronology,
            focus,
        })
}

pub fn arb_model() -> impl Strategy<Value = Model> {
    blueprint().prop_map(|b| build(&b))
}

/// Builds in the order a parser would: each thimac's own members, then its
/// sub-thimacs depth first, so arena indices agree with a re-parse.
pub fn build(b: &Blueprint) -> Model {
    build_named(b, "T", "n")
}

/// `build` with caller-chosen name prefixes, for renaming checks.
pub fn build_named(b: &Blueprint, thimac_prefix: &str, node_prefix: &str) -> Model {
    let prefixes = (thimac_prefix, node_prefix);
    let n = b.thimacs.len();
    let parent: Vec<Option<usize>> = (0..n)
        .map(|i| {
            let pick = b.thimacs[i].0 % (i + 1);
            (pick != i).then_some(pick)
        })
        .collect();
    let mut model = Model::new("generated").unwrap();
    let mut handle = vec![ThimacIdx(0); n];
    let mut counter = 0usize;
    for root in (0..n).filter(|i| parent[*i].is_none()) {
        grow(b, &parent, root, None, prefixes, &mut model, &mut handle, &mut counter);
    }

    let nodes: Vec<NodeRef> = model.nodes().collect();
    let pick = |i: usize| nodes[i % nodes.len()];
    for &(a, c) in &b.flows {
        let (from, to) = (pick(a), pick(c));
        if model.adjacency_row(from, to).is_legal() && !model.flows.iter().any(|f| f.from == from && f.to == to) {
            model.connect_flow(from, to).unwrap();
        }
    }
    for &(a, c) in &b.triggers {
        let _ = model.connect_trigger(pick(a), pick(c));
    }
    let processes: Vec<NodeRef> = nodes
        .iter()
        .copied()
        .filter(|n| model.action_kind(*n) == Some(ActionKind::Process))
        .collect();
    if !processes.is_empty() {
        for &(p, input, negated) in &b.guards {
            let name = ["a", "b", "c"][input as usize];
            model.add_guard(name, negated, processes[p % processes.len()]).unwrap();
        }
    }

    let covers = n + nodes.len();
    for (k, (c, absent, dur, tense, lbl)) in b.events.iter().enumerate() {
        let c = c % covers;
        let cover = if c < n { Cover::Thimac(handle[c]) } else { Cover::Node(nodes[c - n]) };
        let event = Event {
            id: format!("e{k}"),
            label: lbl.clone(),
            covers: vec![cover],
            polarity: if *absent { Polarity::Absent } else { Polarity::Present },
            duration: dur.map(|d| Duration {
                magnitude: f64::from(d) / 2.0,
                unit: "min".into(),
            }),
            tense: [None, Some(Tense::Past), Some(Tense::Now)][*tense as usize],
        };
        define_event(&mut model, event).unwrap();
    }
    let events = model.events.len();
    if events > 0 {
        for &(a, c, repeat) in &b.chronology {
            let kind = if repeat { ChronoKind::Repeat } else { ChronoKind::Precede };
            model.declare_chronology(EventIdx(a % events), EventIdx(c % events), kind).unwrap();
        }
        for (k, group) in b.focus.iter().enumerate() {
            let ids = group.iter().map(|e| EventIdx(e % events)).collect();
            model.add_focus(&format!("f{k}"), ids).unwrap();
        }
    }
    model
}

#[allow(clippy::too_many_arguments)]
fn grow(
    b: &Blueprint,
    parent: &[Option<usize>],
    i: usize,
    up: Option<ThimacIdx>,
    prefixes: (&str, &str),
    model: &mut Model,
    handle: &mut [ThimacIdx],
    counter: &mut usize,
) {
    let (_, unrealizable, delimiter, members) = &b.thimacs[i];
    let t = model.add_thimac(&format!("{}{i}", prefixes.0), up, !unrealizable).unwrap();
    model.set_delimiter(t, *delimiter);
    handle[i] = t;
    for (code, lbl) in members {
        *counter += 1;
        let name = format!("{}{counter}", prefixes.1);
        match code % 8 {
            k @ 0..=4 => {
                model.add_action(t, ActionKind::ALL[k as usize], &name, lbl.as_deref()).unwrap();
            }
            5 => {
                model.attach_storage(t, &name, lbl.as_deref().unwrap_or(&name)).unwrap();
            }
            6 => {
                model.junction(t, &name, JunctionMode::Or).unwrap();
            }
            _ => {
                model.junction(t, &name, JunctionMode::And).unwrap();
            }
        }
    }
    for child in (0..parent.len()).filter(|c| parent[*c] == Some(i)) {
        grow(b, parent, child, Some(t), prefixes, model, handle, counter);
    }
}
