//! Aspect classes read off graph shape: features of a focus group of
//! events, then a fixed rule table.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{derive_chronology, static_edges, ChronologyGraph, DynError};
use crate::model::{ActionKind, ChronoKind, EventIdx, Model, NodeRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FeatureVector {
    pub reflexive: bool,
    pub continued: bool,
    pub delimited: bool,
    pub durative: bool,
    pub punctual: bool,
    pub terminalized: bool,
    pub chain_length: usize,
    pub branchy: bool,
    /// No Process node and no flow inside the covered region.
    pub create_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Vendler {
    State,
    Activity,
    Accomplishment,
    Achievement,
}

impl Vendler {
    pub fn rosen(self) -> &'static str {
        match self {
            Vendler::State => "state",
            Vendler::Activity => "activity",
            Vendler::Accomplishment | Vendler::Achievement => "performance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Bach {
    Atomic,
    Plural,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("unknown event `{0}` in focus")]
    UnknownId(String),
    #[error("focus group is empty")]
    EmptyFocus,
    #[error(transparent)]
    Chronology(#[from] DynError),
}

/// Process nodes with an outgoing edge that loops back and another that
/// leaves the loop: the "is it finished yet" test.
fn completion_tests(model: &Model) -> BTreeSet<NodeRef> {
    let edges = static_edges(model);
    let reaches = |from: NodeRef, target: NodeRef| {
        let mut seen = BTreeSet::new();
        let mut q = VecDeque::from([from]);
        while let Some(v) = q.pop_front() {
            if v == target {
                return true;
            }
            if seen.insert(v) {
                q.extend(edges.iter().filter(|(a, _)| *a == v).map(|(_, b)| *b));
            }
        }
        false
    };
    model
        .nodes()
        .filter(|&p| model.action_kind(p) == Some(ActionKind::Process))
        .filter(|&p| {
            let outs: Vec<NodeRef> = edges.iter().filter(|(a, _)| *a == p).map(|(_, b)| *b).collect();
            let back = outs.iter().any(|&x| reaches(x, p));
            let exit = outs.iter().any(|&x| !reaches(x, p));
            back && exit
        })
        .collect()
}

pub fn extract_features(
    model: &Model,
    chronology: &ChronologyGraph,
    focus: &[EventIdx],
) -> Result<FeatureVector, ClassifyError> {
    if focus.is_empty() {
        return Err(ClassifyError::EmptyFocus);
    }
    if let Some(bad) = focus.iter().find(|e| e.0 >= model.events.len()) {
        return Err(ClassifyError::UnknownId(format!("#{}", bad.0)));
    }
    let set: BTreeSet<usize> = focus.iter().map(|e| e.0).collect();
    let in_focus = |e: &usize| set.contains(e);
    let succs = |e: usize| -> Vec<usize> {
        chronology.precede_succs(e).into_iter().filter(in_focus).collect()
    };

    let covered: BTreeMap<usize, Vec<NodeRef>> =
        set.iter().map(|&e| (e, model.cover_nodes(EventIdx(e)))).collect();
    let covers_process = |e: usize| {
        covered[&e]
            .iter()
            .any(|&n| model.action_kind(n) == Some(ActionKind::Process))
    };
    let region: BTreeSet<NodeRef> = covered.values().flatten().copied().collect();

    let tests = completion_tests(model);
    let delimited = region.iter().any(|n| tests.contains(n))
        || set
            .iter()
            .flat_map(|&e| model.cover_thimacs(EventIdx(e)))
            .any(|t| model.thimac(t).delimiter);

    let reflexive = chronology
        .edges
        .iter()
        .any(|x| x.kind == ChronoKind::Repeat && x.from == x.to && in_focus(&x.from));
    let continued = chronology
        .edges
        .iter()
        .any(|x| x.kind == ChronoKind::Repeat && x.from != x.to && in_focus(&x.from) && in_focus(&x.to));

    let durative = set.iter().any(|&e| model.events[e].duration.is_some());
    let punctual = set.len() == 1 && {
        let e = *set.iter().next().expect("nonempty");
        covered[&e].iter().filter(|n| matches!(n, NodeRef::Action(_))).count() == 1
    };

    // Longest path in events; the induced Precede subgraph is acyclic.
    let mut longest: BTreeMap<usize, usize> = BTreeMap::new();
    let order: Vec<usize> = chronology
        .topo_order()
        .unwrap_or_default()
        .into_iter()
        .filter(in_focus)
        .collect();
    for &e in order.iter().rev() {
        let best = succs(e).iter().map(|s| longest[s]).max().unwrap_or(0);
        longest.insert(e, best + 1);
    }
    let chain_length = longest.values().copied().max().unwrap_or(0);
    let branchy = set.iter().any(|&e| succs(e).len() >= 2);

    let terminalized = set.iter().any(|&e| {
        if !succs(e).is_empty() || covers_process(e) {
            return false;
        }
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = chronology.precede_preds(e).into_iter().filter(in_focus).collect();
        while let Some(p) = stack.pop() {
            if !seen.insert(p) {
                continue;
            }
            if covers_process(p) {
                return true;
            }
            stack.extend(chronology.precede_preds(p).into_iter().filter(in_focus));
        }
        false
    });

    let create_only = !region
        .iter()
        .any(|&n| model.action_kind(n) == Some(ActionKind::Process))
        && !model
            .flows
            .iter()
            .any(|f| region.contains(&f.from) && region.contains(&f.to));

    Ok(FeatureVector {
        reflexive,
        continued,
        delimited,
        durative,
        punctual,
        terminalized,
        chain_length,
        branchy,
        create_only,
    })
}

/// First matching rule wins.
pub fn classify_vendler(f: &FeatureVector) -> Vendler {
    if f.create_only {
        Vendler::State
    } else if f.punctual && f.delimited {
        Vendler::Achievement
    } else if f.delimited || f.terminalized {
        Vendler::Accomplishment
    } else {
        Vendler::Activity
    }
}

/// Atomic: one culminating event that every other focus event precedes.
/// Plural: two or more culminations, each preceded by something.
pub fn classify_bach(chronology: &ChronologyGraph, focus: &[EventIdx]) -> Bach {
    let set: BTreeSet<usize> = focus.iter().map(|e| e.0).collect();
    if set.len() == 1 {
        return Bach::Atomic;
    }
    let inner = |v: Vec<usize>| -> Vec<usize> { v.into_iter().filter(|x| set.contains(x)).collect() };
    let sinks: Vec<usize> = set
        .iter()
        .copied()
        .filter(|&e| inner(chronology.precede_succs(e)).is_empty())
        .collect();
    match sinks.as_slice() {
        [s] => {
            let mut reached = BTreeSet::new();
            let mut stack = inner(chronology.precede_preds(*s));
            while let Some(p) = stack.pop() {
                if reached.insert(p) {
                    stack.extend(inner(chronology.precede_preds(p)));
                }
            }
            if reached.len() + 1 == set.len() {
                Bach::Atomic
            } else {
                Bach::NotApplicable
            }
        }
        many if many.len() >= 2 && many.iter().all(|&s| !inner(chronology.precede_preds(s)).is_empty()) => {
            Bach::Plural
        }
        _ => Bach::NotApplicable,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupClass {
    pub vendler: Vendler,
    pub rosen: &'static str,
    pub bach: Bach,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct ClassReport {
    pub groups: IndexMap<String, GroupClass>,
}

impl ClassReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, g) in &self.groups {
            let f = &g.features;
            let _ = writeln!(
                out,
                "{name}: {:?} ({}), bach {:?}; reflexive={} continued={} delimited={} durative={} punctual={} terminalized={} chain_length={} branchy={} create_only={}",
                g.vendler,
                g.rosen,
                g.bach,
                f.reflexive,
                f.continued,
                f.delimited,
                f.durative,
                f.punctual,
                f.terminalized,
                f.chain_length,
                f.branchy,
                f.create_only
            );
        }
        out
    }
}

pub fn classify_group(
    model: &Model,
    chronology: &ChronologyGraph,
    focus: &[EventIdx],
) -> Result<GroupClass, ClassifyError> {
    let features = extract_features(model, chronology, focus)?;
    let vendler = classify_vendler(&features);
    Ok(GroupClass {
        vendler,
        rosen: vendler.rosen(),
        bach: classify_bach(chronology, focus),
        features,
    })
}

/// Every declared focus group, or one group `all` over every event.
pub fn classify_model(model: &Model) -> Result<ClassReport, ClassifyError> {
    let chronology = derive_chronology(model)?;
    let groups: Vec<(String, Vec<EventIdx>)> = if model.focus.is_empty() {
        if model.events.is_empty() {
            return Ok(ClassReport::default());
        }
        vec![("all".into(), (0..model.events.len()).map(EventIdx).collect())]
    } else {
        model.focus.iter().map(|f| (f.name.clone(), f.events.clone())).collect()
    };
    let mut report = ClassReport::default();
    for (name, events) in groups {
        report.groups.insert(name, classify_group(model, &chronology, &events)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    #[test]
    fn rule_table_is_total_and_prioritized() {
        for bits in 0u32..512 {
            let b = |k: u32| bits & (1 << k) != 0;
            let f = FeatureVector {
                reflexive: b(0),
                continued: b(1),
                delimited: b(2),
                durative: b(3),
                punctual: b(4),
                terminalized: b(5),
                chain_length: 1,
                branchy: b(6),
                create_only: b(7),
            };
            let want = if f.create_only {
                Vendler::State
            } else if f.punctual && f.delimited {
                Vendler::Achievement
            } else if f.delimited || f.terminalized {
                Vendler::Accomplishment
            } else {
                Vendler::Activity
            };
            assert_eq!(classify_vendler(&f), want);
        }
    }

    #[test]
    fn eventless_model_gives_empty_report() {
        let m = parse_model("model \"e\" { thimac A { } }").unwrap();
        assert!(classify_model(&m).unwrap().groups.is_empty());
        assert_eq!(classify_model(&m).unwrap().to_json(), "{}");
    }

    #[test]
    fn create_and_storage_region_is_a_state() {
        let m = parse_model(
            r#"model "s" {
  thimac Rock {
    storage mass
  }
  event exists covers { Rock }
}"#,
        )
        .unwrap();
        let r = classify_model(&m).unwrap();
        assert_eq!(r.groups["all"].vendler, Vendler::State);
        assert_eq!(r.groups["all"].bach, Bach::Atomic);
    }

    #[test]
    fn completion_test_flips_activity() {
        let base = r#"model "b" {
  thimac T {
    create c
    process work
    process check
  }
  thimac Out {
    create done
  }
  flow T.c -> T.work
  trigger T.work => T.check
  trigger T.check => T.work
EXIT  event w covers { T.work, T.check }
}"#;
        let m = parse_model(&base.replace("EXIT", "")).unwrap();
        let before = classify_model(&m).unwrap().groups["all"].clone();
        assert_eq!(before.vendler, Vendler::Activity);
        let m = parse_model(&base.replace("EXIT", "  trigger T.check => Out.done\n")).unwrap();
        let after = classify_model(&m).unwrap().groups["all"].clone();
        assert_eq!(after.vendler, Vendler::Accomplishment);
        assert!(after.features.delimited);
        assert_eq!(
            FeatureVector { delimited: false, terminalized: false, ..after.features },
            FeatureVector { delimited: false, terminalized: false, ..before.features }
        );
    }
}
