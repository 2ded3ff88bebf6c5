//! The dynamic level: events over static regions, the chronology derived
//! from static dependencies between their covers, and longest-path timing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ChronoKind, Cover, Event, EventIdx, Model, ModelError, NodeRef, ThimacIdx};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynError {
    #[error("precedence cycle through {}", .0.join(" -> "))]
    ChronoCycle(Vec<String>),
    #[error("repeat `{from}` -> `{to}` does not point back to an earlier event")]
    InvalidRepeat { from: String, to: String },
    #[error("event `{event}` has invalid duration {value}")]
    InvalidDuration { event: String, value: f64 },
}

/// Registers an event after checking that its cover is nonempty and weakly
/// connected.
pub fn define_event(model: &mut Model, event: Event) -> Result<EventIdx, ModelError> {
    if event.covers.is_empty() {
        return Err(ModelError::EmptyCover(event.id));
    }
    if !cover_connected(model, &event.covers) {
        return Err(ModelError::DisconnectedCover(event.id));
    }
    model.push_event(event)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Vertex {
    Thimac(ThimacIdx),
    Node(NodeRef),
}

fn expand(model: &Model, covers: &[Cover]) -> BTreeSet<Vertex> {
    let mut out = BTreeSet::new();
    for c in covers {
        match *c {
            Cover::Node(n) => {
                out.insert(Vertex::Node(n));
            }
            Cover::Thimac(t) => {
                for sub in model.subtree(t) {
                    out.insert(Vertex::Thimac(sub));
                    for child in &model.thimac(sub).children {
                        if let crate::model::Child::Node(n) = child {
                            out.insert(Vertex::Node(*n));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Weak connectivity of the region spanned by `covers`. Links are flows,
/// triggers, child-parent containment, and siblings under one thimac.
pub fn cover_connected(model: &Model, covers: &[Cover]) -> bool {
    let verts: Vec<Vertex> = expand(model, covers).into_iter().collect();
    if verts.is_empty() {
        return false;
    }
    let pos: BTreeMap<Vertex, usize> = verts.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut parent: Vec<usize> = (0..verts.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut union = |a: Vertex, b: Vertex| {
        if let (Some(&i), Some(&j)) = (pos.get(&a), pos.get(&b)) {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            parent[ri] = rj;
        }
    };
    for f in &model.flows {
        union(Vertex::Node(f.from), Vertex::Node(f.to));
    }
    for t in &model.triggers {
        union(Vertex::Node(t.from), Vertex::Node(t.to));
    }
    let mut by_parent: BTreeMap<ThimacIdx, Vertex> = BTreeMap::new();
    for v in &verts {
        let up = match *v {
            Vertex::Node(n) => Some(model.node_owner(n)),
            Vertex::Thimac(t) => model.thimac(t).parent,
        };
        if let Some(p) = up {
            union(*v, Vertex::Thimac(p));
            match by_parent.get(&p) {
                Some(first) => union(*first, *v),
                None => {
                    by_parent.insert(p, *v);
                }
            }
        }
    }
    let root = find(&mut parent, 0);
    (0..verts.len()).all(|i| find(&mut parent, i) == root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChronoEdge {
    pub from: usize,
    pub to: usize,
    pub kind: ChronoKind,
}

/// Events are indexed as in the model. `nesting` holds (container, nested)
/// pairs; nested pairs never carry a Precede edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ChronologyGraph {
    pub events: Vec<String>,
    pub edges: Vec<ChronoEdge>,
    pub nesting: Vec<(usize, usize)>,
}

#[derive(Serialize)]
struct EdgeView<'a> {
    from: &'a str,
    to: &'a str,
    kind: ChronoKind,
}

impl ChronologyGraph {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.events.iter().position(|e| e == id)
    }

    pub fn has_edge(&self, from: usize, to: usize, kind: ChronoKind) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to && e.kind == kind)
    }

    pub fn precede_succs(&self, e: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|x| x.kind == ChronoKind::Precede && x.from == e)
            .map(|x| x.to)
            .collect()
    }

    pub fn precede_preds(&self, e: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|x| x.kind == ChronoKind::Precede && x.to == e)
            .map(|x| x.from)
            .collect()
    }

    /// Events reachable from `e` along Precede edges, excluding `e` unless
    /// it lies on a cycle.
    pub fn precede_reach(&self, e: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = self.precede_succs(e);
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                stack.extend(self.precede_succs(x));
            }
        }
        seen
    }

    /// Kahn's order on Precede edges; ready events leave in index order.
    /// `None` when the Precede subgraph has a cycle.
    pub fn topo_order(&self) -> Option<Vec<usize>> {
        let pairs: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|e| e.kind == ChronoKind::Precede)
            .map(|e| (e.from, e.to))
            .collect();
        topo(self.events.len(), &pairs)
    }

    /// Events nested in `e`, transitively.
    pub fn nested_in(&self, e: usize) -> Vec<usize> {
        self.nesting.iter().filter(|(a, _)| *a == e).map(|(_, b)| *b).collect()
    }

    pub fn containers_of(&self, e: usize) -> Vec<usize> {
        self.nesting.iter().filter(|(_, b)| *b == e).map(|(a, _)| *a).collect()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let view: Vec<EdgeView> = self
            .edges
            .iter()
            .map(|e| EdgeView {
                from: &self.events[e.from],
                to: &self.events[e.to],
                kind: e.kind,
            })
            .collect();
        serde_json::to_value(view).expect("edge views serialize")
    }
}

fn topo(n: usize, pairs: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for &(a, b) in pairs {
        indeg[b] += 1;
        succ[a].push(b);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(x) = ready.pop_first() {
        out.push(x);
        for &y in &succ[x] {
            indeg[y] -= 1;
            if indeg[y] == 0 {
                ready.insert(y);
            }
        }
    }
    (out.len() == n).then_some(out)
}

/// Some cycle among `pairs`, as a closed walk of vertex indices.
fn find_cycle(n: usize, pairs: &[(usize, usize)]) -> Vec<usize> {
    let mut succ = vec![Vec::new(); n];
    for &(a, b) in pairs {
        succ[a].push(b);
    }
    // 0 = unseen, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut stack: Vec<usize> = Vec::new();
    fn dfs(x: usize, succ: &[Vec<usize>], state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[x] = 1;
        stack.push(x);
        for &y in &succ[x] {
            if state[y] == 1 {
                let at = stack.iter().position(|&s| s == y).expect("on stack");
                let mut cyc = stack[at..].to_vec();
                cyc.push(y);
                return Some(cyc);
            }
            if state[y] == 0 {
                if let Some(c) = dfs(y, succ, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state[x] = 2;
        None
    }
    for s in 0..n {
        if state[s] == 0 {
            if let Some(c) = dfs(s, &succ, &mut state, &mut stack) {
                return c;
            }
        }
    }
    Vec::new()
}

/// Static dependency edges (flows then triggers) as node pairs.
pub(crate) fn static_edges(model: &Model) -> Vec<(NodeRef, NodeRef)> {
    model
        .flows
        .iter()
        .map(|f| (f.from, f.to))
        .chain(model.triggers.iter().map(|t| (t.from, t.to)))
        .collect()
}

/// (container, nested) pairs: `b` is nested in `a` when its node set is a
/// proper subset of `a`'s, or the sets are equal and `a` was declared first.
pub fn nesting_pairs(sets: &[BTreeSet<NodeRef>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..sets.len() {
        for b in 0..sets.len() {
            if a == b || !sets[b].is_subset(&sets[a]) {
                continue;
            }
            if sets[b].len() < sets[a].len() || a < b {
                out.push((a, b));
            }
        }
    }
    out
}

/// Edges `x -> y` inside `set` whose target reaches the source within the
/// induced subgraph.
fn has_internal_cycle(edges: &[(NodeRef, NodeRef)], set: &BTreeSet<NodeRef>) -> bool {
    let inner: Vec<(NodeRef, NodeRef)> = edges
        .iter()
        .copied()
        .filter(|(a, b)| set.contains(a) && set.contains(b))
        .collect();
    inner.iter().any(|&(x, y)| {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([y]);
        while let Some(v) = queue.pop_front() {
            if v == x {
                return true;
            }
            if seen.insert(v) {
                queue.extend(inner.iter().filter(|(a, _)| *a == v).map(|(_, b)| *b));
            }
        }
        false
    })
}

/// Derives the chronology from static edges between event covers.
/// Declared `repeat` edges turn the matching direction into Repeat; declared
/// Precede edges are checked by the validator, not added here.
pub fn derive_chronology(model: &Model) -> Result<ChronologyGraph, DynError> {
    let n = model.events.len();
    let sets: Vec<BTreeSet<NodeRef>> = (0..n)
        .map(|i| model.cover_nodes(EventIdx(i)).into_iter().collect())
        .collect();
    let nesting = nesting_pairs(&sets);
    let nested: BTreeSet<(usize, usize)> =
        nesting.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    let repeats: BTreeSet<(usize, usize)> = model
        .chronology
        .iter()
        .filter(|c| c.kind == ChronoKind::Repeat)
        .map(|c| (c.from.0, c.to.0))
        .collect();
    let edges_static = static_edges(model);

    let mut edges: BTreeSet<ChronoEdge> = BTreeSet::new();
    for e in 0..n {
        for f in 0..n {
            if e == f || nested.contains(&(e, f)) {
                continue;
            }
            let witnessed = edges_static.iter().any(|(x, y)| {
                sets[e].contains(x)
                    && !sets[f].contains(x)
                    && sets[f].contains(y)
                    && !sets[e].contains(y)
            });
            if witnessed {
                let kind = if repeats.contains(&(e, f)) {
                    ChronoKind::Repeat
                } else {
                    ChronoKind::Precede
                };
                edges.insert(ChronoEdge { from: e, to: f, kind });
            }
        }
        if has_internal_cycle(&edges_static, &sets[e]) {
            edges.insert(ChronoEdge { from: e, to: e, kind: ChronoKind::Repeat });
        }
    }
    for &(a, b) in &repeats {
        edges.insert(ChronoEdge { from: a, to: b, kind: ChronoKind::Repeat });
    }

    let graph = ChronologyGraph {
        events: model.events.iter().map(|e| e.id.clone()).collect(),
        edges: edges.into_iter().collect(),
        nesting,
    };
    if graph.topo_order().is_none() {
        let pairs: Vec<(usize, usize)> = graph
            .edges
            .iter()
            .filter(|e| e.kind == ChronoKind::Precede)
            .map(|e| (e.from, e.to))
            .collect();
        let cyc = find_cycle(n, &pairs);
        return Err(DynError::ChronoCycle(cyc.into_iter().map(|i| graph.events[i].clone()).collect()));
    }
    for &(a, b) in &repeats {
        if a != b && !graph.precede_reach(b).contains(&a) {
            return Err(DynError::InvalidRepeat {
                from: graph.events[a].clone(),
                to: graph.events[b].clone(),
            });
        }
    }
    Ok(graph)
}

/// Declared Precede edges that have no witnessing static edge.
pub fn unwitnessed_declarations(model: &Model, graph: &ChronologyGraph) -> Vec<(EventIdx, EventIdx)> {
    model
        .chronology
        .iter()
        .filter(|c| c.kind == ChronoKind::Precede)
        .filter(|c| !graph.has_edge(c.from.0, c.to.0, ChronoKind::Precede))
        .map(|c| (c.from, c.to))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn strictly_contains(&self, other: &Interval) -> bool {
        self.contains(other) && (self.start < other.start || other.end < self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimingTable {
    pub rows: IndexMap<String, Interval>,
}

impl TimingTable {
    pub fn get(&self, id: &str) -> Option<Interval> {
        self.rows.get(id).copied()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["event_id", "start", "end", "duration"])
            .expect("in-memory csv");
        for (id, iv) in &self.rows {
            w.write_record([
                id.clone(),
                fmt_num(iv.start),
                fmt_num(iv.end),
                fmt_num(iv.duration()),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

fn fmt_num(x: f64) -> String {
    let mut s = String::new();
    let _ = write!(s, "{x}");
    s
}

/// Duration annotations by event id; units are not converted.
pub fn event_durations(model: &Model) -> IndexMap<String, f64> {
    model
        .events
        .iter()
        .filter_map(|e| e.duration.as_ref().map(|d| (e.id.clone(), d.magnitude)))
        .collect()
}

/// Longest-path schedule. An event starts when every Precede predecessor
/// of it or of any container has ended; containers are stretched over
/// their nested events.
pub fn build_timing(
    chronology: &ChronologyGraph,
    durations: &IndexMap<String, f64>,
) -> Result<TimingTable, DynError> {
    let n = chronology.events.len();
    let mut dur = vec![1.0; n];
    for (i, id) in chronology.events.iter().enumerate() {
        if let Some(&d) = durations.get(id) {
            if d.is_nan() || d < 0.0 || d.is_infinite() {
                return Err(DynError::InvalidDuration { event: id.clone(), value: d });
            }
            dur[i] = d;
        }
    }
    // An event waits for its own predecessors and for those of every container.
    let preds: Vec<BTreeSet<usize>> = (0..n)
        .map(|e| {
            let mut set: BTreeSet<usize> = chronology.precede_preds(e).into_iter().collect();
            for c in chronology.containers_of(e) {
                set.extend(chronology.precede_preds(c));
            }
            set
        })
        .collect();
    let mut deps: Vec<(usize, usize)> = Vec::new();
    for (e, ps) in preds.iter().enumerate() {
        deps.extend(ps.iter().map(|&p| (p, e)));
        deps.extend(chronology.nested_in(e).into_iter().map(|b| (b, e)));
    }
    let order = topo(n, &deps).ok_or_else(|| {
        DynError::ChronoCycle(
            find_cycle(n, &deps).into_iter().map(|i| chronology.events[i].clone()).collect(),
        )
    })?;
    let mut iv = vec![Interval { start: 0.0, end: 0.0 }; n];
    for e in order {
        let start = preds[e].iter().map(|&p| iv[p].end).fold(0.0, f64::max);
        let mut cur = Interval { start, end: start + dur[e] };
        for b in chronology.nested_in(e) {
            cur.start = cur.start.min(iv[b].start);
            cur.end = cur.end.max(iv[b].end);
        }
        iv[e] = cur;
    }
    Ok(TimingTable {
        rows: chronology.events.iter().cloned().zip(iv).collect(),
    })
}

/// Chronology plus timing in one call, using the model's annotations.
pub fn timing_for(model: &Model) -> Result<(ChronologyGraph, TimingTable), DynError> {
    let graph = derive_chronology(model)?;
    let table = build_timing(&graph, &event_durations(model))?;
    Ok((graph, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    fn ids(g: &ChronologyGraph, kind: ChronoKind) -> Vec<(String, String)> {
        g.edges
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| (g.events[e.from].clone(), g.events[e.to].clone()))
            .collect()
    }

    #[test]
    fn chain_gets_unit_intervals() {
        let m = parse_model(
            r#"model "c" {
  thimac A {
    create c
    process p
    release r
  }
  flow A.c -> A.p
  flow A.p -> A.r
  event e1 covers { A.c }
  event e2 covers { A.p }
  event e3 covers { A.r }
}"#,
        )
        .unwrap();
        let (g, t) = timing_for(&m).unwrap();
        assert_eq!(
            ids(&g, ChronoKind::Precede),
            vec![("e1".into(), "e2".into()), ("e2".into(), "e3".into())]
        );
        assert_eq!(t.get("e1"), Some(Interval { start: 0.0, end: 1.0 }));
        assert_eq!(t.get("e2"), Some(Interval { start: 1.0, end: 2.0 }));
        assert_eq!(t.get("e3"), Some(Interval { start: 2.0, end: 3.0 }));
        assert_eq!(t.to_csv(), "event_id,start,end,duration\ne1,0,1,1\ne2,1,2,1\ne3,2,3,1\n");
    }

    #[test]
    fn unconnected_events_are_independent() {
        let m = parse_model(
            r#"model "i" {
  thimac A { process p }
  thimac B { process q }
  event a covers { A }
  event b covers { B }
}"#,
        )
        .unwrap();
        let g = derive_chronology(&m).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn self_trigger_gives_repeat_self_edge() {
        let m = parse_model(
            r#"model "d" {
  thimac T { process drive }
  trigger T.drive => T.drive
  event d covers { T.drive }
}"#,
        )
        .unwrap();
        let g = derive_chronology(&m).unwrap();
        assert_eq!(g.edges, vec![ChronoEdge { from: 0, to: 0, kind: ChronoKind::Repeat }]);
    }

    #[test]
    fn back_edge_without_repeat_is_a_cycle() {
        let src = r#"model "b" {
  thimac T {
    process a
    process b
  }
  trigger T.a => T.b
  trigger T.b => T.a
  event x covers { T.a }
  event y covers { T.b }
}"#;
        let m = parse_model(src).unwrap();
        assert!(matches!(derive_chronology(&m), Err(DynError::ChronoCycle(_))));
        let with_repeat = src.replace("}\n}", "}\n  chronology {\n    repeat y -> x\n  }\n}");
        let m = parse_model(&with_repeat).unwrap();
        let g = derive_chronology(&m).unwrap();
        assert!(g.has_edge(0, 1, ChronoKind::Precede));
        assert!(g.has_edge(1, 0, ChronoKind::Repeat));
    }

    #[test]
    fn negative_duration_is_rejected() {
        let g = ChronologyGraph { events: vec!["e".into()], edges: vec![], nesting: vec![] };
        let mut d = IndexMap::new();
        d.insert("e".to_string(), -1.0);
        assert!(matches!(build_timing(&g, &d), Err(DynError::InvalidDuration { .. })));
        d.insert("e".to_string(), 0.5);
        assert_eq!(build_timing(&g, &d).unwrap().get("e"), Some(Interval { start: 0.0, end: 0.5 }));
    }

    #[test]
    fn container_stretches_over_nested() {
        let m = parse_model(
            r#"model "n" {
  thimac Man {
    create born
    process walk
  }
  flow Man.born -> Man.walk
  event b covers { Man.born }
  event w covers { Man.walk }
  event man covers { Man }
}"#,
        )
        .unwrap();
        let (g, t) = timing_for(&m).unwrap();
        assert_eq!(g.nesting, vec![(2, 0), (2, 1)]);
        assert_eq!(t.get("man"), Some(Interval { start: 0.0, end: 2.0 }));
        assert!(t.get("man").unwrap().strictly_contains(&t.get("w").unwrap()));
    }

    #[test]
    fn disconnected_top_level_cover_is_rejected() {
        let err = parse_model(
            r#"model "x" {
  thimac A { process p }
  thimac B { process q }
  event e covers { A.p, B.q }
}"#,
        )
        .unwrap_err();
        assert_eq!(err[0].code, "event-cover");
    }
}
