//! Token-flow execution.
//!
//! Nodes fire, edges (flows and triggers alike) carry activations. A node
//! fires on its first forward input and absorbs later ones; an And-junction
//! waits for every forward input. An input is a back input when its source
//! is reachable from the node; back inputs re-fire the node, bounded by
//! `1 + max_repeats` firings per node. Guards gate Process nodes on scenario
//! inputs. Nodes inside any absent event never fire.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{derive_chronology, ChronologyGraph, DynError};
use crate::model::{ActionKind, EventIdx, JunctionMode, Model, NodeRef, Polarity};
use crate::par::{self, Exec};

pub const MAX_MATRIX_INPUTS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub max_repeats: u32,
    pub inputs: BTreeMap<String, bool>,
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            max_repeats: 1,
            inputs: BTreeMap::new(),
            max_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("max_steps must be positive")]
    ZeroStepBudget,
    #[error("{0} scenario inputs exceed the limit of {MAX_MATRIX_INPUTS}")]
    TooManyInputs(usize),
    #[error("`{0}` is not a guard input of this model")]
    UnknownInput(String),
    #[error(transparent)]
    Chronology(#[from] DynError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Deadlock,
    StepBudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub event: String,
    pub action: String,
    pub note: String,
}

/// Cross-boundary bookkeeping. A send is a token leaving its machine over
/// a Transfer -> Transfer crossing; a receipt is that token settling in a
/// Receive or a storage. Hops over further crossings belong to one send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FlowLedger {
    pub sends: usize,
    pub receipts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub outcome: Outcome,
    pub ledger: FlowLedger,
    /// Every node firing in global order, covered or not.
    pub firings: Vec<String>,
}

#[derive(Serialize)]
struct OutcomeLine {
    outcome: Outcome,
    sends: usize,
    receipts: usize,
}

impl Trace {
    pub fn fired_events(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.event.clone()).collect()
    }

    pub fn has_event(&self, id: &str) -> bool {
        self.records.iter().any(|r| r.event == id)
    }

    pub fn first_step(&self, event: &str) -> Option<usize> {
        self.records.iter().find(|r| r.event == event).map(|r| r.step)
    }

    pub fn records_for<'a>(&'a self, event: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records.iter().filter(move |r| r.event == event)
    }

    /// One JSON object per record, then the outcome line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        let tail = OutcomeLine {
            outcome: self.outcome,
            sends: self.ledger.sends,
            receipts: self.ledger.receipts,
        };
        out.push_str(&serde_json::to_string(&tail).expect("outcome serializes"));
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct InEdge {
    from: usize,
    back: bool,
}

#[derive(Debug, Clone, Copy)]
struct OutEdge {
    to: usize,
    /// Index of this edge among the target's inputs.
    slot: usize,
    crossing: bool,
}

/// Everything about a model that does not depend on the scenario.
#[derive(Debug, Clone)]
pub struct Simulator {
    ids: Vec<String>,
    notes: Vec<&'static str>,
    kinds: Vec<Option<ActionKind>>,
    and_junction: Vec<bool>,
    settles: Vec<bool>,
    inert: Vec<bool>,
    sources: Vec<usize>,
    ins: Vec<Vec<InEdge>>,
    outs: Vec<Vec<OutEdge>>,
    guards: Vec<Vec<(String, bool)>>,
    guard_inputs: BTreeSet<String>,
    /// Event indices in emission order, each with its covered node slots.
    schedule: Vec<(String, Option<String>, BTreeSet<usize>)>,
}

impl Simulator {
    pub fn new(model: &Model, chronology: &ChronologyGraph) -> Simulator {
        let nodes: Vec<NodeRef> = model.nodes().collect();
        let n = nodes.len();
        let slot = |r: NodeRef| model.node_slot(r);
        let ids = nodes.iter().map(|&r| model.node_id(r).to_string()).collect();
        let kinds: Vec<Option<ActionKind>> = nodes.iter().map(|&r| model.action_kind(r)).collect();
        let notes = nodes
            .iter()
            .map(|&r| match r {
                NodeRef::Action(i) => model.actions[i].kind.keyword(),
                NodeRef::Storage(_) => "storage",
                NodeRef::Junction(i) => match model.junctions[i].mode {
                    JunctionMode::And => "junction and",
                    JunctionMode::Or => "junction or",
                },
            })
            .collect();
        let and_junction = nodes
            .iter()
            .map(|&r| matches!(r, NodeRef::Junction(i) if model.junctions[i].mode == JunctionMode::And))
            .collect();
        let settles = nodes
            .iter()
            .map(|&r| matches!(r, NodeRef::Storage(_)) || model.action_kind(r) == Some(ActionKind::Receive))
            .collect();

        let mut inert = vec![false; n];
        for (i, ev) in model.events.iter().enumerate() {
            if ev.polarity == Polarity::Absent {
                for r in model.cover_nodes(EventIdx(i)) {
                    inert[slot(r)] = true;
                }
            }
        }

        let mut pairs: Vec<(usize, usize, bool)> = Vec::new();
        for f in &model.flows {
            let crossing = model.node_owner(f.from) != model.node_owner(f.to)
                && model.action_kind(f.from) == Some(ActionKind::Transfer)
                && model.action_kind(f.to) == Some(ActionKind::Transfer);
            pairs.push((slot(f.from), slot(f.to), crossing));
        }
        for t in &model.triggers {
            pairs.push((slot(t.from), slot(t.to), false));
        }
        let mut succ = vec![Vec::new(); n];
        for &(a, b, _) in &pairs {
            succ[a].push(b);
        }
        let reach: Vec<BTreeSet<usize>> = (0..n)
            .map(|s| {
                let mut seen = BTreeSet::new();
                let mut q: VecDeque<usize> = succ[s].iter().copied().collect();
                while let Some(v) = q.pop_front() {
                    if seen.insert(v) {
                        q.extend(succ[v].iter().copied());
                    }
                }
                seen
            })
            .collect();
        let mut ins = vec![Vec::new(); n];
        let mut outs = vec![Vec::new(); n];
        for &(a, b, crossing) in &pairs {
            let back = reach[b].contains(&a);
            outs[a].push(OutEdge {
                to: b,
                slot: ins[b].len(),
                crossing,
            });
            ins[b].push(InEdge { from: a, back });
        }

        let has_flow_in: BTreeSet<usize> = model.flows.iter().map(|f| slot(f.to)).collect();
        let sources = (0..n)
            .filter(|&i| match nodes[i] {
                NodeRef::Storage(_) => !has_flow_in.contains(&i),
                r => model.action_kind(r) == Some(ActionKind::Create) && ins[i].is_empty(),
            })
            .collect();

        let mut guards = vec![Vec::new(); n];
        let mut guard_inputs = BTreeSet::new();
        for g in &model.guards {
            guards[slot(g.node)].push((g.input.clone(), g.negated));
            guard_inputs.insert(g.input.clone());
        }

        let order = chronology
            .topo_order()
            .unwrap_or_else(|| (0..chronology.events.len()).collect());
        let schedule = order
            .into_iter()
            .filter(|&e| e < model.events.len())
            .map(|e| {
                let ev = &model.events[e];
                let covered = model.cover_nodes(EventIdx(e)).into_iter().map(slot).collect();
                let absent = (ev.polarity == Polarity::Absent)
                    .then(|| model.cover_id(ev.covers[0]).to_string());
                (ev.id.clone(), absent, covered)
            })
            .collect();

        Simulator {
            ids,
            notes,
            kinds,
            and_junction,
            settles,
            inert,
            sources,
            ins,
            outs,
            guards,
            guard_inputs,
            schedule,
        }
    }

    pub fn guard_inputs(&self) -> &BTreeSet<String> {
        &self.guard_inputs
    }

    fn guard_open(&self, v: usize, inputs: &BTreeMap<String, bool>) -> bool {
        self.guards[v]
            .iter()
            .all(|(name, negated)| inputs.get(name).copied().unwrap_or(false) != *negated)
    }

    pub fn run(&self, config: &SimConfig) -> Result<Trace, SimError> {
        if config.max_steps == 0 {
            return Err(SimError::ZeroStepBudget);
        }
        let n = self.ids.len();
        let cap = 1 + config.max_repeats as usize;
        let open: Vec<bool> = (0..n).map(|v| self.guard_open(v, &config.inputs)).collect();
        let mut fires = vec![0usize; n];
        let mut arrived: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut log: Vec<usize> = Vec::new();
        let mut ledger = FlowLedger::default();
        let mut exhausted = false;

        // (node, input slot or None for a spontaneous start, carried token)
        let mut queue: VecDeque<(usize, Option<usize>, bool)> =
            self.sources.iter().map(|&s| (s, None, false)).collect();
        while let Some((v, via, carried)) = queue.pop_front() {
            if self.inert[v] || !open[v] || fires[v] >= cap {
                continue;
            }
            let fire = match via {
                None => fires[v] == 0,
                Some(k) if self.ins[v][k].back => true,
                Some(k) if self.and_junction[v] => {
                    arrived[v].insert(k);
                    let all = self.ins[v]
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| !e.back)
                        .all(|(j, _)| arrived[v].contains(&j));
                    all && fires[v] == 0
                }
                Some(_) => fires[v] == 0,
            };
            if !fire {
                continue;
            }
            if log.len() >= config.max_steps {
                exhausted = true;
                break;
            }
            fires[v] += 1;
            log.push(v);
            if carried && self.settles[v] {
                ledger.receipts += 1;
            }
            let relays = self.kinds[v] == Some(ActionKind::Transfer);
            for e in &self.outs[v] {
                let carry = if e.crossing {
                    if !carried {
                        ledger.sends += 1;
                    }
                    true
                } else {
                    carried && relays
                };
                queue.push_back((e.to, Some(e.slot), carry));
            }
        }

        let outcome = if exhausted {
            Outcome::StepBudgetExhausted
        } else if self.deadlocked(&fires, &open) {
            Outcome::Deadlock
        } else {
            Outcome::Completed
        };

        let mut nth = vec![0usize; n];
        let log_notes: Vec<(usize, usize)> = log
            .iter()
            .map(|&v| {
                nth[v] += 1;
                (v, nth[v])
            })
            .collect();
        let mut records = Vec::new();
        for (event, absent, covered) in &self.schedule {
            match absent {
                Some(first) => records.push(TraceRecord {
                    step: 0,
                    event: event.clone(),
                    action: first.clone(),
                    note: "absent: registered, region inert".into(),
                }),
                None => {
                    for &(v, k) in &log_notes {
                        if covered.contains(&v) {
                            let note = if k == 1 {
                                self.notes[v].to_string()
                            } else {
                                format!("{} (repeat {})", self.notes[v], k - 1)
                            };
                            records.push(TraceRecord {
                                step: 0,
                                event: event.clone(),
                                action: self.ids[v].clone(),
                                note,
                            });
                        }
                    }
                }
            }
        }
        for (i, r) in records.iter_mut().enumerate() {
            r.step = i + 1;
        }
        Ok(Trace {
            records,
            outcome,
            ledger,
            firings: log.into_iter().map(|v| self.ids[v].clone()).collect(),
        })
    }

    /// An And-junction that never fired although none of its forward
    /// inputs is dead. Dead is the least fixpoint of: closed guard, inert,
    /// or never fired with every input dead (any input, for And).
    fn deadlocked(&self, fires: &[usize], open: &[bool]) -> bool {
        let n = fires.len();
        let mut dead: Vec<bool> = (0..n).map(|v| !open[v] || self.inert[v]).collect();
        loop {
            let mut changed = false;
            for v in 0..n {
                if dead[v] || fires[v] > 0 {
                    continue;
                }
                let fwd = self.ins[v].iter().filter(|e| !e.back);
                let now_dead = if self.and_junction[v] {
                    fwd.clone().any(|e| dead[e.from])
                } else {
                    self.ins[v].iter().all(|e| dead[e.from])
                };
                if now_dead {
                    dead[v] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (0..n).any(|v| self.and_junction[v] && fires[v] == 0 && !dead[v])
    }
}

/// Runs one scenario. The chronology fixes the event emission order.
pub fn simulate(model: &Model, chronology: &ChronologyGraph, config: &SimConfig) -> Result<Trace, SimError> {
    Simulator::new(model, chronology).run(config)
}

/// Derives the chronology and runs one scenario.
pub fn simulate_model(model: &Model, config: &SimConfig) -> Result<Trace, SimError> {
    let chronology = derive_chronology(model)?;
    simulate(model, &chronology, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub assignment: Vec<bool>,
    pub fired: BTreeSet<String>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMatrix {
    pub inputs: Vec<String>,
    pub events: Vec<String>,
    pub rows: Vec<ScenarioRow>,
}

impl ScenarioMatrix {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = self
            .inputs
            .iter()
            .chain(&self.events)
            .map(String::as_str)
            .chain(["outcome"])
            .collect();
        w.write_record(&header).expect("in-memory csv");
        for row in &self.rows {
            let mut rec: Vec<String> = row.assignment.iter().map(|b| u8::from(*b).to_string()).collect();
            rec.extend(self.events.iter().map(|e| u8::from(row.fired.contains(e)).to_string()));
            rec.push(serde_json::to_value(row.outcome).expect("outcome").as_str().unwrap_or("").to_string());
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Value of `event` fired, per row.
    pub fn column(&self, event: &str) -> Vec<bool> {
        self.rows.iter().map(|r| r.fired.contains(event)).collect()
    }
}

/// Assignment `r` of `n` inputs in binary counting order: the first input
/// is the most significant bit.
pub fn assignment(r: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| (r >> (n - 1 - i)) & 1 == 1).collect()
}

/// One run per assignment of `input_names` over {false, true}; rows come
/// back in binary counting order whichever `exec` is used.
pub fn scenario_matrix(
    model: &Model,
    chronology: &ChronologyGraph,
    input_names: &[&str],
    base: &SimConfig,
    exec: Exec,
) -> Result<ScenarioMatrix, SimError> {
    let n = input_names.len();
    if n > MAX_MATRIX_INPUTS {
        return Err(SimError::TooManyInputs(n));
    }
    let sim = Simulator::new(model, chronology);
    if let Some(bad) = input_names.iter().find(|x| !sim.guard_inputs().contains(**x)) {
        return Err(SimError::UnknownInput(bad.to_string()));
    }
    let rows: Vec<usize> = (0..1usize << n).collect();
    let results = par::map(exec, &rows, |&r| {
        let values = assignment(r, n);
        let mut config = base.clone();
        for (name, v) in input_names.iter().zip(&values) {
            config.inputs.insert(name.to_string(), *v);
        }
        sim.run(&config).map(|t| ScenarioRow {
            assignment: values,
            fired: t.fired_events(),
            outcome: t.outcome,
        })
    });
    Ok(ScenarioMatrix {
        inputs: input_names.iter().map(|s| s.to_string()).collect(),
        events: model.events.iter().map(|e| e.id.clone()).collect(),
        rows: results.into_iter().collect::<Result<_, _>>()?,
    })
}
