//! Static level of a thinging-machine model: nested thimacs, the five
//! generic actions, flows, triggers, storages and junctions.
//!
//! Every element is addressed by a dotted path (`LocalNetwork.Control.p1`)
//! that is unique across the whole model. Events, guards and focus groups
//! also live on the [`Model`] so that a single value round-trips through
//! the textual and JSON formats; their constructors are in
//! [`crate::dynamics`] and [`crate::sim`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Local name given to a synthesized create node.
pub const IMPLICIT_CREATE: &str = "create";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Create,
    Process,
    Release,
    Transfer,
    Receive,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Create,
        ActionKind::Process,
        ActionKind::Release,
        ActionKind::Transfer,
        ActionKind::Receive,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ActionKind::Create => "create",
            ActionKind::Process => "process",
            ActionKind::Release => "release",
            ActionKind::Transfer => "transfer",
            ActionKind::Receive => "receive",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for ActionKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "create" => Ok(ActionKind::Create),
            "process" => Ok(ActionKind::Process),
            "release" => Ok(ActionKind::Release),
            "transfer" => Ok(ActionKind::Transfer),
            "receive" => Ok(ActionKind::Receive),
            _ => Err(ModelError::InvalidKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JunctionMode {
    Or,
    And,
}

impl JunctionMode {
    pub fn keyword(self) -> &'static str {
        match self {
            JunctionMode::Or => "or",
            JunctionMode::And => "and",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThimacIdx(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventIdx(pub usize);

/// Handle to any node that can terminate a flow or trigger edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRef {
    Action(usize),
    Storage(usize),
    Junction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Child {
    Thimac(ThimacIdx),
    Node(NodeRef),
}

/// What a flow endpoint behaves as when checked against the adjacency table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EndpointRole {
    Action(ActionKind),
    Junction,
}

impl fmt::Display for EndpointRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndpointRole::Action(k) => write!(f, "{k}"),
            EndpointRole::Junction => f.write_str("junction"),
        }
    }
}

/// One row of the flow adjacency relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AdjacencyRow {
    pub from: EndpointRole,
    pub to: EndpointRole,
    pub same_owner: bool,
}

impl fmt::Display for AdjacencyRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {} ({})",
            self.from,
            self.to,
            if self.same_owner { "same machine" } else { "across machines" }
        )
    }
}

/// Same-owner action rows; across owners only `Transfer -> Transfer` is legal.
pub const SAME_OWNER_ROWS: [(ActionKind, ActionKind); 7] = [
    (ActionKind::Create, ActionKind::Process),
    (ActionKind::Create, ActionKind::Release),
    (ActionKind::Receive, ActionKind::Process),
    (ActionKind::Receive, ActionKind::Release),
    (ActionKind::Process, ActionKind::Release),
    (ActionKind::Release, ActionKind::Transfer),
    (ActionKind::Transfer, ActionKind::Receive),
];

impl AdjacencyRow {
    pub fn is_legal(&self) -> bool {
        use EndpointRole::*;
        match (self.from, self.to) {
            (Action(a), Action(b)) => {
                if self.same_owner {
                    SAME_OWNER_ROWS.contains(&(a, b))
                } else {
                    a == ActionKind::Transfer && b == ActionKind::Transfer
                }
            }
            // Junctions gate flows inside one machine; nothing flows into a create.
            (_, Junction) => self.same_owner,
            (Junction, Action(b)) => self.same_owner && b != ActionKind::Create,
        }
    }

    /// Every legal row, for exhaustive checks.
    pub fn legal_rows() -> Vec<AdjacencyRow> {
        let mut roles: Vec<EndpointRole> =
            ActionKind::ALL.iter().map(|k| EndpointRole::Action(*k)).collect();
        roles.push(EndpointRole::Junction);
        let mut rows = Vec::new();
        for &from in &roles {
            for &to in &roles {
                for same_owner in [true, false] {
                    let row = AdjacencyRow { from, to, same_owner };
                    if row.is_legal() {
                        rows.push(row);
                    }
                }
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thimac {
    pub id: String,
    pub name: String,
    pub parent: Option<ThimacIdx>,
    pub realizable: bool,
    /// Marks a quantity or extent that bounds an event ("one mile", "five houses").
    pub delimiter: bool,
    pub children: Vec<Child>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionNode {
    pub id: String,
    pub name: String,
    pub kind: ActionKind,
    pub owner: ThimacIdx,
    pub label: Option<String>,
    pub implicit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageNode {
    pub id: String,
    pub name: String,
    pub owner: ThimacIdx,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionNode {
    pub id: String,
    pub name: String,
    pub owner: ThimacIdx,
    pub mode: JunctionMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEdge {
    pub id: String,
    pub from: NodeRef,
    pub to: NodeRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerEdge {
    pub id: String,
    pub from: NodeRef,
    pub to: NodeRef,
}

/// A boolean scenario input tested by a process node.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub input: String,
    pub negated: bool,
    pub node: NodeRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Present,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tense {
    Past,
    Now,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duration {
    pub magnitude: f64,
    pub unit: String,
}

/// A covered element of the static model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cover {
    Thimac(ThimacIdx),
    Node(NodeRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub id: String,
    pub label: Option<String>,
    pub covers: Vec<Cover>,
    pub polarity: Polarity,
    pub duration: Option<Duration>,
    pub tense: Option<Tense>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChronoKind {
    Precede,
    Repeat,
}

/// A chronology edge written by the modeler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChronologyDecl {
    pub from: EventIdx,
    pub to: EventIdx,
    pub kind: ChronoKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocusGroup {
    pub name: String,
    pub events: Vec<EventIdx>,
}

/// Anything addressable by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entity {
    Thimac(ThimacIdx),
    Node(NodeRef),
    Flow(usize),
    Trigger(usize),
    Event(EventIdx),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model name must not be empty")]
    InvalidName,
    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),
    #[error("unknown identifier `{0}`")]
    UnknownId(String),
    #[error("`{0}` is not one of create, process, release, transfer, receive")]
    InvalidKind(String),
    #[error("illegal flow {row}")]
    IllegalFlow { row: AdjacencyRow },
    #[error("trigger `{from}` => `{to}` duplicates a flow edge")]
    RedundantTrigger { from: String, to: String },
    #[error("event `{0}` covers nothing")]
    EmptyCover(String),
    #[error("event `{0}` covers a disconnected region")]
    DisconnectedCover(String),
    #[error("guard on `{0}` must attach to a process node")]
    GuardTarget(String),
    #[error("invalid identifier `{0}`")]
    InvalidIdent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub thimacs: Vec<Thimac>,
    pub actions: Vec<ActionNode>,
    pub storages: Vec<StorageNode>,
    pub junctions: Vec<JunctionNode>,
    pub flows: Vec<FlowEdge>,
    pub triggers: Vec<TriggerEdge>,
    pub guards: Vec<Guard>,
    pub events: Vec<Event>,
    pub chronology: Vec<ChronologyDecl>,
    pub focus: Vec<FocusGroup>,
    pub(crate) index: BTreeMap<String, Entity>,
}

pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Model {
    pub fn new(name: &str) -> Result<Model, ModelError> {
        if name.trim().is_empty() {
            return Err(ModelError::InvalidName);
        }
        Ok(Model {
            name: name.to_string(),
            thimacs: Vec::new(),
            actions: Vec::new(),
            storages: Vec::new(),
            junctions: Vec::new(),
            flows: Vec::new(),
            triggers: Vec::new(),
            guards: Vec::new(),
            events: Vec::new(),
            chronology: Vec::new(),
            focus: Vec::new(),
            index: BTreeMap::new(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.thimacs.is_empty() && self.flows.is_empty() && self.triggers.is_empty()
    }

    pub fn lookup(&self, id: &str) -> Option<Entity> {
        self.index.get(id).copied()
    }

    pub fn thimac_by_id(&self, id: &str) -> Result<ThimacIdx, ModelError> {
        match self.lookup(id) {
            Some(Entity::Thimac(t)) => Ok(t),
            _ => Err(ModelError::UnknownId(id.to_string())),
        }
    }

    pub fn node_by_id(&self, id: &str) -> Result<NodeRef, ModelError> {
        match self.lookup(id) {
            Some(Entity::Node(n)) => Ok(n),
            _ => Err(ModelError::UnknownId(id.to_string())),
        }
    }

    pub fn event_by_id(&self, id: &str) -> Result<EventIdx, ModelError> {
        match self.lookup(id) {
            Some(Entity::Event(e)) => Ok(e),
            _ => Err(ModelError::UnknownId(id.to_string())),
        }
    }

    pub fn cover_by_id(&self, id: &str) -> Result<Cover, ModelError> {
        match self.lookup(id) {
            Some(Entity::Thimac(t)) => Ok(Cover::Thimac(t)),
            Some(Entity::Node(n)) => Ok(Cover::Node(n)),
            _ => Err(ModelError::UnknownId(id.to_string())),
        }
    }

    pub fn thimac(&self, t: ThimacIdx) -> &Thimac {
        &self.thimacs[t.0]
    }

    pub fn event(&self, e: EventIdx) -> &Event {
        &self.events[e.0]
    }

    pub fn node_id(&self, n: NodeRef) -> &str {
        match n {
            NodeRef::Action(i) => &self.actions[i].id,
            NodeRef::Storage(i) => &self.storages[i].id,
            NodeRef::Junction(i) => &self.junctions[i].id,
        }
    }

    pub fn node_owner(&self, n: NodeRef) -> ThimacIdx {
        match n {
            NodeRef::Action(i) => self.actions[i].owner,
            NodeRef::Storage(i) => self.storages[i].owner,
            NodeRef::Junction(i) => self.junctions[i].owner,
        }
    }

    pub fn action_kind(&self, n: NodeRef) -> Option<ActionKind> {
        match n {
            NodeRef::Action(i) => Some(self.actions[i].kind),
            _ => None,
        }
    }

    pub fn cover_id(&self, c: Cover) -> &str {
        match c {
            Cover::Thimac(t) => &self.thimacs[t.0].id,
            Cover::Node(n) => self.node_id(n),
        }
    }

    /// All nodes in declaration order: actions, then storages, then junctions.
    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        (0..self.actions.len())
            .map(NodeRef::Action)
            .chain((0..self.storages.len()).map(NodeRef::Storage))
            .chain((0..self.junctions.len()).map(NodeRef::Junction))
    }

    /// Dense index of a node among [`Model::nodes`].
    pub fn node_slot(&self, n: NodeRef) -> usize {
        match n {
            NodeRef::Action(i) => i,
            NodeRef::Storage(i) => self.actions.len() + i,
            NodeRef::Junction(i) => self.actions.len() + self.storages.len() + i,
        }
    }

    pub fn node_count(&self) -> usize {
        self.actions.len() + self.storages.len() + self.junctions.len()
    }

    /// Role of `n` as the source of a flow (storages read as releases).
    pub fn source_role(&self, n: NodeRef) -> EndpointRole {
        match n {
            NodeRef::Action(i) => EndpointRole::Action(self.actions[i].kind),
            NodeRef::Storage(_) => EndpointRole::Action(ActionKind::Release),
            NodeRef::Junction(_) => EndpointRole::Junction,
        }
    }

    /// Role of `n` as the target of a flow (storages are written as receives).
    pub fn target_role(&self, n: NodeRef) -> EndpointRole {
        match n {
            NodeRef::Action(i) => EndpointRole::Action(self.actions[i].kind),
            NodeRef::Storage(_) => EndpointRole::Action(ActionKind::Receive),
            NodeRef::Junction(_) => EndpointRole::Junction,
        }
    }

    pub fn adjacency_row(&self, from: NodeRef, to: NodeRef) -> AdjacencyRow {
        AdjacencyRow {
            from: self.source_role(from),
            to: self.target_role(to),
            same_owner: self.node_owner(from) == self.node_owner(to),
        }
    }

    /// Ancestors of `t`, nearest first. Stops if the parent chain loops.
    pub fn ancestors(&self, t: ThimacIdx) -> Vec<ThimacIdx> {
        let mut out = Vec::new();
        let mut cur = self.thimacs[t.0].parent;
        while let Some(p) = cur {
            if p == t || out.contains(&p) {
                break;
            }
            out.push(p);
            cur = self.thimacs[p.0].parent;
        }
        out
    }

    /// `t` and all of its descendant thimacs, in pre-order.
    pub fn subtree(&self, t: ThimacIdx) -> Vec<ThimacIdx> {
        let mut out = vec![t];
        let mut i = 0;
        while i < out.len() {
            let cur = out[i];
            for child in &self.thimacs[cur.0].children {
                if let Child::Thimac(c) = child {
                    if !out.contains(c) {
                        out.push(*c);
                    }
                }
            }
            i += 1;
        }
        out
    }

    pub fn roots(&self) -> impl Iterator<Item = ThimacIdx> + '_ {
        self.thimacs
            .iter()
            .enumerate()
            .filter(|(_, t)| t.parent.is_none())
            .map(|(i, _)| ThimacIdx(i))
    }

    fn register(&mut self, id: String, entity: Entity) -> Result<(), ModelError> {
        if self.index.contains_key(&id) {
            return Err(ModelError::DuplicateId(id));
        }
        self.index.insert(id, entity);
        Ok(())
    }

    fn qualify(&self, owner: ThimacIdx, name: &str) -> String {
        format!("{}.{}", self.thimacs[owner.0].id, name)
    }

    fn check_name(name: &str) -> Result<(), ModelError> {
        if is_ident(name) {
            Ok(())
        } else {
            Err(ModelError::InvalidIdent(name.to_string()))
        }
    }

    fn check_thimac(&self, t: ThimacIdx) -> Result<(), ModelError> {
        if t.0 < self.thimacs.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownId(format!("thimac #{}", t.0)))
        }
    }

    fn check_node(&self, n: NodeRef) -> Result<(), ModelError> {
        let ok = match n {
            NodeRef::Action(i) => i < self.actions.len(),
            NodeRef::Storage(i) => i < self.storages.len(),
            NodeRef::Junction(i) => i < self.junctions.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::UnknownId(format!("{n:?}")))
        }
    }

    /// Adds a thimac together with its implicit create node.
    pub fn add_thimac(
        &mut self,
        name: &str,
        parent: Option<ThimacIdx>,
        realizable: bool,
    ) -> Result<ThimacIdx, ModelError> {
        Self::check_name(name)?;
        let id = match parent {
            Some(p) => {
                self.check_thimac(p)?;
                self.qualify(p, name)
            }
            None => name.to_string(),
        };
        let idx = ThimacIdx(self.thimacs.len());
        self.register(id.clone(), Entity::Thimac(idx))?;
        self.thimacs.push(Thimac {
            id,
            name: name.to_string(),
            parent,
            realizable,
            delimiter: false,
            children: Vec::new(),
        });
        if let Some(p) = parent {
            self.thimacs[p.0].children.push(Child::Thimac(idx));
        }
        let create_id = self.qualify(idx, IMPLICIT_CREATE);
        let node = NodeRef::Action(self.actions.len());
        self.register(create_id.clone(), Entity::Node(node))?;
        self.actions.push(ActionNode {
            id: create_id,
            name: IMPLICIT_CREATE.to_string(),
            kind: ActionKind::Create,
            owner: idx,
            label: None,
            implicit: true,
        });
        self.thimacs[idx.0].children.push(Child::Node(node));
        Ok(idx)
    }

    pub fn set_delimiter(&mut self, t: ThimacIdx, delimiter: bool) {
        self.thimacs[t.0].delimiter = delimiter;
    }

    fn implicit_create_of(&self, owner: ThimacIdx) -> Option<usize> {
        self.thimacs[owner.0].children.iter().find_map(|c| match c {
            Child::Node(NodeRef::Action(i)) if self.actions[*i].implicit => Some(*i),
            _ => None,
        })
    }

    /// Appends an action. The first explicit create of a thimac takes over
    /// the slot of its implicit create, so edges already attached to
    /// `Owner.create` keep pointing at the same node.
    pub fn add_action(
        &mut self,
        owner: ThimacIdx,
        kind: ActionKind,
        name: &str,
        label: Option<&str>,
    ) -> Result<NodeRef, ModelError> {
        self.check_thimac(owner)?;
        Self::check_name(name)?;
        let id = self.qualify(owner, name);
        if kind == ActionKind::Create {
            if let Some(i) = self.implicit_create_of(owner) {
                if self.index.contains_key(&id) {
                    return Err(ModelError::DuplicateId(id));
                }
                let old = std::mem::take(&mut self.actions[i].id);
                self.index.remove(&old);
                self.index.insert(id.clone(), Entity::Node(NodeRef::Action(i)));
                let a = &mut self.actions[i];
                a.id = id;
                a.name = name.to_string();
                a.label = label.map(str::to_string);
                a.implicit = false;
                return Ok(NodeRef::Action(i));
            }
        }
        let node = NodeRef::Action(self.actions.len());
        self.register(id.clone(), Entity::Node(node))?;
        self.actions.push(ActionNode {
            id,
            name: name.to_string(),
            kind,
            owner,
            label: label.map(str::to_string),
            implicit: false,
        });
        self.thimacs[owner.0].children.push(Child::Node(node));
        Ok(node)
    }

    pub fn attach_storage(
        &mut self,
        owner: ThimacIdx,
        name: &str,
        label: &str,
    ) -> Result<NodeRef, ModelError> {
        self.check_thimac(owner)?;
        Self::check_name(name)?;
        let id = self.qualify(owner, name);
        let node = NodeRef::Storage(self.storages.len());
        self.register(id.clone(), Entity::Node(node))?;
        self.storages.push(StorageNode {
            id,
            name: name.to_string(),
            owner,
            label: label.to_string(),
        });
        self.thimacs[owner.0].children.push(Child::Node(node));
        Ok(node)
    }

    pub fn junction(
        &mut self,
        owner: ThimacIdx,
        name: &str,
        mode: JunctionMode,
    ) -> Result<NodeRef, ModelError> {
        self.check_thimac(owner)?;
        Self::check_name(name)?;
        let id = self.qualify(owner, name);
        let node = NodeRef::Junction(self.junctions.len());
        self.register(id.clone(), Entity::Node(node))?;
        self.junctions.push(JunctionNode {
            id,
            name: name.to_string(),
            owner,
            mode,
        });
        self.thimacs[owner.0].children.push(Child::Node(node));
        Ok(node)
    }

    pub fn connect_flow(&mut self, from: NodeRef, to: NodeRef) -> Result<usize, ModelError> {
        self.check_node(from)?;
        self.check_node(to)?;
        let row = self.adjacency_row(from, to);
        if !row.is_legal() {
            return Err(ModelError::IllegalFlow { row });
        }
        if self.triggers.iter().any(|t| t.from == from && t.to == to) {
            return Err(ModelError::RedundantTrigger {
                from: self.node_id(from).to_string(),
                to: self.node_id(to).to_string(),
            });
        }
        let idx = self.flows.len();
        let id = format!("flow:{}", idx + 1);
        self.register(id.clone(), Entity::Flow(idx))?;
        self.flows.push(FlowEdge { id, from, to });
        Ok(idx)
    }

    pub fn connect_trigger(&mut self, from: NodeRef, to: NodeRef) -> Result<usize, ModelError> {
        self.check_node(from)?;
        self.check_node(to)?;
        if self.flows.iter().any(|f| f.from == from && f.to == to) {
            return Err(ModelError::RedundantTrigger {
                from: self.node_id(from).to_string(),
                to: self.node_id(to).to_string(),
            });
        }
        let idx = self.triggers.len();
        let id = format!("trigger:{}", idx + 1);
        self.register(id.clone(), Entity::Trigger(idx))?;
        self.triggers.push(TriggerEdge { id, from, to });
        Ok(idx)
    }

    /// Attaches boolean input `input` to the process node `node`.
    pub fn add_guard(&mut self, input: &str, negated: bool, node: NodeRef) -> Result<(), ModelError> {
        self.check_node(node)?;
        Self::check_name(input)?;
        if self.action_kind(node) != Some(ActionKind::Process) {
            return Err(ModelError::GuardTarget(self.node_id(node).to_string()));
        }
        self.guards.push(Guard {
            input: input.to_string(),
            negated,
            node,
        });
        Ok(())
    }

    /// Registers an event without checking its cover; see
    /// [`crate::dynamics::define_event`] for the checked entry point.
    pub(crate) fn push_event(&mut self, event: Event) -> Result<EventIdx, ModelError> {
        let idx = EventIdx(self.events.len());
        self.register(event.id.clone(), Entity::Event(idx))?;
        self.events.push(event);
        Ok(idx)
    }

    pub fn declare_chronology(
        &mut self,
        from: EventIdx,
        to: EventIdx,
        kind: ChronoKind,
    ) -> Result<(), ModelError> {
        for e in [from, to] {
            if e.0 >= self.events.len() {
                return Err(ModelError::UnknownId(format!("event #{}", e.0)));
            }
        }
        self.chronology.push(ChronologyDecl { from, to, kind });
        Ok(())
    }

    pub fn add_focus(&mut self, name: &str, events: Vec<EventIdx>) -> Result<(), ModelError> {
        Self::check_name(name)?;
        if self.focus.iter().any(|f| f.name == name) {
            return Err(ModelError::DuplicateId(name.to_string()));
        }
        if let Some(e) = events.iter().find(|e| e.0 >= self.events.len()) {
            return Err(ModelError::UnknownId(format!("event #{}", e.0)));
        }
        self.focus.push(FocusGroup {
            name: name.to_string(),
            events,
        });
        Ok(())
    }

    /// Nodes reached by an event: explicit node covers plus every node owned
    /// by a covered thimac or one of its descendants. Sorted, deduplicated.
    pub fn cover_nodes(&self, e: EventIdx) -> Vec<NodeRef> {
        let mut out = Vec::new();
        for c in &self.events[e.0].covers {
            match *c {
                Cover::Node(n) => out.push(n),
                Cover::Thimac(t) => {
                    for sub in self.subtree(t) {
                        for child in &self.thimacs[sub.0].children {
                            if let Child::Node(n) = child {
                                out.push(*n);
                            }
                        }
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Thimacs touched by an event: covered thimacs with their subtrees and
    /// the owners of covered nodes. Sorted, deduplicated.
    pub fn cover_thimacs(&self, e: EventIdx) -> Vec<ThimacIdx> {
        let mut out = Vec::new();
        for c in &self.events[e.0].covers {
            match *c {
                Cover::Thimac(t) => out.extend(self.subtree(t)),
                Cover::Node(n) => out.push(self.node_owner(n)),
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Rebuilds the id index after bulk construction (JSON import).
    pub(crate) fn from_parts(mut parts: Model) -> Result<Model, ModelError> {
        parts.index.clear();
        let mut index = BTreeMap::new();
        let mut put = |id: &str, e: Entity| -> Result<(), ModelError> {
            if index.insert(id.to_string(), e).is_some() {
                Err(ModelError::DuplicateId(id.to_string()))
            } else {
                Ok(())
            }
        };
        for (i, t) in parts.thimacs.iter().enumerate() {
            put(&t.id, Entity::Thimac(ThimacIdx(i)))?;
        }
        for n in parts.nodes().collect::<Vec<_>>() {
            put(parts.node_id(n), Entity::Node(n))?;
        }
        for (i, f) in parts.flows.iter().enumerate() {
            put(&f.id, Entity::Flow(i))?;
        }
        for (i, t) in parts.triggers.iter().enumerate() {
            put(&t.id, Entity::Trigger(i))?;
        }
        for (i, e) in parts.events.iter().enumerate() {
            put(&e.id, Entity::Event(EventIdx(i)))?;
        }
        parts.index = index;
        Ok(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_model_rejects_empty_name() {
        assert_eq!(Model::new(""), Err(ModelError::InvalidName));
        let m = Model::new("demo").unwrap();
        assert!(m.is_empty());
        assert_eq!(m.thimacs.len(), 0);
        assert_eq!(m.flows.len() + m.triggers.len(), 0);
    }

    #[test]
    fn thimac_gets_implicit_create() {
        let mut m = Model::new("demo").unwrap();
        let c = m.add_thimac("Computer", None, true).unwrap();
        assert_eq!(m.actions.len(), 1);
        assert!(m.actions[0].implicit);
        assert_eq!(m.actions[0].id, "Computer.create");
        assert_eq!(m.thimac(c).children, vec![Child::Node(NodeRef::Action(0))]);

        let explicit = m.add_action(c, ActionKind::Create, "gen", None).unwrap();
        assert_eq!(explicit, NodeRef::Action(0));
        assert!(!m.actions[0].implicit);
        assert_eq!(m.node_by_id("Computer.gen").unwrap(), explicit);
        assert!(m.lookup("Computer.create").is_none());
    }

    #[test]
    fn nested_and_unrealizable_thimacs() {
        let mut m = Model::new("demo").unwrap();
        let image = m.add_thimac("image", None, true).unwrap();
        let eyes = m.add_thimac("eyes", Some(image), true).unwrap();
        assert_eq!(m.thimac(eyes).id, "image.eyes");
        assert_eq!(m.thimac(eyes).parent, Some(image));
        let rs = m.add_thimac("round_square", None, false).unwrap();
        assert!(!m.thimac(rs).realizable);
        assert_eq!(
            m.add_thimac("eyes", Some(image), true),
            Err(ModelError::DuplicateId("image.eyes".into()))
        );
        assert!(matches!(
            m.add_thimac("x", Some(ThimacIdx(99)), true),
            Err(ModelError::UnknownId(_))
        ));
    }

    #[test]
    fn arrive_is_not_an_action_kind() {
        assert_eq!(
            "Arrive".parse::<ActionKind>(),
            Err(ModelError::InvalidKind("Arrive".into()))
        );
        assert_eq!("Transfer".parse::<ActionKind>(), Ok(ActionKind::Transfer));
    }

    #[test]
    fn flow_rules() {
        let mut m = Model::new("demo").unwrap();
        let a = m.add_thimac("A", None, true).unwrap();
        let b = m.add_thimac("B", None, true).unwrap();
        let rel = m.add_action(a, ActionKind::Release, "r", None).unwrap();
        let ta = m.add_action(a, ActionKind::Transfer, "t", None).unwrap();
        let tb = m.add_action(b, ActionKind::Transfer, "t", None).unwrap();
        let pa = m.add_action(a, ActionKind::Process, "p", None).unwrap();
        assert!(m.connect_flow(rel, ta).is_ok());
        assert!(m.connect_flow(ta, tb).is_ok());
        let err = m.connect_flow(ta, pa).unwrap_err();
        assert!(matches!(err, ModelError::IllegalFlow { row } if row.same_owner));
        let pb = m.add_action(b, ActionKind::Process, "p", None).unwrap();
        assert!(matches!(m.connect_flow(pa, pb), Err(ModelError::IllegalFlow { .. })));
        // process -> process is never a flow
        let pa2 = m.add_action(a, ActionKind::Process, "p2", None).unwrap();
        assert!(m.connect_flow(pa, pa2).is_err());
    }

    #[test]
    fn trigger_rules() {
        let mut m = Model::new("demo").unwrap();
        let x = m.add_thimac("x", None, true).unwrap();
        let y = m.add_thimac("y", None, true).unwrap();
        let p = m.add_action(x, ActionKind::Process, "p", None).unwrap();
        let cy = m.node_by_id("y.create").unwrap();
        assert!(m.connect_trigger(p, cy).is_ok());
        let r = m.add_action(x, ActionKind::Release, "r", None).unwrap();
        let t = m.add_action(x, ActionKind::Transfer, "t", None).unwrap();
        m.connect_flow(r, t).unwrap();
        assert!(matches!(
            m.connect_trigger(r, t),
            Err(ModelError::RedundantTrigger { .. })
        ));
        let _ = y;
    }

    #[test]
    fn storage_and_junction() {
        let mut m = Model::new("demo").unwrap();
        let ln = m.add_thimac("LocalNetwork", None, true).unwrap();
        let s = m.attach_storage(ln, "list", "list of local computers").unwrap();
        let t = m.add_action(ln, ActionKind::Transfer, "t", None).unwrap();
        m.connect_flow(s, t).unwrap();
        let j = m.junction(ln, "gate", JunctionMode::Or).unwrap();
        assert_eq!(m.node_id(j), "LocalNetwork.gate");
        assert!(matches!(
            m.attach_storage(ThimacIdx(7), "s", ""),
            Err(ModelError::UnknownId(_))
        ));
    }

    #[test]
    fn adjacency_table_is_the_documented_relation() {
        let rows = AdjacencyRow::legal_rows();
        let action_rows: Vec<_> = rows
            .iter()
            .filter(|r| {
                matches!((r.from, r.to), (EndpointRole::Action(_), EndpointRole::Action(_)))
            })
            .collect();
        assert_eq!(action_rows.len(), 8);
        assert!(!rows.iter().any(|r| r.to == EndpointRole::Action(ActionKind::Create)));
    }
}
