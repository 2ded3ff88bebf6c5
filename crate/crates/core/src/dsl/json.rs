//! Lossless JSON form of a [`Model`]. Every array is in declaration order
//! and every reference is by id, so `import_json(export_json(m)) == m`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ActionKind, ActionNode, Child, ChronoKind, ChronologyDecl, Cover, Duration, Entity, Event,
    EventIdx, FlowEdge, FocusGroup, Guard, JunctionMode, JunctionNode, Model, ModelError, NodeRef,
    Polarity, StorageNode, Tense, Thimac, ThimacIdx, TriggerEdge,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub name: String,
    pub thimacs: Vec<ThimacDoc>,
    pub actions: Vec<ActionDoc>,
    pub flows: Vec<EdgeDoc>,
    pub triggers: Vec<EdgeDoc>,
    pub storages: Vec<StorageDoc>,
    pub junctions: Vec<JunctionDoc>,
    pub events: Vec<EventDoc>,
    pub chronology: Vec<ChronoDoc>,
    #[serde(default)]
    pub guards: Vec<GuardDoc>,
    #[serde(default)]
    pub focus: Vec<FocusDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThimacDoc {
    pub id: String,
    pub name: String,
    pub parent: Option<String>,
    pub realizable: bool,
    #[serde(default)]
    pub delimiter: bool,
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDoc {
    pub id: String,
    pub name: String,
    pub kind: ActionKind,
    pub owner: String,
    pub label: Option<String>,
    #[serde(default)]
    pub implicit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub id: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageDoc {
    pub id: String,
    pub name: String,
    pub owner: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionDoc {
    pub id: String,
    pub name: String,
    pub owner: String,
    pub mode: JunctionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDoc {
    pub id: String,
    pub label: Option<String>,
    pub covers: Vec<String>,
    pub polarity: Polarity,
    pub duration: Option<Duration>,
    pub tense: Option<Tense>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronoDoc {
    pub from: String,
    pub to: String,
    pub kind: ChronoKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardDoc {
    pub input: String,
    pub negated: bool,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusDoc {
    pub name: String,
    pub events: Vec<String>,
}

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("malformed model JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("`{0}` is not a {1}")]
    WrongKind(String, &'static str),
}

impl ModelDoc {
    pub fn from_model(m: &Model) -> ModelDoc {
        let tid = |t: ThimacIdx| m.thimac(t).id.clone();
        let nid = |n: NodeRef| m.node_id(n).to_string();
        let eid = |e: EventIdx| m.event(e).id.clone();
        ModelDoc {
            name: m.name.clone(),
            thimacs: m
                .thimacs
                .iter()
                .map(|t| ThimacDoc {
                    id: t.id.clone(),
                    name: t.name.clone(),
                    parent: t.parent.map(tid),
                    realizable: t.realizable,
                    delimiter: t.delimiter,
                    children: t
                        .children
                        .iter()
                        .map(|c| match *c {
                            Child::Thimac(t) => tid(t),
                            Child::Node(n) => nid(n),
                        })
                        .collect(),
                })
                .collect(),
            actions: m
                .actions
                .iter()
                .map(|a| ActionDoc {
                    id: a.id.clone(),
                    name: a.name.clone(),
                    kind: a.kind,
                    owner: tid(a.owner),
                    label: a.label.clone(),
                    implicit: a.implicit,
                })
                .collect(),
            flows: m
                .flows
                .iter()
                .map(|f| EdgeDoc {
                    id: f.id.clone(),
                    from: nid(f.from),
                    to: nid(f.to),
                })
                .collect(),
            triggers: m
                .triggers
                .iter()
                .map(|f| EdgeDoc {
                    id: f.id.clone(),
                    from: nid(f.from),
                    to: nid(f.to),
                })
                .collect(),
            storages: m
                .storages
                .iter()
                .map(|s| StorageDoc {
                    id: s.id.clone(),
                    name: s.name.clone(),
                    owner: tid(s.owner),
                    label: s.label.clone(),
                })
                .collect(),
            junctions: m
                .junctions
                .iter()
                .map(|j| JunctionDoc {
                    id: j.id.clone(),
                    name: j.name.clone(),
                    owner: tid(j.owner),
                    mode: j.mode,
                })
                .collect(),
            events: m
                .events
                .iter()
                .map(|e| EventDoc {
                    id: e.id.clone(),
                    label: e.label.clone(),
                    covers: e.covers.iter().map(|c| m.cover_id(*c).to_string()).collect(),
                    polarity: e.polarity,
                    duration: e.duration.clone(),
                    tense: e.tense,
                })
                .collect(),
            chronology: m
                .chronology
                .iter()
                .map(|c| ChronoDoc {
                    from: eid(c.from),
                    to: eid(c.to),
                    kind: c.kind,
                })
                .collect(),
            guards: m
                .guards
                .iter()
                .map(|g| GuardDoc {
                    input: g.input.clone(),
                    negated: g.negated,
                    node: nid(g.node),
                })
                .collect(),
            focus: m
                .focus
                .iter()
                .map(|f| FocusDoc {
                    name: f.name.clone(),
                    events: f.events.iter().map(|e| eid(*e)).collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds a model. References are resolved against the arrays; no
    /// structural law is enforced here beyond closure (run the validator).
    pub fn into_model(self) -> Result<Model, JsonError> {
        let mut ids: BTreeMap<&str, Entity> = BTreeMap::new();
        for (i, t) in self.thimacs.iter().enumerate() {
            ids.insert(&t.id, Entity::Thimac(ThimacIdx(i)));
        }
        for (i, a) in self.actions.iter().enumerate() {
            ids.insert(&a.id, Entity::Node(NodeRef::Action(i)));
        }
        for (i, s) in self.storages.iter().enumerate() {
            ids.insert(&s.id, Entity::Node(NodeRef::Storage(i)));
        }
        for (i, j) in self.junctions.iter().enumerate() {
            ids.insert(&j.id, Entity::Node(NodeRef::Junction(i)));
        }
        for (i, e) in self.events.iter().enumerate() {
            ids.insert(&e.id, Entity::Event(EventIdx(i)));
        }
        let get = |id: &str| ids.get(id).copied().ok_or_else(|| ModelError::UnknownId(id.into()));
        let thimac = |id: &str| match get(id)? {
            Entity::Thimac(t) => Ok(t),
            _ => Err(JsonError::WrongKind(id.into(), "thimac")),
        };
        let node = |id: &str| match get(id)? {
            Entity::Node(n) => Ok(n),
            _ => Err(JsonError::WrongKind(id.into(), "node")),
        };
        let event = |id: &str| match get(id)? {
            Entity::Event(e) => Ok(e),
            _ => Err(JsonError::WrongKind(id.into(), "event")),
        };

        let mut model = Model::new(&self.name)?;
        for t in &self.thimacs {
            model.thimacs.push(Thimac {
                id: t.id.clone(),
                name: t.name.clone(),
                parent: t.parent.as_deref().map(thimac).transpose()?,
                realizable: t.realizable,
                delimiter: t.delimiter,
                children: t
                    .children
                    .iter()
                    .map(|c| match get(c)? {
                        Entity::Thimac(t) => Ok(Child::Thimac(t)),
                        Entity::Node(n) => Ok(Child::Node(n)),
                        _ => Err(JsonError::WrongKind(c.clone(), "thimac child")),
                    })
                    .collect::<Result<_, JsonError>>()?,
            });
        }
        for a in &self.actions {
            model.actions.push(ActionNode {
                id: a.id.clone(),
                name: a.name.clone(),
                kind: a.kind,
                owner: thimac(&a.owner)?,
                label: a.label.clone(),
                implicit: a.implicit,
            });
        }
        for s in &self.storages {
            model.storages.push(StorageNode {
                id: s.id.clone(),
                name: s.name.clone(),
                owner: thimac(&s.owner)?,
                label: s.label.clone(),
            });
        }
        for j in &self.junctions {
            model.junctions.push(JunctionNode {
                id: j.id.clone(),
                name: j.name.clone(),
                owner: thimac(&j.owner)?,
                mode: j.mode,
            });
        }
        for f in &self.flows {
            model.flows.push(FlowEdge {
                id: f.id.clone(),
                from: node(&f.from)?,
                to: node(&f.to)?,
            });
        }
        for t in &self.triggers {
            model.triggers.push(TriggerEdge {
                id: t.id.clone(),
                from: node(&t.from)?,
                to: node(&t.to)?,
            });
        }
        for g in &self.guards {
            model.guards.push(Guard {
                input: g.input.clone(),
                negated: g.negated,
                node: node(&g.node)?,
            });
        }
        for e in &self.events {
            model.events.push(Event {
                id: e.id.clone(),
                label: e.label.clone(),
                covers: e
                    .covers
                    .iter()
                    .map(|c| match get(c)? {
                        Entity::Thimac(t) => Ok(Cover::Thimac(t)),
                        Entity::Node(n) => Ok(Cover::Node(n)),
                        _ => Err(JsonError::WrongKind(c.clone(), "thimac or node")),
                    })
                    .collect::<Result<_, JsonError>>()?,
                polarity: e.polarity,
                duration: e.duration.clone(),
                tense: e.tense,
            });
        }
        for c in &self.chronology {
            model.chronology.push(ChronologyDecl {
                from: event(&c.from)?,
                to: event(&c.to)?,
                kind: c.kind,
            });
        }
        for f in &self.focus {
            model.focus.push(FocusGroup {
                name: f.name.clone(),
                events: f.events.iter().map(|e| event(e)).collect::<Result<_, _>>()?,
            });
        }
        Ok(Model::from_parts(model)?)
    }
}

pub fn export_json(model: &Model) -> String {
    let doc = ModelDoc::from_model(model);
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}

pub fn import_json(text: &str) -> Result<Model, JsonError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    doc.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    #[test]
    fn empty_model_has_empty_arrays() {
        let m = Model::new("empty").unwrap();
        let v: serde_json::Value = serde_json::from_str(&export_json(&m)).unwrap();
        assert_eq!(v["name"], "empty");
        for key in ["thimacs", "actions", "flows", "triggers", "storages", "junctions", "events", "chronology"] {
            assert_eq!(v[key], serde_json::json!([]), "{key}");
        }
    }

    #[test]
    fn round_trip_small_model() {
        let src = r#"model "m" {
  thimac A {
    create c
    process p
    storage s "store"
    junction or j
  }
  flow A.c -> A.p
  trigger A.p => A.c
  guard not x on A.p
  event e covers { A }
  focus f { e }
}"#;
        let m = parse_model(src).unwrap();
        let back = import_json(&export_json(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let m = parse_model("model \"m\" { thimac A { process p } }").unwrap();
        let text = export_json(&m).replace("\"owner\": \"A\"", "\"owner\": \"B\"");
        assert!(matches!(import_json(&text), Err(JsonError::Model(ModelError::UnknownId(_)))));
    }
}
