//! Recursive-descent parser for `.tm` sources.
//!
//! Parsing happens in two steps. The token stream is turned into a small
//! AST (syntax errors stop here, at the first one). The AST is then
//! elaborated into a [`Model`] through the ordinary constructors, which
//! collects every semantic error instead of stopping at the first.

use super::lexer::{tokenize, Tok, Token};
use crate::diag::{Diagnostic, SourceSpan};
use crate::dynamics::define_event;
use crate::model::{
    ActionKind, ChronoKind, Cover, Duration, Event, JunctionMode, Model, ModelError, Polarity,
    Tense, ThimacIdx,
};

pub const KEYWORDS: &[&str] = &[
    "model", "thimac", "unrealizable", "delimiter", "storage", "junction", "or", "and", "create",
    "process", "release", "transfer", "receive", "flow", "trigger", "guard", "on", "not", "event",
    "absent", "duration", "tense", "past", "now", "covers", "chronology", "repeat", "focus",
];

#[derive(Debug, Clone)]
struct Path {
    text: String,
    span: SourceSpan,
}

#[derive(Debug)]
enum Member {
    Action {
        kind: ActionKind,
        name: String,
        label: Option<String>,
        span: SourceSpan,
    },
    Thimac(ThimacDecl),
    Storage {
        name: String,
        label: Option<String>,
        span: SourceSpan,
    },
    Junction {
        mode: JunctionMode,
        name: String,
        span: SourceSpan,
    },
}

#[derive(Debug)]
struct ThimacDecl {
    name: String,
    span: SourceSpan,
    unrealizable: bool,
    delimiter: bool,
    body: Vec<Member>,
}

#[derive(Debug)]
struct EventDecl {
    id: String,
    label: Option<String>,
    absent: bool,
    duration: Option<Duration>,
    tense: Option<Tense>,
    covers: Vec<Path>,
    span: SourceSpan,
}

#[derive(Debug)]
enum Item {
    Thimac(ThimacDecl),
    Flow { from: Path, to: Path, span: SourceSpan },
    Trigger { from: Path, to: Path, span: SourceSpan },
    Guard { input: String, negated: bool, target: Path, span: SourceSpan },
    Event(EventDecl),
    Chronology(Vec<(Path, Path, ChronoKind, SourceSpan)>),
    Focus { name: String, events: Vec<Path>, span: SourceSpan },
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

fn join(a: SourceSpan, b: SourceSpan) -> SourceSpan {
    if a.line == b.line && b.column >= a.column {
        SourceSpan::new(a.line, a.column, b.column + b.length - a.column)
    } else {
        a
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn prev_span(&self) -> SourceSpan {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        let t = self.peek();
        Diagnostic::error(
            "syntax",
            format!("expected {wanted}, found {}", t.tok.describe()),
            Some(t.span),
        )
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<SourceSpan> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<SourceSpan> {
        if self.peek().tok == tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn name(&mut self) -> PResult<(String, SourceSpan)> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                Ok((s, self.bump().span))
            }
            Tok::Ident(s) => Err(Diagnostic::error(
                "syntax",
                format!("`{s}` is a reserved word"),
                Some(self.peek().span),
            )),
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn opt_string(&mut self) -> Option<String> {
        if let Tok::Str(s) = &self.peek().tok {
            let s = s.clone();
            self.bump();
            Some(s)
        } else {
            None
        }
    }

    fn path(&mut self) -> PResult<Path> {
        let (mut text, first) = self.name()?;
        let mut span = first;
        while self.peek().tok == Tok::Dot {
            self.bump();
            // `X.create` names an implicit create.
            let (part, s) = if self.is_kw("create") {
                ("create".to_string(), self.bump().span)
            } else {
                self.name()?
            };
            text.push('.');
            text.push_str(&part);
            span = join(first, s);
        }
        Ok(Path { text, span })
    }

    fn model(&mut self) -> PResult<(String, Vec<Item>)> {
        self.expect_kw("model")?;
        let name = match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.bump();
                s
            }
            _ => return Err(self.unexpected("model name string")),
        };
        self.expect(Tok::LBrace)?;
        let mut items = Vec::new();
        while self.peek().tok != Tok::RBrace {
            items.push(self.item()?);
        }
        self.bump();
        if self.peek().tok != Tok::Eof {
            return Err(self.unexpected("end of input"));
        }
        Ok((name, items))
    }

    fn item(&mut self) -> PResult<Item> {
        let start = self.peek().span;
        let kw = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("an item")),
        };
        match kw.as_str() {
            "thimac" => Ok(Item::Thimac(self.thimac()?)),
            "flow" | "trigger" => {
                self.bump();
                let from = self.path()?;
                let arrow = if kw == "flow" { Tok::Arrow } else { Tok::FatArrow };
                self.expect(arrow)?;
                let to = self.path()?;
                let span = join(start, to.span);
                Ok(if kw == "flow" {
                    Item::Flow { from, to, span }
                } else {
                    Item::Trigger { from, to, span }
                })
            }
            "guard" => {
                self.bump();
                let negated = self.eat_kw("not");
                let (input, _) = self.name()?;
                self.expect_kw("on")?;
                let target = self.path()?;
                let span = join(start, target.span);
                Ok(Item::Guard {
                    input,
                    negated,
                    target,
                    span,
                })
            }
            "event" => Ok(Item::Event(self.event()?)),
            "chronology" => {
                self.bump();
                self.expect(Tok::LBrace)?;
                let mut lines = Vec::new();
                while self.peek().tok != Tok::RBrace {
                    let line_start = self.peek().span;
                    let kind = if self.eat_kw("repeat") {
                        ChronoKind::Repeat
                    } else {
                        ChronoKind::Precede
                    };
                    let from = self.path()?;
                    self.expect(Tok::Arrow)?;
                    let to = self.path()?;
                    let span = join(line_start, to.span);
                    lines.push((from, to, kind, span));
                }
                self.bump();
                Ok(Item::Chronology(lines))
            }
            "focus" => {
                self.bump();
                let (name, _) = self.name()?;
                let events = self.path_list()?;
                Ok(Item::Focus {
                    name,
                    events,
                    span: join(start, self.prev_span()),
                })
            }
            _ => Err(self.unexpected("`thimac`, `flow`, `trigger`, `guard`, `event`, `chronology` or `focus`")),
        }
    }

    fn path_list(&mut self) -> PResult<Vec<Path>> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        if self.peek().tok != Tok::RBrace {
            out.push(self.path()?);
            while self.peek().tok == Tok::Comma {
                self.bump();
                out.push(self.path()?);
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(out)
    }

    fn thimac(&mut self) -> PResult<ThimacDecl> {
        let start = self.expect_kw("thimac")?;
        let (name, name_span) = self.name()?;
        let mut unrealizable = false;
        let mut delimiter = false;
        loop {
            if self.eat_kw("unrealizable") {
                unrealizable = true;
            } else if self.eat_kw("delimiter") {
                delimiter = true;
            } else {
                break;
            }
        }
        self.expect(Tok::LBrace)?;
        let mut body = Vec::new();
        while self.peek().tok != Tok::RBrace {
            body.push(self.member()?);
        }
        self.bump();
        Ok(ThimacDecl {
            name,
            span: join(start, name_span),
            unrealizable,
            delimiter,
            body,
        })
    }

    fn member(&mut self) -> PResult<Member> {
        let start = self.peek().span;
        let word = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("an action, `thimac`, `storage` or `junction`")),
        };
        if let Ok(kind) = word.parse::<ActionKind>() {
            if KEYWORDS.contains(&word.as_str()) {
                self.bump();
                let (name, name_span) = self.name()?;
                let label = self.opt_string();
                return Ok(Member::Action {
                    kind,
                    name,
                    label,
                    span: join(start, name_span),
                });
            }
        }
        match word.as_str() {
            "thimac" => Ok(Member::Thimac(self.thimac()?)),
            "storage" => {
                self.bump();
                let (name, name_span) = self.name()?;
                let label = self.opt_string();
                Ok(Member::Storage {
                    name,
                    label,
                    span: join(start, name_span),
                })
            }
            "junction" => {
                self.bump();
                let mode = if self.eat_kw("or") {
                    JunctionMode::Or
                } else if self.eat_kw("and") {
                    JunctionMode::And
                } else {
                    return Err(self.unexpected("`or` or `and`"));
                };
                let (name, name_span) = self.name()?;
                Ok(Member::Junction {
                    mode,
                    name,
                    span: join(start, name_span),
                })
            }
            w if !KEYWORDS.contains(&w) && matches!(self.peek_at(1), Tok::Ident(_)) => {
                let hint = if w.eq_ignore_ascii_case("arrive") || w.eq_ignore_ascii_case("accept") {
                    "; arrive and accept are folded into `receive`"
                } else {
                    ""
                };
                Err(Diagnostic::error(
                    "invalid-kind",
                    format!(
                        "`{w}` is not one of create, process, release, transfer, receive{hint}"
                    ),
                    Some(start),
                ))
            }
            _ => Err(self.unexpected("an action, `thimac`, `storage` or `junction`")),
        }
    }

    fn event(&mut self) -> PResult<EventDecl> {
        let start = self.expect_kw("event")?;
        let (id, _) = self.name()?;
        let label = self.opt_string();
        let absent = self.eat_kw("absent");
        let duration = if self.eat_kw("duration") {
            let magnitude = match self.peek().tok {
                Tok::Number(v) => {
                    self.bump();
                    v
                }
                _ => return Err(self.unexpected("number")),
            };
            let (unit, _) = self.name()?;
            Some(Duration { magnitude, unit })
        } else {
            None
        };
        let tense = if self.eat_kw("tense") {
            if self.eat_kw("past") {
                Some(Tense::Past)
            } else if self.eat_kw("now") {
                Some(Tense::Now)
            } else {
                return Err(self.unexpected("`past` or `now`"));
            }
        } else {
            None
        };
        self.expect_kw("covers")?;
        let covers = self.path_list()?;
        Ok(EventDecl {
            id,
            label,
            absent,
            duration,
            tense,
            covers,
            span: join(start, self.prev_span()),
        })
    }
}

fn model_error(code: &str, err: ModelError, span: SourceSpan) -> Diagnostic {
    let code = match err {
        ModelError::DuplicateId(_) => "duplicate-id",
        ModelError::UnknownId(_) => "unknown-id",
        ModelError::IllegalFlow { .. } => "illegal-flow",
        ModelError::RedundantTrigger { .. } => "redundant-trigger",
        ModelError::EmptyCover(_) | ModelError::DisconnectedCover(_) => "event-cover",
        ModelError::GuardTarget(_) => "guard-target",
        _ => code,
    };
    Diagnostic::error(code, err.to_string(), Some(span))
}

struct Elaborator {
    model: Model,
    diags: Vec<Diagnostic>,
}

impl Elaborator {
    fn thimac(&mut self, decl: &ThimacDecl, parent: Option<ThimacIdx>) {
        let t = match self.model.add_thimac(&decl.name, parent, !decl.unrealizable) {
            Ok(t) => t,
            Err(e) => {
                self.diags.push(model_error("thimac", e, decl.span));
                return;
            }
        };
        self.model.set_delimiter(t, decl.delimiter);
        for m in &decl.body {
            let res = match m {
                Member::Action {
                    kind,
                    name,
                    label,
                    span,
                } => self
                    .model
                    .add_action(t, *kind, name, label.as_deref())
                    .map(|_| ())
                    .map_err(|e| (e, *span)),
                Member::Thimac(sub) => {
                    self.thimac(sub, Some(t));
                    Ok(())
                }
                Member::Storage { name, label, span } => self
                    .model
                    .attach_storage(t, name, label.as_deref().unwrap_or(name))
                    .map(|_| ())
                    .map_err(|e| (e, *span)),
                Member::Junction { mode, name, span } => self
                    .model
                    .junction(t, name, *mode)
                    .map(|_| ())
                    .map_err(|e| (e, *span)),
            };
            if let Err((e, span)) = res {
                self.diags.push(model_error("member", e, span));
            }
        }
    }

    fn node(&mut self, p: &Path) -> Option<crate::model::NodeRef> {
        match self.model.node_by_id(&p.text) {
            Ok(n) => Some(n),
            Err(e) => {
                self.diags.push(model_error("unknown-id", e, p.span));
                None
            }
        }
    }

    fn edges(&mut self, item: &Item) {
        match item {
            Item::Flow { from, to, span } | Item::Trigger { from, to, span } => {
                let (Some(a), Some(b)) = (self.node(from), self.node(to)) else {
                    return;
                };
                let res = if matches!(item, Item::Flow { .. }) {
                    self.model.connect_flow(a, b)
                } else {
                    self.model.connect_trigger(a, b)
                };
                if let Err(e) = res {
                    self.diags.push(model_error("edge", e, *span));
                }
            }
            Item::Guard {
                input,
                negated,
                target,
                span,
            } => {
                let Some(n) = self.node(target) else { return };
                if let Err(e) = self.model.add_guard(input, *negated, n) {
                    self.diags.push(model_error("guard", e, *span));
                }
            }
            _ => {}
        }
    }

    fn event(&mut self, decl: &EventDecl) {
        let mut covers = Vec::new();
        for p in &decl.covers {
            match self.model.cover_by_id(&p.text) {
                Ok(c) if covers.contains(&c) => self.diags.push(Diagnostic::error(
                    "duplicate-id",
                    format!("`{}` is covered twice", p.text),
                    Some(p.span),
                )),
                Ok(c) => covers.push(c),
                Err(e) => self.diags.push(model_error("unknown-id", e, p.span)),
            }
        }
        if covers.len() != decl.covers.len() {
            return;
        }
        let event = Event {
            id: decl.id.clone(),
            label: decl.label.clone(),
            covers: covers.into_iter().collect::<Vec<Cover>>(),
            polarity: if decl.absent {
                Polarity::Absent
            } else {
                Polarity::Present
            },
            duration: decl.duration.clone(),
            tense: decl.tense,
        };
        if let Err(e) = define_event(&mut self.model, event) {
            self.diags.push(model_error("event", e, decl.span));
        }
    }

    fn event_ref(&mut self, p: &Path) -> Option<crate::model::EventIdx> {
        match self.model.event_by_id(&p.text) {
            Ok(e) => Some(e),
            Err(e) => {
                self.diags.push(model_error("unknown-id", e, p.span));
                None
            }
        }
    }

    fn late(&mut self, item: &Item) {
        match item {
            Item::Chronology(lines) => {
                for (from, to, kind, _) in lines {
                    let (Some(a), Some(b)) = (self.event_ref(from), self.event_ref(to)) else {
                        continue;
                    };
                    self.model
                        .declare_chronology(a, b, *kind)
                        .expect("event handles resolved above");
                }
            }
            Item::Focus { name, events, span } => {
                let resolved: Vec<_> = events.iter().filter_map(|p| self.event_ref(p)).collect();
                if resolved.len() != events.len() {
                    return;
                }
                if let Err(e) = self.model.add_focus(name, resolved) {
                    self.diags.push(model_error("focus", e, *span));
                }
            }
            _ => {}
        }
    }
}

/// Parses `.tm` source into a model, or returns at least one error diagnostic.
pub fn parse_model(source: &str) -> Result<Model, Vec<Diagnostic>> {
    let toks = tokenize(source).map_err(|d| vec![d])?;
    let mut parser = Parser { toks, pos: 0 };
    let (name, items) = parser.model().map_err(|d| vec![d])?;
    let model = Model::new(&name).map_err(|e| {
        vec![Diagnostic::error(
            "invalid-name",
            e.to_string(),
            Some(parser.toks[1].span),
        )]
    })?;
    let mut el = Elaborator {
        model,
        diags: Vec::new(),
    };
    for item in &items {
        if let Item::Thimac(decl) = item {
            el.thimac(decl, None);
        }
    }
    for item in &items {
        el.edges(item);
    }
    for item in &items {
        if let Item::Event(decl) = item {
            el.event(decl);
        }
    }
    for item in &items {
        el.late(item);
    }
    if el.diags.is_empty() {
        Ok(el.model)
    } else {
        Err(el.diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model() {
        let m = parse_model(r#"model "empty" { }"#).unwrap();
        assert_eq!(m.name, "empty");
        assert_eq!(m.node_count(), 0);
    }

    #[test]
    fn nested_thimacs_and_members() {
        let src = r#"
model "m" {
  thimac LocalNetwork {
    storage list "list of local computers"
    transfer t
    thimac Control {
      transfer t
      receive r
      junction and both
    }
  }
  flow LocalNetwork.list -> LocalNetwork.t
  flow LocalNetwork.t -> LocalNetwork.Control.t
  flow LocalNetwork.Control.t -> LocalNetwork.Control.r
}
"#;
        let m = parse_model(src).unwrap();
        assert_eq!(m.thimacs.len(), 2);
        assert_eq!(m.storages[0].label, "list of local computers");
        assert_eq!(m.flows.len(), 3);
        assert_eq!(m.junctions[0].id, "LocalNetwork.Control.both");
    }

    #[test]
    fn illegal_flow_reports_flow_span() {
        let src = "model \"m\" {\n  thimac Computer {\n    transfer t1\n    process p1\n  }\n  flow Computer.t1 -> Computer.p1\n}\n";
        let diags = parse_model(src).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, "illegal-flow");
        assert_eq!(diags[0].span, Some(SourceSpan::new(6, 3, 31)));
    }

    #[test]
    fn arrive_is_rejected() {
        let diags = parse_model("model \"m\" { thimac C { arrive a } }").unwrap_err();
        assert_eq!(diags[0].code, "invalid-kind");
        assert!(diags[0].message.contains("receive"));
    }

    #[test]
    fn duplicate_and_unknown_ids_are_collected() {
        let src = "model \"m\" { thimac A { process p process p } flow A.x -> A.p }";
        let diags = parse_model(src).unwrap_err();
        let codes: Vec<_> = diags.iter().map(|d| d.code.as_str()).collect();
        assert_eq!(codes, ["duplicate-id", "unknown-id"]);
    }

    #[test]
    fn syntax_error_position() {
        let diags = parse_model("model \"m\" {\n  thimac {").unwrap_err();
        assert_eq!(diags[0].code, "syntax");
        assert_eq!(diags[0].span, Some(SourceSpan::new(2, 10, 1)));
        let diags = parse_model("").unwrap_err();
        assert_eq!(diags[0].span, Some(SourceSpan::new(1, 1, 1)));
    }

    #[test]
    fn events_chronology_and_focus() {
        let src = r#"
model "m" {
  thimac Terry {
    create exists
    process walk
  }
  flow Terry.exists -> Terry.walk
  event E1 "Terry exists" covers { Terry.exists }
  event E2 duration 1 hour tense past covers { Terry.walk }
  chronology {
    E1 -> E2
    repeat E2 -> E2
  }
  focus walked { E1, E2 }
}
"#;
        let m = parse_model(src).unwrap();
        assert_eq!(m.events.len(), 2);
        assert_eq!(m.events[1].tense, Some(Tense::Past));
        assert_eq!(m.events[1].duration.as_ref().unwrap().unit, "hour");
        assert_eq!(m.chronology.len(), 2);
        assert_eq!(m.chronology[1].kind, ChronoKind::Repeat);
        assert_eq!(m.focus[0].events.len(), 2);
    }
}
