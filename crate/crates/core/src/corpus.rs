//! The fixture corpus: one `.tm` file per worked example, each with
//! machine-checkable expectations, plus a runner that pushes every file
//! through the whole pipeline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classify::{classify_model, Bach, ClassReport, Vendler};
use crate::dsl::{export_dot, export_json, import_json, parse_model, render_model, Level};
use crate::dynamics::{build_timing, derive_chronology, event_durations, ChronologyGraph, TimingTable};
use crate::model::{ChronoKind, Model};
use crate::par::{self, Exec};
use crate::sim::{simulate, SimConfig, Trace};
use crate::validate::validate;

#[derive(Debug, Clone, Copy)]
pub enum Check {
    Validates,
    ThimacCount(usize),
    Precedes(&'static str, &'static str),
    Repeats(&'static str, &'static str),
    Vendler(&'static str, Vendler),
    Bach(&'static str, Bach),
    Feature(&'static str, &'static str, bool),
    Fires(&'static [(&'static str, bool)], &'static str, bool),
    AbsentInert(&'static str),
    Interval(&'static str, f64, f64),
    Inside(&'static str, &'static str),
    /// Each event fires exactly when the formula holds, over every assignment.
    TruthTable(&'static [&'static str], &'static [&'static str], fn(&[bool]) -> bool),
    JsonEvents(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub id: &'static str,
    pub file: &'static str,
    pub checks: &'static [Check],
}

fn access_rule(v: &[bool]) -> bool {
    let (a, b, c) = (v[0], v[1], v[2]);
    a || (!a && b) || c
}

use Check::*;

pub const FIXTURES: &[Fixture] = &[
    Fixture {
        id: "fig02",
        file: "fig02_statue.tm",
        checks: &[Validates, ThimacCount(4)],
    },
    Fixture {
        id: "fig05",
        file: "fig05_internet.tm",
        checks: &[
            Validates,
            Precedes("e1", "e2"),
            Precedes("e2", "a1"),
            Precedes("e2", "na1"),
            Precedes("na1", "b"),
            Precedes("b", "d1"),
            Precedes("a1", "d1"),
            Precedes("c1", "d1"),
            Precedes("e3", "e4"),
            Precedes("b2", "d2"),
            Fires(&[("a", true)], "a1", true),
            Fires(&[("a", true)], "d1", true),
            Fires(&[("a", false), ("b", false), ("c", false)], "d1", false),
            TruthTable(&["a", "b", "c"], &["d1", "d2"], access_rule),
        ],
    },
    Fixture {
        id: "fig08",
        file: "fig08_man_walking.tm",
        checks: &[
            Validates,
            Interval("exists", 0.0, 1.0),
            Interval("walking", 1.0, 2.0),
            Interval("rests", 2.0, 3.0),
            Interval("man", 0.0, 3.0),
            Inside("walking", "man"),
        ],
    },
    Fixture {
        id: "fig12",
        file: "fig12_false_gold.tm",
        checks: &[Validates, AbsentInert("gold"), Fires(&[], "fg", true)],
    },
    Fixture {
        id: "fig17",
        file: "fig17_run_around.tm",
        checks: &[Validates, Vendler("all", Vendler::Activity), JsonEvents(&["E1", "E2"])],
    },
    Fixture {
        id: "fig18",
        file: "fig18_run_mile.tm",
        checks: &[Validates, Vendler("all", Vendler::Accomplishment), Feature("all", "delimited", true)],
    },
    Fixture {
        id: "fig19",
        file: "fig19_terry.tm",
        checks: &[
            Validates,
            Vendler("running", Vendler::Activity),
            Vendler("building", Vendler::Accomplishment),
            Feature("building", "continued", true),
            Feature("building", "terminalized", true),
            Feature("building", "delimited", true),
            Repeats("E5", "E4"),
        ],
    },
    Fixture {
        id: "fig20",
        file: "fig20_walked.tm",
        checks: &[
            Validates,
            Vendler("all", Vendler::Activity),
            Feature("all", "durative", true),
            Feature("all", "delimited", false),
        ],
    },
    Fixture {
        id: "fig21",
        file: "fig21_driving.tm",
        checks: &[
            Validates,
            Vendler("driving", Vendler::Activity),
            Feature("driving", "reflexive", true),
            Feature("driving", "delimited", false),
            Repeats("E2", "E2"),
        ],
    },
    Fixture {
        id: "fig22",
        file: "fig22_five_houses.tm",
        checks: &[Validates, Vendler("all", Vendler::Accomplishment), Feature("all", "durative", true)],
    },
    Fixture {
        id: "fig23",
        file: "fig23_circle.tm",
        checks: &[Validates, Vendler("all", Vendler::Accomplishment)],
    },
    Fixture {
        id: "fig24",
        file: "fig24_kiss.tm",
        checks: &[Validates, Bach("all", Bach::Atomic)],
    },
    Fixture {
        id: "fig25",
        file: "fig25_stumble.tm",
        checks: &[Validates, Bach("all", Bach::Plural)],
    },
    Fixture {
        id: "fig26",
        file: "fig26_report.tm",
        checks: &[Validates],
    },
    Fixture {
        id: "fig27",
        file: "fig27_hear.tm",
        checks: &[Validates],
    },
];

pub fn fixture(id: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.id == id)
}

/// The fixture directory shipped with this crate.
pub fn default_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing fixture file {0}")]
    Missing(PathBuf),
}

/// Everything a fixture run produces, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureResult {
    pub id: String,
    pub checks: usize,
    pub failures: Vec<String>,
    pub artifacts: Vec<(String, String)>,
}

impl FixtureResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub results: Vec<FixtureResult>,
}

impl CorpusSummary {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(FixtureResult::passed)
    }

    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.passed()).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            if r.passed() {
                let _ = writeln!(out, "PASS {} ({} checks)", r.id, r.checks);
            } else {
                let _ = writeln!(out, "FAIL {}", r.id);
                for f in &r.failures {
                    let _ = writeln!(out, "  {f}");
                }
            }
        }
        let _ = writeln!(out, "{}/{} fixtures passed", self.passed(), self.results.len());
        out
    }
}

struct Pipeline {
    model: Model,
    chronology: Option<ChronologyGraph>,
    timing: Option<TimingTable>,
    report: Option<ClassReport>,
    trace: Option<Trace>,
}

fn fmt_inputs(inputs: &[(&str, bool)]) -> String {
    let parts: Vec<String> = inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("[{}]", parts.join(","))
}

fn run_check(p: &Pipeline, check: &Check) -> Result<(), String> {
    let chrono = || p.chronology.as_ref().ok_or("no chronology".to_string());
    let group = |g: &str| {
        p.report
            .as_ref()
            .and_then(|r| r.groups.get(g))
            .cloned()
            .ok_or(format!("no class report for group {g}"))
    };
    match *check {
        Validates => {
            let r = validate(&p.model);
            if r.ok {
                Ok(())
            } else {
                let errs: Vec<String> = r.findings.iter().filter(|d| d.is_error()).map(|d| d.to_string()).collect();
                Err(format!("validation failed: {}", errs.join("; ")))
            }
        }
        ThimacCount(n) => match p.model.thimacs.len() {
            k if k == n => Ok(()),
            k => Err(format!("expected {n} thimacs, found {k}")),
        },
        Precedes(a, b) | Repeats(a, b) => {
            let g = chrono()?;
            let kind = if matches!(check, Precedes(..)) { ChronoKind::Precede } else { ChronoKind::Repeat };
            match (g.index_of(a), g.index_of(b)) {
                (Some(i), Some(j)) if g.has_edge(i, j, kind) => Ok(()),
                _ => Err(format!("missing {kind:?} edge {a} -> {b}")),
            }
        }
        Vendler(g, want) => match group(g)?.vendler {
            got if got == want => Ok(()),
            got => Err(format!("group {g}: expected {want:?}, got {got:?}")),
        },
        Bach(g, want) => match group(g)?.bach {
            got if got == want => Ok(()),
            got => Err(format!("group {g}: expected Bach {want:?}, got {got:?}")),
        },
        Feature(g, name, want) => {
            let f = serde_json::to_value(group(g)?.features).expect("features serialize");
            match f.get(name).and_then(|v| v.as_bool()) {
                Some(got) if got == want => Ok(()),
                got => Err(format!("group {g}: feature {name} expected {want}, got {got:?}")),
            }
        }
        Fires(inputs, event, want) => {
            let config = SimConfig {
                inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                ..SimConfig::default()
            };
            let t = simulate(&p.model, chrono()?, &config).map_err(|e| e.to_string())?;
            match t.has_event(event) {
                got if got == want => Ok(()),
                got => Err(format!("{} {event}: expected fired={want}, got {got}", fmt_inputs(inputs))),
            }
        }
        AbsentInert(event) => {
            let t = p.trace.as_ref().ok_or("no trace")?;
            let recs: Vec<_> = t.records_for(event).collect();
            if recs.len() == 1 && recs[0].note.starts_with("absent") {
                Ok(())
            } else {
                Err(format!("absent {event}: {} records", recs.len()))
            }
        }
        Interval(event, start, end) => {
            let iv = p.timing.as_ref().and_then(|t| t.get(event)).ok_or(format!("no interval for {event}"))?;
            if iv.start == start && iv.end == end {
                Ok(())
            } else {
                Err(format!("{event}: expected [{start},{end}], got [{},{}]", iv.start, iv.end))
            }
        }
        Inside(inner, outer) => {
            let t = p.timing.as_ref().ok_or("no timing")?;
            match (t.get(inner), t.get(outer)) {
                (Some(i), Some(o)) if o.strictly_contains(&i) => Ok(()),
                _ => Err(format!("{inner} not strictly inside {outer}")),
            }
        }
        TruthTable(inputs, events, oracle) => {
            let m = crate::sim::scenario_matrix(&p.model, chrono()?, inputs, &SimConfig::default(), Exec::Sequential)
                .map_err(|e| e.to_string())?;
            let mut bad = Vec::new();
            for row in &m.rows {
                let want = oracle(&row.assignment);
                for e in events {
                    if row.fired.contains(*e) != want {
                        bad.push(format!("{e}@{:?}", row.assignment));
                    }
                }
            }
            if bad.is_empty() {
                Ok(())
            } else {
                Err(format!("truth table mismatches: {}", bad.join(", ")))
            }
        }
        JsonEvents(ids) => {
            let v: serde_json::Value = serde_json::from_str(&export_json(&p.model)).expect("export is JSON");
            let got: Vec<&str> = v["events"]
                .as_array()
                .map(|a| a.iter().filter_map(|e| e["id"].as_str()).collect())
                .unwrap_or_default();
            if got == ids {
                Ok(())
            } else {
                Err(format!("JSON events {got:?}, expected {ids:?}"))
            }
        }
    }
}

/// Parses and runs every stage on one source text. Pipeline failures are
/// recorded like failed checks.
pub fn run_fixture(id: &str, source: &str, checks: &[Check]) -> FixtureResult {
    let mut failures = Vec::new();
    let mut artifacts = Vec::new();
    let model = match parse_model(source) {
        Ok(m) => m,
        Err(diags) => {
            let msgs: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            return FixtureResult {
                id: id.to_string(),
                checks: checks.len(),
                failures: vec![format!("parse failed: {}", msgs.join("; "))],
                artifacts,
            };
        }
    };

    let canonical = render_model(&model);
    match parse_model(&canonical) {
        Ok(back) if back == model => {}
        _ => failures.push("render/parse round trip differs".to_string()),
    }
    let json = export_json(&model);
    match import_json(&json) {
        Ok(back) if back == model => {}
        _ => failures.push("JSON round trip differs".to_string()),
    }
    artifacts.push(("canonical.tm".into(), canonical));
    artifacts.push(("model.json".into(), json));
    artifacts.push(("validation.json".into(), validate(&model).to_json()));
    artifacts.push(("static.dot".into(), export_dot(&model, Level::Static).expect("static export")));

    let mut p = Pipeline {
        model,
        chronology: None,
        timing: None,
        report: None,
        trace: None,
    };
    if !p.model.events.is_empty() {
        match derive_chronology(&p.model) {
            Ok(g) => {
                artifacts.push((
                    "chronology.json".into(),
                    serde_json::to_string_pretty(&g.to_json_value()).expect("json"),
                ));
                match build_timing(&g, &event_durations(&p.model)) {
                    Ok(t) => {
                        artifacts.push(("timing.csv".into(), t.to_csv()));
                        p.timing = Some(t);
                    }
                    Err(e) => failures.push(format!("timing: {e}")),
                }
                match simulate(&p.model, &g, &SimConfig::default()) {
                    Ok(t) => {
                        artifacts.push(("trace.jsonl".into(), t.to_json_lines()));
                        p.trace = Some(t);
                    }
                    Err(e) => failures.push(format!("simulate: {e}")),
                }
                p.chronology = Some(g);
            }
            Err(e) => failures.push(format!("chronology: {e}")),
        }
        match classify_model(&p.model) {
            Ok(r) => {
                artifacts.push(("classes.json".into(), r.to_json()));
                p.report = Some(r);
            }
            Err(e) => failures.push(format!("classify: {e}")),
        }
        artifacts.push(("dynamic.dot".into(), export_dot(&p.model, Level::Dynamic).expect("has events")));
    }

    for check in checks {
        if let Err(msg) = run_check(&p, check) {
            failures.push(msg);
        }
    }
    FixtureResult {
        id: id.to_string(),
        checks: checks.len(),
        failures,
        artifacts,
    }
}

/// Runs every fixture under `dir`. A missing file aborts before anything
/// runs; an unreadable or broken file fails only its own fixture.
pub fn corpus_run(dir: &Path, exec: Exec) -> Result<CorpusSummary, CorpusError> {
    for f in FIXTURES {
        let path = dir.join(f.file);
        if !path.is_file() {
            return Err(CorpusError::Missing(path));
        }
    }
    let results = par::map(exec, FIXTURES, |f| match std::fs::read_to_string(dir.join(f.file)) {
        Ok(src) => run_fixture(f.id, &src, f.checks),
        Err(e) => FixtureResult {
            id: f.id.to_string(),
            checks: f.checks.len(),
            failures: vec![format!("read failed: {e}")],
            artifacts: Vec::new(),
        },
    });
    Ok(CorpusSummary { results })
}


#[cfg(test)]
mod shipped {
    use super::*;

    #[test]
    fn shipped_corpus_passes() {
        let s = corpus_run(&default_dir(), Exec::Sequential).unwrap();
        println!("{}", s.to_text());
        assert!(s.all_passed(), "{}", s.to_text());
    }
}
