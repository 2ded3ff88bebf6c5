//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};

use proptest::test_runner::{Config, TestRunner};
use thimac::classify::{classify_model, Bach, Vendler};
use thimac::corpus::{corpus_run, FIXTURES};
use thimac::dsl::{export_json, import_json, parse_model, render_model};
use thimac::dynamics::{derive_chronology, timing_for};
use thimac::model::{ActionKind, AdjacencyRow, ChronoKind, EndpointRole, EventIdx, JunctionMode, NodeRef, Polarity};
use thimac::par::Exec;
use thimac::sim::{scenario_matrix, simulate, Outcome, SimConfig};
use thimac::validate::validate;
use thimac::Model;

/// Interval bounds are compared with this absolute tolerance.
const TIME_TOL: f64 = 1e-9;
/// Random models in the round-trip criterion.
const RANDOM_MODELS: u32 = 100;
/// Illegal adjacency pairs that must be generated and rejected, at least.
const MIN_ILLEGAL: usize = 20;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_truth_table() -> Verdict {
    let m = common::load("fig05_internet.tm");
    let graph = derive_chronology(&m).map_err(|e| e.to_string())?;
    let matrix = scenario_matrix(&m, &graph, &["a", "b", "c"], &SimConfig::default(), Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let mut checks = 0;
    let mut mismatches = Vec::new();
    for stream in ["d1", "d2"] {
        let fired = matrix.column(stream);
        for (row, got) in fired.iter().enumerate() {
            // Rows count in binary with `a` as the high bit.
            let (a, b, c) = (row & 4 != 0, row & 2 != 0, row & 1 != 0);
            let expected = match (a, b) {
                (true, _) => true,
                (false, true) => true,
                (false, false) => c,
            };
            checks += 1;
            if *got != expected {
                mismatches.push(format!("{stream} a={a} b={b} c={c}: got {got}"));
            }
        }
    }
    ensure(checks == 16 && mismatches.is_empty(), || format!("{checks} checks, mismatches {mismatches:?}"))?;
    Ok(format!("{checks} checks, 0 mismatches"))
}

fn criterion_classifier() -> Verdict {
    let group = |file: &str, name: &str| {
        let report = classify_model(&common::load(file)).map_err(|e| e.to_string())?;
        report.groups.get(name).cloned().ok_or_else(|| format!("{file}: no group {name}"))
    };
    let mut agree = 0;
    let mut rows = Vec::new();
    let running = group("fig19_terry.tm", "running")?;
    rows.push(("running", running.vendler == Vendler::Activity));
    let building = group("fig19_terry.tm", "building")?;
    rows.push(("building", building.vendler == Vendler::Accomplishment && building.rosen == "performance"));
    let walked = group("fig20_walked.tm", "all")?;
    rows.push(("walked", walked.vendler == Vendler::Activity && walked.features.durative));
    let houses = group("fig22_five_houses.tm", "all")?;
    rows.push(("five houses", houses.vendler == Vendler::Accomplishment));
    rows.push(("kiss", group("fig24_kiss.tm", "all")?.bach == Bach::Atomic));
    rows.push(("stumble", group("fig25_stumble.tm", "all")?.bach == Bach::Plural));
    let failed: Vec<&str> = rows.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    agree += rows.len() - failed.len();
    ensure(failed.is_empty(), || format!("{agree}/6, disagree on {failed:?}"))?;
    Ok(format!("{agree}/6 labels"))
}

fn criterion_timing() -> Verdict {
    let (_, table) = timing_for(&common::load("fig08_man_walking.tm")).map_err(|e| e.to_string())?;
    // Unit durations along born -> walk -> rest; the man spans all three.
    let expected = [("exists", 0.0, 1.0), ("walking", 1.0, 2.0), ("rests", 2.0, 3.0), ("man", 0.0, 3.0)];
    for (id, start, end) in expected {
        let iv = table.get(id).ok_or_else(|| format!("no interval for {id}"))?;
        ensure((iv.start - start).abs() <= TIME_TOL && (iv.end - end).abs() <= TIME_TOL, || {
            format!("{id}: [{}, {}] expected [{start}, {end}]", iv.start, iv.end)
        })?;
    }
    let (w, m) = (table.get("walking").unwrap(), table.get("man").unwrap());
    ensure(m.start < w.start && w.end < m.end, || "walking not strictly inside man".into())?;
    Ok("4 exact intervals, walking strictly inside man".into())
}

fn criterion_absent() -> Verdict {
    let mut checked = 0;
    for file in ["fig12_false_gold.tm", "extra/john_not_in_room.tm"] {
        let m = common::load(file);
        let graph = derive_chronology(&m).map_err(|e| e.to_string())?;
        let trace = simulate(&m, &graph, &SimConfig::default()).map_err(|e| e.to_string())?;
        for (i, e) in m.events.iter().enumerate() {
            if e.polarity != Polarity::Absent {
                continue;
            }
            let records = trace.records_for(&e.id).count();
            ensure(records == 1, || format!("{file}/{}: {records} records", e.id))?;
            let cover: BTreeSet<&str> = m.cover_nodes(EventIdx(i)).into_iter().map(|n| m.node_id(n)).collect();
            let fired = trace.firings.iter().filter(|f| cover.contains(f.as_str())).count();
            ensure(fired == 0, || format!("{file}/{}: {fired} firings inside", e.id))?;
            checked += 1;
        }
    }
    let report = validate(&common::load("extra/round_square.tm"));
    ensure(!report.ok && report.has("ABSENT_REALIZABLE"), || "round square accepted".into())?;
    Ok(format!("{checked} absent events inert, round square rejected"))
}

fn criterion_round_trip() -> Verdict {
    let mut fixtures = 0;
    for f in FIXTURES {
        let m = common::load(f.file);
        let text = render_model(&m);
        let back = parse_model(&text).map_err(|d| format!("{}: {d:?}", f.id))?;
        ensure(back == m, || format!("{}: text round trip differs", f.id))?;
        ensure(render_model(&back) == text, || format!("{}: render not idempotent", f.id))?;
        ensure(import_json(&export_json(&m)).ok().as_ref() == Some(&m), || format!("{}: JSON differs", f.id))?;
        fixtures += 1;
    }
    let mut runner = TestRunner::new(Config {
        cases: RANDOM_MODELS,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&common::arb_model(), |m| {
            let text = render_model(&m);
            let back = parse_model(&text).expect("rendered text parses");
            assert_eq!(back, m);
            assert_eq!(render_model(&back), text);
            assert_eq!(import_json(&export_json(&m)).expect("export imports"), m);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{fixtures} fixtures and {RANDOM_MODELS} random models"))
}

fn pair_model(from: EndpointRole, to: EndpointRole, same_owner: bool) -> (Model, NodeRef, NodeRef) {
    let mut m = Model::new("pair").unwrap();
    let a = m.add_thimac("A", None, true).unwrap();
    let b = if same_owner { a } else { m.add_thimac("B", None, true).unwrap() };
    let node = |m: &mut Model, owner, name: &str, role| match role {
        EndpointRole::Action(k) => m.add_action(owner, k, name, None).unwrap(),
        EndpointRole::Junction => m.junction(owner, name, JunctionMode::Or).unwrap(),
    };
    let x = node(&mut m, a, "x", from);
    let y = node(&mut m, b, "y", to);
    (m, x, y)
}

fn criterion_structure() -> Verdict {
    use ActionKind::*;
    // The legal table, written out independently of the library's.
    let same: [(ActionKind, ActionKind); 7] = [
        (Create, Process),
        (Create, Release),
        (Receive, Process),
        (Receive, Release),
        (Process, Release),
        (Release, Transfer),
        (Transfer, Receive),
    ];
    let legal = |f: EndpointRole, t: EndpointRole, so: bool| match (f, t) {
        (EndpointRole::Action(a), EndpointRole::Action(b)) => {
            if so {
                same.contains(&(a, b))
            } else {
                a == Transfer && b == Transfer
            }
        }
        (_, EndpointRole::Junction) => so,
        (EndpointRole::Junction, EndpointRole::Action(b)) => so && b != Create,
    };
    let mut roles: Vec<EndpointRole> = ActionKind::ALL.iter().map(|k| EndpointRole::Action(*k)).collect();
    roles.push(EndpointRole::Junction);
    let (mut accepted, mut rejected) = (0, 0);
    for &f in &roles {
        for &t in &roles {
            for so in [true, false] {
                let (mut m, x, y) = pair_model(f, t, so);
                let ok = m.connect_flow(x, y).is_ok();
                ensure(ok == legal(f, t, so), || format!("{f} -> {t} same_owner={so}: accepted={ok}"))?;
                if ok {
                    accepted += 1;
                } else {
                    rejected += 1;
                }
            }
        }
    }
    ensure(accepted == AdjacencyRow::legal_rows().len(), || "legal row count differs".into())?;
    ensure(rejected >= MIN_ILLEGAL, || format!("only {rejected} illegal pairs"))?;

    let mut traces = 0;
    for f in FIXTURES {
        let m = common::load(f.file);
        let graph = derive_chronology(&m).map_err(|e| format!("{}: {e}", f.id))?;
        ensure(graph.topo_order().is_some(), || format!("{}: Precede cycle", f.id))?;
        let sets: Vec<BTreeSet<NodeRef>> =
            (0..m.events.len()).map(|e| m.cover_nodes(EventIdx(e)).into_iter().collect()).collect();
        let edges = m.flows.iter().map(|e| (e.from, e.to)).chain(m.triggers.iter().map(|e| (e.from, e.to)));
        let edges: Vec<(NodeRef, NodeRef)> = edges.collect();
        let witnessed = |i: usize, j: usize| {
            edges.iter().any(|(x, y)| {
                sets[i].contains(x) && !sets[j].contains(x) && sets[j].contains(y) && !sets[i].contains(y)
            })
        };
        let declared = |i: usize, j: usize| m.chronology.iter().any(|c| c.from.0 == i && c.to.0 == j);
        for e in &graph.edges {
            if e.from != e.to && e.kind == ChronoKind::Precede {
                ensure(witnessed(e.from, e.to) || declared(e.from, e.to), || {
                    format!("{}: {} -> {} unsupported", f.id, graph.events[e.from], graph.events[e.to])
                })?;
            }
        }
        for i in 0..sets.len() {
            for j in 0..sets.len() {
                if i != j && witnessed(i, j) {
                    ensure(graph.edges.iter().any(|e| e.from == i && e.to == j), || {
                        format!("{}: witnessed {} -> {} missing", f.id, graph.events[i], graph.events[j])
                    })?;
                }
            }
        }
        for k in [0u32, 1, 3] {
            let config = SimConfig { max_repeats: k, ..SimConfig::default() };
            let t = simulate(&m, &graph, &config).map_err(|e| e.to_string())?;
            if t.outcome != Outcome::Deadlock {
                ensure(t.ledger.sends == t.ledger.receipts, || {
                    format!("{} k={k}: {} sends, {} receipts", f.id, t.ledger.sends, t.ledger.receipts)
                })?;
            }
            for e in graph.edges.iter().filter(|e| e.kind == ChronoKind::Precede) {
                if let (Some(a), Some(b)) = (t.first_step(&graph.events[e.from]), t.first_step(&graph.events[e.to])) {
                    ensure(a < b, || format!("{} k={k}: {} after {}", f.id, graph.events[e.from], graph.events[e.to]))?;
                }
            }
            traces += 1;
        }
    }
    Ok(format!("{accepted} legal rows, {rejected} illegal rejected, {traces} traces conserve flow"))
}

fn criterion_determinism() -> Verdict {
    let dir = common::fixture_dir();
    let first = corpus_run(&dir, Exec::Sequential).map_err(|e| format!("{e:?}"))?;
    let again = corpus_run(&dir, Exec::Sequential).map_err(|e| format!("{e:?}"))?;
    let parallel = corpus_run(&dir, Exec::Parallel).map_err(|e| format!("{e:?}"))?;
    let mut artifacts = 0;
    for other in [&again, &parallel] {
        ensure(first.results.len() == other.results.len(), || "fixture counts differ".into())?;
        for (a, b) in first.results.iter().zip(&other.results) {
            ensure(a.id == b.id && a.artifacts == b.artifacts, || format!("{}: artifacts differ", a.id))?;
        }
        ensure(first.to_text() == other.to_text(), || "summaries differ".into())?;
    }
    for r in &first.results {
        artifacts += r.artifacts.len();
    }
    Ok(format!("{artifacts} artifacts identical across 3 runs"))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("truth table", criterion_truth_table),
        ("classifier agreement", criterion_classifier),
        ("timing containment", criterion_timing),
        ("absent inertness", criterion_absent),
        ("round trip", criterion_round_trip),
        ("structural laws", criterion_structure),
        ("determinism", criterion_determinism),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into()))
        });
        match verdict {
            Ok(detail) => println!("PASS {} {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", n + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
