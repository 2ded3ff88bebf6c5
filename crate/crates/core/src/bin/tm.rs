use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use thimac::classify::classify_model;
use thimac::corpus::{corpus_run, default_dir, CorpusError, FIXTURES};
use thimac::dsl::{export_dot, export_json, parse_model, render_model, Level};
use thimac::dynamics::{derive_chronology, timing_for};
use thimac::par::Exec;
use thimac::sim::{scenario_matrix, simulate, SimConfig};
use thimac::validate::validate;
use thimac::Model;

#[derive(Parser)]
#[command(name = "tm", version, about = "Thinging-machine model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form of a model
    Parse { file: PathBuf },
    /// Run static and dynamic validation
    Validate {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the token-flow simulation and print the trace as JSON lines
    Simulate {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        max_repeats: u32,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        /// Scenario input, e.g. `a=true`
        #[arg(long = "input", value_parser = parse_input)]
        inputs: Vec<(String, bool)>,
        /// Write the trace here instead of standard output
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Comma-separated inputs; prints the full scenario matrix as CSV
        #[arg(long, value_delimiter = ',')]
        matrix: Option<Vec<String>>,
    },
    /// Classify each focus group
    Classify {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Export as DOT, JSON, or (dynamic level) a timing CSV
    Export {
        file: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long, value_enum, default_value_t = LevelArg::Static)]
        level: LevelArg,
    },
    /// The fixture corpus
    Corpus {
        #[command(subcommand)]
        action: CorpusCmd,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    List,
    Run {
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
        /// Also write every fixture's artifacts under this directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Static,
    Dynamic,
}

fn parse_input(s: &str) -> Result<(String, bool), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v = match v {
        "true" | "1" => true,
        "false" | "0" => false,
        other => return Err(format!("`{other}` is not true/false")),
    };
    Ok((k.to_string(), v))
}

enum Fail {
    Findings,
    Usage(String),
}

type Outcome = Result<(), Fail>;

fn load(file: &Path) -> Result<Model, Fail> {
    let src = std::fs::read_to_string(file).map_err(|e| Fail::Usage(format!("{}: {e}", file.display())))?;
    parse_model(&src).map_err(|diags| {
        for d in diags {
            eprintln!("{}:{d}", file.display());
        }
        Fail::Findings
    })
}

fn to_findings<E: std::fmt::Display>(e: E) -> Fail {
    eprintln!("error: {e}");
    Fail::Findings
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Parse { file } => {
            print!("{}", render_model(&load(&file)?));
            Ok(())
        }
        Command::Validate { file, json } => {
            let report = validate(&load(&file)?);
            if json {
                println!("{}", report.to_json());
            } else {
                for d in &report.findings {
                    eprintln!("{d}");
                }
                println!("{}", if report.ok { "ok" } else { "invalid" });
            }
            if report.ok {
                Ok(())
            } else {
                Err(Fail::Findings)
            }
        }
        Command::Simulate {
            file,
            max_repeats,
            max_steps,
            inputs,
            trace,
            matrix,
        } => {
            let model = load(&file)?;
            let chronology = derive_chronology(&model).map_err(to_findings)?;
            let config = SimConfig {
                max_repeats,
                inputs: inputs.into_iter().collect(),
                max_steps,
            };
            let (text, ok) = match matrix {
                Some(names) => {
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    let m = scenario_matrix(&model, &chronology, &refs, &config, Exec::Parallel).map_err(to_findings)?;
                    (m.to_csv(), true)
                }
                None => {
                    let t = simulate(&model, &chronology, &config).map_err(to_findings)?;
                    (t.to_json_lines(), t.outcome == thimac::sim::Outcome::Completed)
                }
            };
            match trace {
                Some(path) => std::fs::write(&path, text).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            if ok {
                Ok(())
            } else {
                Err(Fail::Findings)
            }
        }
        Command::Classify { file, json } => {
            let report = classify_model(&load(&file)?).map_err(to_findings)?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
            Ok(())
        }
        Command::Export { file, format, level } => {
            let model = load(&file)?;
            let text = match (format, level) {
                (Format::Dot, LevelArg::Static) => export_dot(&model, Level::Static).map_err(to_findings)?,
                (Format::Dot, LevelArg::Dynamic) => export_dot(&model, Level::Dynamic).map_err(to_findings)?,
                (Format::Json, LevelArg::Static) => export_json(&model) + "\n",
                (Format::Json, LevelArg::Dynamic) => {
                    let graph = derive_chronology(&model).map_err(to_findings)?;
                    let mut v: serde_json::Value = serde_json::from_str(&export_json(&model)).expect("export is JSON");
                    v["derived_chronology"] = graph.to_json_value();
                    serde_json::to_string_pretty(&v).expect("json") + "\n"
                }
                (Format::Csv, LevelArg::Dynamic) => timing_for(&model).map_err(to_findings)?.1.to_csv(),
                (Format::Csv, LevelArg::Static) => {
                    return Err(Fail::Usage("--format csv needs --level dynamic".into()));
                }
            };
            print!("{text}");
            Ok(())
        }
        Command::Corpus { action: CorpusCmd::List } => {
            for f in FIXTURES {
                println!("{}\t{}", f.id, f.file);
            }
            Ok(())
        }
        Command::Corpus {
            action: CorpusCmd::Run { dir, parallel, out },
        } => {
            let dir = dir.unwrap_or_else(|| {
                let local = PathBuf::from("fixtures");
                if local.join(FIXTURES[0].file).is_file() {
                    local
                } else {
                    default_dir()
                }
            });
            let exec = if parallel { Exec::Parallel } else { Exec::Sequential };
            let summary = corpus_run(&dir, exec).map_err(|CorpusError::Missing(p)| Fail::Usage(format!("missing fixture file {}", p.display())))?;
            if let Some(out) = out {
                for r in &summary.results {
                    let d = out.join(&r.id);
                    std::fs::create_dir_all(&d).map_err(|e| Fail::Usage(format!("{}: {e}", d.display())))?;
                    for (name, text) in &r.artifacts {
                        std::fs::write(d.join(name), text).map_err(|e| Fail::Usage(format!("{name}: {e}")))?;
                    }
                }
            }
            print!("{}", summary.to_text());
            if summary.all_passed() {
                Ok(())
            } else {
                Err(Fail::Findings)
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Findings) => ExitCode::from(1),
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
