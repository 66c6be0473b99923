//! `ipi` — trace pipelines for interrupt procedure instance analysis.
//!
//! Subcommands: `gen` (simulate or replay a scripted scenario), `identify`
//! (online labeling, new or legacy algorithm), `oracle` (offline labeling),
//! `verify` (identifier = oracle = ground truth), `profile` (per-instance
//! metrics), `bench` (space/time overhead comparison).
//!
//! Exit codes: 0 success, 2 config/usage error, 3 malformed trace,
//! 4 verification failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ipi_core::analyzer::{self, Algo};
use ipi_core::event::{Event, Label, LabeledEvent, Pos};
use ipi_core::format::{parse_records, write_trace, ParsedRecord};
use ipi_core::oracle::{diff_labels, label_offline, LabelDiff};
use ipi_core::simulator::{simulate, SimConfig};
use ipi_core::{identifier, legacy, script};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRACE: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ipi",
    version,
    about = "Generate, label, verify, profile, and benchmark interrupt-driven execution traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truth-labeled trace from a config or a script.
    Gen {
        /// Simulator config (JSON).
        #[arg(long, conflicts_with = "script")]
        config: Option<PathBuf>,
        /// Built-in scenario name (fig1a, fig1b) or a script file (JSON).
        #[arg(long)]
        script: Option<String>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output trace file.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Label a trace online and write the labeled trace.
    Identify {
        /// Input trace file.
        input: PathBuf,
        /// Identification algorithm.
        #[arg(long, default_value = "new")]
        algo: Algo,
        /// Output labeled trace file.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Label a trace offline with the whole-trace oracle.
    Oracle {
        /// Input trace file (balanced and drained).
        input: PathBuf,
        /// Output labeled trace file.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check identifier, oracle, and stored labels against ground truth.
    Verify {
        /// Input trace file with truth labels.
        input: PathBuf,
        /// Identification algorithm to check.
        #[arg(long, default_value = "new")]
        algo: Algo,
    },
    /// Compute per-instance profiles from a labeled trace.
    Profile {
        /// Input labeled trace file.
        input: PathBuf,
        /// Output report (.json for JSON, anything else for CSV).
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare identifier overheads across trace lengths.
    Bench {
        /// Simulator config (JSON).
        #[arg(short, long)]
        config: PathBuf,
        /// Horizons to bench, comma separated, ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<u64>,
        /// Timing repetitions per measurement.
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Output report (.json for JSON, anything else for CSV).
        #[arg(short, long)]
        out: PathBuf,
    },
}

struct CliError {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> CliError {
    CliError {
        code,
        message: message.into(),
    }
}

fn read_records(path: &Path) -> Result<Vec<ParsedRecord>, CliError> {
    let file =
        File::open(path).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    parse_records(BufReader::new(file))
        .map_err(|e| fail(EXIT_TRACE, format!("{}: {e}", path.display())))
}

fn write_labeled(path: &Path, events: &[LabeledEvent]) -> Result<(), CliError> {
    let file =
        File::create(path).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    write_trace(&mut writer, events, true)
        .and_then(|()| writer.flush())
        .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let mut config: SimConfig = serde_json::from_str(&text)
        .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run_algo(algo: Algo, events: &[Event]) -> Result<Vec<Label>, CliError> {
    let result = match algo {
        Algo::New => identifier::run(events),
        Algo::Legacy => legacy::legacy_run(events),
    };
    result.map_err(|e| fail(EXIT_TRACE, e.to_string()))
}

fn instance_count(labels: &[Label]) -> usize {
    labels.iter().filter(|l| l.pos == Pos::Start).count()
}

/// Reports are JSON when the output path ends in `.json`, CSV otherwise.
fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|ext| ext == "json")
}

fn print_diffs(name: &str, diffs: &[LabelDiff], a_col: &str, b_col: &str) {
    eprintln!("{name}: {} difference(s)", diffs.len());
    for diff in diffs.iter().take(20) {
        eprintln!("  seq={} {a_col}={} {b_col}={}", diff.seq, diff.a, diff.b);
    }
    if diffs.len() > 20 {
        eprintln!("  ... {} more", diffs.len() - 20);
    }
}

fn cmd_gen(
    config: Option<PathBuf>,
    script_arg: Option<String>,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<(), CliError> {
    let labeled = match (config, script_arg) {
        (Some(path), None) => {
            let config = load_config(&path, seed)?;
            simulate(&config).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?
        }
        (None, Some(name)) => {
            let actions = match script::builtin(&name) {
                Some(actions) => actions,
                None if Path::new(&name).exists() => {
                    let text = std::fs::read_to_string(&name)
                        .map_err(|e| fail(EXIT_CONFIG, format!("{name}: {e}")))?;
                    serde_json::from_str(&text)
                        .map_err(|e| fail(EXIT_CONFIG, format!("{name}: {e}")))?
                }
                None => {
                    return Err(fail(
                        EXIT_CONFIG,
                        format!(
                            "unknown script `{name}` (built-ins: {})",
                            script::BUILTIN_NAMES.join(", ")
                        ),
                    ))
                }
            };
            script::script(&actions).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?
        }
        _ => {
            return Err(fail(
                EXIT_CONFIG,
                "exactly one of --config/--script is required",
            ))
        }
    };
    write_labeled(&out, &labeled)?;
    println!("{} events", labeled.len());
    Ok(())
}

fn cmd_identify(input: PathBuf, algo: Algo, out: PathBuf) -> Result<(), CliError> {
    let records = read_records(&input)?;
    let events: Vec<Event> = records.iter().map(|r| r.event.clone()).collect();
    let (labels, metrics) = match algo {
        Algo::New => identifier::run_with_metrics(&events),
        Algo::Legacy => legacy::legacy_run_with_metrics(&events),
    }
    .map_err(|e| fail(EXIT_TRACE, e.to_string()))?;

    let labeled: Vec<LabeledEvent> = records
        .into_iter()
        .zip(labels.iter())
        .map(|(record, &label)| LabeledEvent {
            event: record.event,
            label,
            truth: record.truth,
        })
        .collect();
    write_labeled(&out, &labeled)?;
    println!("{} instances", instance_count(&labels));
    println!(
        "{}",
        serde_json::to_string(&metrics).expect("metrics serialize")
    );
    Ok(())
}

fn cmd_oracle(input: PathBuf, out: PathBuf) -> Result<(), CliError> {
    let records = read_records(&input)?;
    let events: Vec<Event> = records.iter().map(|r| r.event.clone()).collect();
    let labels = label_offline(&events).map_err(|e| fail(EXIT_TRACE, e.to_string()))?;
    let labeled: Vec<LabeledEvent> = records
        .into_iter()
        .zip(labels.iter())
        .map(|(record, &label)| LabeledEvent {
            event: record.event,
            label,
            truth: record.truth,
        })
        .collect();
    write_labeled(&out, &labeled)?;
    println!("{} instances", instance_count(&labels));
    Ok(())
}

fn cmd_verify(input: PathBuf, algo: Algo) -> Result<(), CliError> {
    let records = read_records(&input)?;
    let events: Vec<Event> = records.iter().map(|r| r.event.clone()).collect();
    let truth: Vec<Label> = records
        .iter()
        .map(|r| {
            r.truth.ok_or_else(|| {
                fail(
                    EXIT_TRACE,
                    format!("event {}: no truth label to verify against", r.event.seq()),
                )
            })
        })
        .collect::<Result<_, _>>()?;

    let identified = run_algo(algo, &events)?;
    let offline = label_offline(&events).map_err(|e| fail(EXIT_TRACE, e.to_string()))?;

    let mut ok = true;
    let algo_name = algo.to_string();
    let id_diffs = diff_labels(&identified, &truth).expect("equal lengths");
    if !id_diffs.is_empty() {
        print_diffs(
            &format!("identifier ({algo_name}) vs truth"),
            &id_diffs,
            &algo_name,
            "truth",
        );
        ok = false;
    }
    let oracle_diffs = diff_labels(&offline, &truth).expect("equal lengths");
    if !oracle_diffs.is_empty() {
        print_diffs("oracle vs truth", &oracle_diffs, "oracle", "truth");
        ok = false;
    }
    // Stored labels, when the file carries them on every line, must agree
    // as well; a corrupted label column fails verification.
    if records.iter().all(|r| r.label.is_some()) && !records.is_empty() {
        let stored: Vec<Label> = records.iter().map(|r| r.label.unwrap()).collect();
        let stored_diffs = diff_labels(&stored, &truth).expect("equal lengths");
        if !stored_diffs.is_empty() {
            print_diffs("stored labels vs truth", &stored_diffs, "stored", "truth");
            ok = false;
        }
    }

    if ok {
        println!(
            "ok: {} events, {} instances, identifier = oracle = truth",
            events.len(),
            instance_count(&truth)
        );
        Ok(())
    } else {
        Err(fail(EXIT_VERIFY, "label sequences disagree"))
    }
}

fn cmd_profile(input: PathBuf, out: PathBuf) -> Result<(), CliError> {
    let records = read_records(&input)?;
    let labeled: Vec<LabeledEvent> = records
        .into_iter()
        .map(|r| {
            let label = r.label.ok_or_else(|| {
                fail(
                    EXIT_TRACE,
                    format!(
                        "event {}: missing labels; run identify first",
                        r.event.seq()
                    ),
                )
            })?;
            Ok(LabeledEvent {
                event: r.event,
                label,
                truth: r.truth,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let profiles = analyzer::profile(&labeled);
    let text = if is_json(&out) {
        serde_json::to_string_pretty(&profiles).expect("profiles serialize")
    } else {
        analyzer::profiles_to_csv(&profiles)
    };
    write_text(&out, &text)?;
    println!("{} instances profiled", profiles.len());
    Ok(())
}

fn cmd_bench(
    config: PathBuf,
    lengths: Vec<u64>,
    reps: usize,
    out: PathBuf,
) -> Result<(), CliError> {
    let config = load_config(&config, None)?;
    let report = analyzer::bench(&config, &lengths, reps).map_err(|e| {
        let code = match e {
            analyzer::BenchError::Trace(_) => EXIT_TRACE,
            _ => EXIT_CONFIG,
        };
        fail(code, e.to_string())
    })?;
    let csv = report.to_csv();
    let text = if is_json(&out) {
        serde_json::to_string_pretty(&report).expect("report serializes")
    } else {
        csv.clone()
    };
    write_text(&out, &text)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            config,
            script,
            seed,
            out,
        } => cmd_gen(config, script, seed, out),
        Command::Identify { input, algo, out } => cmd_identify(input, algo, out),
        Command::Oracle { input, out } => cmd_oracle(input, out),
        Command::Verify { input, algo } => cmd_verify(input, algo),
        Command::Profile { input, out } => cmd_profile(input, out),
        Command::Bench {
            config,
            lengths,
            reps,
            out,
        } => cmd_bench(config, lengths, reps, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
