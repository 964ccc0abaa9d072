use std::io::{IsTerminal, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use scriptmend::config::Config;
use scriptmend::dataset::{self, synthetic, ImportOptions, LoadMode, PerturbationTable, Split};
use scriptmend::edit::parse_edit;
use scriptmend::engine::{apply, diff};
use scriptmend::harness::{emit_curve, mix_stream, run_rq1, run_stream, FeedbackMode, Rq1Options, StreamOptions};
use scriptmend::memory::Memory;
use scriptmend::script::parse_steps;
use scriptmend::Script;

#[derive(Parser)]
#[command(name = "scriptmend", version, about = "Repair partially ordered scripts from natural-language feedback")]
struct Cli {
    /// TOML config file; SCRIPTMEND_<KEY> environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Steps,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    TrueFb,
    NoFb,
    DistractorFb,
}

impl From<Mode> for FeedbackMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::TrueFb => FeedbackMode::TrueFb,
            Mode::NoFb => FeedbackMode::NoFb,
            Mode::DistractorFb => FeedbackMode::DistractorFb,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a script (DOT or numbered steps) and print it in canonical form.
    Parse {
        /// File to read, `-` for stdin.
        input: PathBuf,
        /// Goal for step-list input.
        #[arg(long, default_value = "")]
        goal: String,
        #[arg(long, value_enum, default_value = "dot")]
        format: Format,
    },
    /// Apply an edit command to a script.
    Apply {
        script: PathBuf,
        /// Edit text, e.g. "remove node 'look for a butterfly'".
        edit: String,
        #[arg(long, value_enum, default_value = "dot")]
        format: Format,
    },
    /// Print the single edit turning one script into another.
    Diff { from: PathBuf, to: PathBuf },
    /// Check a dataset file and report rejected lines.
    Validate {
        dataset: PathBuf,
        /// Keep going past invalid lines.
        #[arg(long)]
        lenient: bool,
    },
    /// Convert a published release into the dataset format.
    Import {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quarantine: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Build interaction-reuse twins from source tuples.
    Perturb {
        sources: PathBuf,
        /// Substitution table (JSON); an empty table makes identity twins.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the sources, relabeled as iset_source, to OUT.
        #[arg(long)]
        with_sources: bool,
    },
    /// Score a corrector on a dataset.
    Eval {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "true-fb")]
        mode: Mode,
        /// noop, keyword, retrieval or external; the config default otherwise.
        #[arg(long)]
        corrector: Option<String>,
        /// Only tuples of this split.
        #[arg(long)]
        split: Option<Split>,
        /// Per-error-type CSV.
        #[arg(long)]
        by_type: Option<PathBuf>,
        /// Predictions as JSON lines.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Stream tuples through memory lookup, correction and memory writes.
    Simulate {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write each tuple's gold feedback and edit after scoring it.
        #[arg(long)]
        write_gold: bool,
        #[arg(long, default_value = "retrieval")]
        corrector: String,
        /// Persistent memory file; a fresh in-memory store otherwise.
        #[arg(long)]
        memory: Option<PathBuf>,
        /// Learning-curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Per-event JSON lines.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Write the bundled synthetic corpus and example perturbation table.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        table_out: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_script(path: &Path, goal: &str) -> Result<Script> {
    let text = read_text(path)?;
    let script = if text.trim_start().starts_with("digraph") {
        Script::from_dot(&text)
    } else {
        parse_steps(goal, &text)
    };
    script.with_context(|| format!("{}", path.display()))
}

fn render(script: &Script, format: Format) -> String {
    match format {
        Format::Dot => script.to_dot(),
        Format::Steps => script.to_step_list(),
        Format::Json => serde_json::json!({
            "goal": script.goal(),
            "steps": script.linearize().iter().map(|s| s.label.clone()).collect::<Vec<_>>(),
            "dot": script.to_dot(),
        })
        .to_string(),
    }
}

fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_dataset(path: &Path, split: Option<Split>) -> Result<Vec<dataset::EvalTuple>> {
    let mut tuples = dataset::load(path, LoadMode::Strict)?.tuples;
    if let Some(s) = split {
        tuples.retain(|t| t.split == s);
    }
    if tuples.is_empty() {
        bail!("{} has no tuples to evaluate", path.display());
    }
    Ok(tuples)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Parse { input, goal, format } => print(&render(&read_script(&input, &goal)?, format)),
        Command::Apply { script, edit, format } => {
            let s = read_script(&script, "")?;
            let e = parse_edit(&edit)?;
            print(&render(&apply(&s, &e)?, format));
        }
        Command::Diff { from, to } => {
            let (a, b) = (read_script(&from, "")?, read_script(&to, "")?);
            print(&diff(&a, &b)?.to_string());
        }
        Command::Validate { dataset: path, lenient } => {
            let mode = if lenient { LoadMode::Lenient } else { LoadMode::Strict };
            match dataset::load(&path, mode) {
                Ok(report) => {
                    for d in &report.rejected {
                        eprintln!("line {}: {}", d.line, d.message);
                    }
                    let overlap = dataset::overlapping_ids(&report.tuples);
                    for id in &overlap {
                        eprintln!("id `{id}` appears in more than one split");
                    }
                    print(&format!("{} valid, {} rejected", report.tuples.len(), report.rejected.len()));
                    if !report.rejected.is_empty() || !overlap.is_empty() {
                        return Ok(ExitCode::from(1));
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(1));
                }
            }
        }
        Command::Import {
            input,
            out,
            quarantine,
            split,
        } => {
            let report = dataset::import_published(
                &input,
                &ImportOptions {
                    default_split: split,
                    quarantine_path: quarantine,
                },
            )?;
            dataset::save(&out, &report.tuples)?;
            for id in &report.flagged_noop {
                eprintln!("`{id}`: scripts already equal, gold edit is noop");
            }
            print(&format!(
                "{} imported, {} quarantined, {} flagged noop",
                report.tuples.len(),
                report.quarantined.len(),
                report.flagged_noop.len()
            ));
        }
        Command::Perturb {
            sources,
            table,
            seed,
            out,
            with_sources,
        } => {
            let mut src = dataset::load(&sources, LoadMode::Strict)?.tuples;
            let table = match table {
                Some(p) => PerturbationTable::load(p)?,
                None => PerturbationTable::default(),
            };
            let report = dataset::build_iset(&src, &table, seed)?;
            for (id, why) in &report.skipped {
                eprintln!("`{id}` skipped: {why}");
            }
            let mut all = Vec::new();
            if with_sources {
                for t in &mut src {
                    t.split = Split::IsetSource;
                }
                all.extend(src);
            }
            all.extend(report.tuples.iter().cloned());
            dataset::save(&out, &all)?;
            print(&format!(
                "{} twins from {} sources ({} perturbed, {} skipped)",
                report.tuples.len(),
                report.candidates,
                report.perturbed,
                report.skipped.len()
            ));
        }
        Command::Eval {
            dataset: path,
            mode,
            corrector,
            split,
            by_type,
            predictions,
        } => {
            let tuples = load_dataset(&path, split)?;
            let corrector = config.corrector(corrector.as_deref().unwrap_or(&config.default_corrector))?;
            let options = Rq1Options {
                distractor_k: config.distractor_k,
                embedder: config.embedder(),
            };
            let outcome = run_rq1(&tuples, corrector.as_ref(), mode.into(), &options)?;
            if outcome.infra_failures > 0 {
                eprintln!("{} corrector failures scored as noop", outcome.infra_failures);
            }
            if let Some(p) = by_type {
                write_file(&p, &outcome.report.by_error_type_csv())?;
            }
            if let Some(p) = predictions {
                let lines: String = outcome
                    .predictions
                    .iter()
                    .map(|p| serde_json::to_string(p).unwrap() + "\n")
                    .collect();
                write_file(&p, &lines)?;
            }
            print(&outcome.report.to_json());
        }
        Command::Simulate {
            dataset: path,
            seed,
            write_gold,
            corrector,
            memory,
            curve,
            events,
        } => {
            let tuples = load_dataset(&path, None)?;
            let corrector = config.corrector(&corrector)?;
            let memory = match memory {
                Some(p) => Memory::open(p, config.embedder())?,
                None => Memory::in_memory(config.embedder()),
            };
            let stream = mix_stream(&tuples, seed);
            let options = StreamOptions {
                write_gold,
                threshold: config.threshold,
            };
            let outcome = run_stream(&stream, corrector.as_ref(), &memory, options)?;
            if let Some(p) = curve {
                write_file(&p, &emit_curve(&outcome.events))?;
            }
            if let Some(p) = events {
                let lines: String = outcome
                    .events
                    .iter()
                    .map(|e| serde_json::to_string(e).unwrap() + "\n")
                    .collect();
                write_file(&p, &lines)?;
            }
            print(&outcome.report.to_json());
        }
        Command::Serve { listen } => {
            tracing_subscriber::fmt()
                .with_writer(std::io::stderr)
                .with_ansi(std::io::stderr().is_terminal())
                .init();
            let mut config = config;
            if let Some(l) = listen {
                config.listen = l;
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(scriptmend::service::serve(config))?;
        }
        Command::Synth { out, table_out } => {
            write_file(&out, synthetic::BUNDLED_JSONL)?;
            if let Some(p) = table_out {
                write_file(&p, synthetic::EXAMPLE_PERTURBATIONS)?;
            }
            print(&format!("{} tuples written to {}", synthetic::corpus().len(), out.display()));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
