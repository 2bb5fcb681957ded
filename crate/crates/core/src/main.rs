//! Command-line driver exposing every compilation stage.
//!
//! Exit codes: 0 success, 1 failed checks or I/O trouble, 2 syntax errors,
//! 3 signature errors, 4 rule/entry compilation errors, 5 query errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lexcov::compile::{compile_text, CompileError, CompiledLexicon, RunConfig};
use lexcov::grammar;
use lexcov::interaction::Automaton;
use lexcov::runtime::Solution;

#[derive(Parser)]
#[command(name = "lexcov", version, about = "Lexical rule compiler and runtime")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Dot,
    Structured,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline and write the compiled lexicon artifact.
    Compile {
        grammar: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        unfurl: Option<usize>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Print the follow relation.
    Follow { grammar: PathBuf },
    /// Emit an interaction automaton (reduced by default).
    Fsa {
        grammar: PathBuf,
        /// The automaton before propagation-based reduction.
        #[arg(long, conflicts_with_all = ["reduced", "entry"])]
        global: bool,
        /// The reduced automaton (default).
        #[arg(long, conflicts_with = "entry")]
        reduced: bool,
        /// The automaton pruned for one entry.
        #[arg(long)]
        entry: Option<String>,
        #[arg(long)]
        dot: bool,
        #[arg(long)]
        unfurl: Option<usize>,
    },
    /// Emit the pruned automaton for one entry.
    Prune {
        entry: String,
        grammar: PathBuf,
        #[arg(long)]
        dot: bool,
        #[arg(long)]
        unfurl: Option<usize>,
    },
    /// Print rule, transfer and interaction clauses.
    Clauses {
        grammar: PathBuf,
        /// After partial unfolding of the transfer predicates.
        #[arg(long)]
        unfolded: bool,
    },
    /// Print an extended entry with its lifted output description.
    Lift { entry: String, grammar: PathBuf },
    /// Enumerate the derivable entries of a base entry.
    Derive {
        entry: String,
        grammar: PathBuf,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Look a query description up across the lexicon, delaying rule
    /// application through the lifted entries.
    Lookup {
        grammar: PathBuf,
        /// The query as AVM text, e.g. '(B: +, C: (W: -))'.
        #[arg(long)]
        query: String,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Run the acceptance and property suites on the bundled grammar.
    Check,
}

fn exit_code_for(e: &CompileError) -> u8 {
    match e {
        CompileError::Parse(_) => 2,
        CompileError::Signature(_) => 3,
        CompileError::Lower { .. } | CompileError::Rule(_) | CompileError::Duplicate { .. } => 4,
    }
}

/// Reads pipeline knobs from the file named by `LEXCOV_CONFIG`, if any.
fn config_from_env() -> Result<RunConfig, String> {
    let mut config = RunConfig::default();
    let Some(path) = std::env::var_os("LEXCOV_CONFIG") else {
        return Ok(config);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", lineno + 1))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| format!("config line {}: not a number", lineno + 1))?;
        match key.trim() {
            "unfurl_depth" => config.unfurl_depth = value,
            "propagation_cap" => config.propagation_cap = value,
            "lift_cap" => config.lift_cap = value,
            "depth_bound" => config.depth_bound = value,
            other => return Err(format!("config line {}: unknown key `{other}`", lineno + 1)),
        }
    }
    Ok(config)
}

fn load(grammar: &PathBuf, config: RunConfig) -> Result<CompiledLexicon, (u8, String)> {
    let text = std::fs::read_to_string(grammar)
        .map_err(|e| (1, format!("cannot read {}: {e}", grammar.to_string_lossy())))?;
    compile_text(&text, config).map_err(|e| (exit_code_for(&e), e.to_string()))
}

fn render_automaton(aut: &Automaton, dot: bool) -> String {
    if dot {
        return aut.to_dot();
    }
    let mut s = format!("states: {} (initial q1, all final)\n", aut.states.len());
    for t in &aut.transitions {
        s.push_str(&format!("{}(q{}, q{})\n", t.rule, t.from + 1, t.to + 1));
    }
    s
}

fn render_solution(lex: &CompiledLexicon, s: &Solution) -> String {
    let via = if s.derivation.is_empty() {
        "(none)".to_string()
    } else {
        s.derivation
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!("{} % via {}", s.entry.render(&lex.signature), via)
}

fn entry_index(lex: &CompiledLexicon, name: &str) -> Result<usize, (u8, String)> {
    lex.entry_by_name(name)
        .ok_or_else(|| (5, format!("unknown entry `{name}`")))
}

/// Writes to stdout, exiting quietly when the consumer closed the pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write output: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<(), (u8, String)> {
    let cli = Cli::parse();
    let mut config = config_from_env().map_err(|e| (1, e))?;
    match cli.cmd {
        Cmd::Compile {
            grammar,
            output,
            unfurl,
            format,
        } => {
            if let Some(u) = unfurl {
                config.unfurl_depth = u;
            }
            let lex = load(&grammar, config)?;
            let rendered = match format {
                Format::Structured => {
                    format!(
                        "{}\n",
                        serde_json::to_string_pretty(&lex.to_json()).unwrap()
                    )
                }
                _ => lex.render_artifact(),
            };
            match output {
                Some(path) => std::fs::write(&path, rendered)
                    .map_err(|e| (1, format!("cannot write {}: {e}", path.to_string_lossy())))?,
                None => emit(&rendered),
            }
        }
        Cmd::Follow { grammar } => {
            let lex = load(&grammar, config)?;
            emit(&lex.follow.to_string());
        }
        Cmd::Fsa {
            grammar,
            global,
            reduced: _,
            entry,
            dot,
            unfurl,
        } => {
            if let Some(u) = unfurl {
                config.unfurl_depth = u;
            }
            let lex = load(&grammar, config)?;
            let aut = if global {
                &lex.global_fsa
            } else if let Some(name) = entry {
                let ix = entry_index(&lex, &name)?;
                &lex.classes[lex.entries[ix].class_ix].class.automaton
            } else {
                &lex.reduced_fsa
            };
            emit(&render_automaton(aut, dot));
        }
        Cmd::Prune {
            entry,
            grammar,
            dot,
            unfurl,
        } => {
            if let Some(u) = unfurl {
                config.unfurl_depth = u;
            }
            let lex = load(&grammar, config)?;
            let ix = entry_index(&lex, &entry)?;
            let aut = &lex.classes[lex.entries[ix].class_ix].class.automaton;
            emit(&render_automaton(aut, dot));
        }
        Cmd::Clauses { grammar, unfolded } => {
            let lex = load(&grammar, config)?;
            emit(&lex.render_clauses(unfolded));
        }
        Cmd::Lift { entry, grammar } => {
            let lex = load(&grammar, config)?;
            let ix = entry_index(&lex, &entry)?;
            emit(&lex.render_entry(ix));
        }
        Cmd::Derive {
            entry,
            grammar,
            max_depth,
        } => {
            let lex = load(&grammar, config)?;
            let bound = max_depth.unwrap_or(lex.config.depth_bound);
            let out = lex
                .derive_all(&entry, bound)
                .map_err(|e| (5, e.to_string()))?;
            let mut text = String::new();
            for s in &out.solutions {
                text.push_str(&render_solution(&lex, s));
                text.push('\n');
            }
            text.push_str(&format!(
                "% {} entries (depth bound {}{})\n",
                out.solutions.len(),
                bound,
                if out.truncated { ", truncated" } else { "" }
            ));
            emit(&text);
        }
        Cmd::Lookup {
            grammar,
            query,
            max_depth,
        } => {
            let lex = load(&grammar, config)?;
            let q = grammar::parse_avm_text(&lex.signature, &query)
                .map_err(|e| (5, format!("bad query: {e}")))?;
            let bound = max_depth.unwrap_or(lex.config.depth_bound);
            let out = lex.lookup(&q, bound);
            let mut total = 0;
            let mut text = String::new();
            for hit in &out.hits {
                for s in &hit.solutions {
                    text.push_str(&format!("{} : {}\n", hit.entry, render_solution(&lex, s)));
                    total += 1;
                }
            }
            for name in &out.skipped_by_lift {
                text.push_str(&format!("% {name}: skipped by the lifted description\n"));
            }
            text.push_str(&format!(
                "% {} solutions (depth bound {}{})\n",
                total,
                bound,
                if out.truncated { ", truncated" } else { "" }
            ));
            emit(&text);
        }
        Cmd::Check => {
            let results = lexcov::check::run_all_checks();
            let mut failed = 0;
            let mut text = String::new();
            for r in &results {
                let status = if r.passed { "ok  " } else { "FAIL" };
                text.push_str(&format!("{status} {:<24} {}\n", r.name, r.detail));
                if !r.passed {
                    failed += 1;
                }
            }
            emit(&text);
            if failed > 0 {
                return Err((1, format!("{failed} of {} checks failed", results.len())));
            }
            emit(&format!("all {} checks passed\n", results.len()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
