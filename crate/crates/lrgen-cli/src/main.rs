//! Command-line front end for the generation toolkit: compile and inspect
//! parse tables, invert grammars, compile generation tables, generate,
//! parse, and compare engines.
//!
//! Exit codes: 0 on success, 1 when the input is well-formed but the
//! operation fails in the domain (a rejected sentence, an empty generation,
//! a compile that cannot meet `--strict`), 2 for usage and file problems.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lrgen::compare::{compare_corpus, render, ReportFormat};
use lrgen::gen_compile::{compile, CompileMode, GenTables, DEFAULT_BUDGET, DEFAULT_DEPTH};
use lrgen::generator::{generate, GenMode};
use lrgen::grammar::Grammar;
use lrgen::inversion::invert_grammar;
use lrgen::lr_parse::{compile_parse_tables, parse_lfs, ParseTables};
use lrgen::shdg::shdg_generate;
use lrgen::terms::Term;

/// Overrides the default key budget when `--max-budget` is not given.
const BUDGET_ENV: &str = "GENLR_MAX_BUDGET";

#[derive(Parser)]
#[command(
    name = "lrgen",
    version,
    about = "Surface generation driven by compiled descend/goto/reduce tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile SLR(1) parse tables and print the states and table cells.
    CompileParse {
        grammar: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Parse a sentence and print one logical form per line.
    Parse {
        grammar: PathBuf,
        /// The sentence; multiple arguments are joined with spaces.
        #[arg(required = true)]
        sentence: Vec<String>,
    },
    /// Print the inverted rules generation works with.
    Invert { grammar: PathBuf },
    /// Compile generation tables; without `-o` the table text goes to
    /// stdout.
    CompileGen {
        grammar: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate sentences for a logical form, one per line.
    Generate {
        #[arg(long)]
        tables: PathBuf,
        /// The logical form, e.g. 'mod(sleep(john), ynq)'.
        #[arg(long)]
        lf: String,
        /// Exhaust all alternatives (the default).
        #[arg(long, conflicts_with = "first")]
        all: bool,
        /// Stop at the first complete sentence.
        #[arg(long)]
        first: bool,
        /// Print search statistics to stderr.
        #[arg(long)]
        stats: bool,
    },
    /// Generate with the semantic-head-driven search baseline.
    ShdgGenerate {
        grammar: PathBuf,
        #[arg(long)]
        lf: String,
        #[arg(long)]
        stats: bool,
    },
    /// Compile tables whose lookahead keys are optimized for a training
    /// corpus (shorthand for `compile-gen --examples`).
    Optimize {
        grammar: PathBuf,
        /// Training corpus, one logical form per line.
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        max_budget: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        default_depth: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the tables and the search baseline over a corpus and report
    /// both costs per item.
    Compare {
        grammar: PathBuf,
        #[arg(long)]
        tables: PathBuf,
        /// Corpus of logical forms, one per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Summarize saved tables: per-state keys and reduce alternatives.
    Report {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args)]
struct ModeArgs {
    /// Fixed lookahead depth for every key.
    #[arg(long, conflicts_with_all = ["auto", "examples"])]
    fixed: Option<u32>,
    /// Deepen keys per state until every reduce set is a singleton or the
    /// budget runs out.
    #[arg(long)]
    auto: bool,
    /// Optimize keys for a training corpus (one logical form per line).
    #[arg(long, conflicts_with = "auto")]
    examples: Option<PathBuf>,
    /// Largest number of kept nodes a key may spend.
    #[arg(long)]
    max_budget: Option<usize>,
    /// Key depth for inputs the corpus does not cover (examples mode).
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    default_depth: u32,
    /// In auto mode, fail instead of keeping a residual reduce conflict.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Tsv,
}

struct Failure {
    code: u8,
    msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn domain(msg: impl Into<String>) -> Failure {
    Failure { code: 1, msg: msg.into() }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lrgen: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::CompileParse { grammar, format } => {
            let g = load_grammar(&grammar)?;
            let t = compile_parse_tables(&g).map_err(|e| domain(e.to_string()))?;
            print!("{}", render_parse_tables(&t, format));
            Ok(())
        }
        Command::Parse { grammar, sentence } => {
            let g = load_grammar(&grammar)?;
            let t = compile_parse_tables(&g).map_err(|e| domain(e.to_string()))?;
            let joined = sentence.join(" ");
            let words: Vec<&str> = joined.split_whitespace().collect();
            let lfs = parse_lfs(&g, &t, &words).map_err(|e| domain(e.to_string()))?;
            if lfs.is_empty() {
                return Err(domain(format!("no parse for \"{joined}\"")));
            }
            for lf in lfs {
                println!("{lf}");
            }
            Ok(())
        }
        Command::Invert { grammar } => {
            let g = load_grammar(&grammar)?;
            for rule in invert_grammar(&g.normalize()) {
                println!("{rule}");
            }
            Ok(())
        }
        Command::CompileGen { grammar, mode, output } => {
            let g = load_grammar(&grammar)?;
            let mode = compile_mode(&mode)?;
            compile_to(&g, &mode, output.as_deref())
        }
        Command::Optimize { grammar, examples, max_budget, default_depth, output } => {
            let g = load_grammar(&grammar)?;
            let mode = CompileMode::Examples {
                corpus: load_corpus(&examples)?,
                budget: budget_or_default(max_budget)?,
                default_depth,
            };
            compile_to(&g, &mode, output.as_deref())
        }
        Command::Generate { tables, lf, first, stats, .. } => {
            let t = load_tables(&tables)?;
            let lf = parse_term(&lf)?;
            let mode = if first { GenMode::First } else { GenMode::All };
            let run = generate(&t, &lf, mode);
            for s in &run.strings {
                println!("{s}");
            }
            if stats {
                eprintln!("{}", run.stats);
            }
            if run.strings.is_empty() {
                return Err(domain(format!("nothing generated for {lf}")));
            }
            Ok(())
        }
        Command::ShdgGenerate { grammar, lf, stats } => {
            let g = load_grammar(&grammar)?;
            let lf = parse_term(&lf)?;
            let (strings, cost) =
                shdg_generate(&g, &g.top, &lf).map_err(|e| domain(e.to_string()))?;
            for words in &strings {
                println!("{}", words.join(" "));
            }
            if stats {
                eprintln!("{cost}");
            }
            if strings.is_empty() {
                return Err(domain(format!("nothing generated for {lf}")));
            }
            Ok(())
        }
        Command::Compare { grammar, tables, corpus, format } => {
            let g = load_grammar(&grammar)?;
            let t = load_tables(&tables)?;
            let corpus = load_corpus(&corpus)?;
            let rows = compare_corpus(&t, &g, &corpus).map_err(|e| domain(e.to_string()))?;
            print!("{}", render(&rows, report_format(format)));
            Ok(())
        }
        Command::Report { tables, format } => {
            let t = load_tables(&tables)?;
            print!("{}", render_tables_report(&t, format));
            Ok(())
        }
    }
}

fn compile_mode(args: &ModeArgs) -> Result<CompileMode, Failure> {
    let budget = budget_or_default(args.max_budget)?;
    match (args.fixed, args.auto, &args.examples) {
        (Some(depth), false, None) => Ok(CompileMode::Fixed(depth)),
        (None, true, None) => Ok(CompileMode::Auto { budget, strict: args.strict }),
        (None, false, Some(path)) => Ok(CompileMode::Examples {
            corpus: load_corpus(path)?,
            budget,
            default_depth: args.default_depth,
        }),
        _ => Err(usage("pick exactly one of --fixed N, --auto, --examples FILE")),
    }
}

fn budget_or_default(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(b) = flag {
        return Ok(b);
    }
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| usage(format!("{BUDGET_ENV} must be a non-negative integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn compile_to(g: &Grammar, mode: &CompileMode, output: Option<&Path>) -> Result<(), Failure> {
    let tables = compile(&g.normalize(), mode).map_err(|e| domain(e.to_string()))?;
    let text = tables.save();
    match output {
        Some(path) => {
            fs::write(path, &text)
                .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
            let reduces = tables.nondeterminism_report();
            let widest = reduces.values().max().copied().unwrap_or(0);
            println!(
                "{} states, {} rules, largest reduce set {} -> {}",
                tables.states.len(),
                tables.rules.len(),
                widest,
                path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn load_grammar(path: &Path) -> Result<Grammar, Failure> {
    let src = read(path)?;
    Grammar::parse(&src).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_tables(path: &Path) -> Result<GenTables, Failure> {
    let src = read(path)?;
    GenTables::load(&src).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> Result<Vec<Term>, Failure> {
    let src = read(path)?;
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let term =
            Term::parse(line).map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(term);
    }
    Ok(out)
}

fn parse_term(s: &str) -> Result<Term, Failure> {
    Term::parse(s).map_err(|e| usage(format!("bad term `{s}`: {e}")))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Text => ReportFormat::Text,
        Format::Tsv => ReportFormat::Tsv,
    }
}

fn render_parse_tables(t: &ParseTables, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Text => {
            for s in 1..=t.state_count() {
                out.push_str(&format!("state {s}\n"));
                for item in t.state_items(s) {
                    out.push_str(&format!("  {item}\n"));
                }
            }
            out.push_str("table\n");
            for ((state, sym), act) in t.cells() {
                out.push_str(&format!("  {state} {sym} {act}\n"));
            }
        }
        Format::Tsv => {
            out.push_str("state\tsymbol\taction\n");
            for ((state, sym), act) in t.cells() {
                out.push_str(&format!("{state}\t{sym}\t{act}\n"));
            }
        }
    }
    out
}

fn render_tables_report(t: &GenTables, format: Format) -> String {
    let mut states: BTreeSet<usize> = BTreeSet::new();
    for (from, _, to) in t.descend.iter().chain(&t.goto_entries) {
        states.insert(*from);
        states.insert(*to);
    }
    for (state, _) in &t.reduce {
        states.insert(*state);
    }
    let mut out = String::new();
    match format {
        Format::Text => {
            out.push_str(&format!("states: {}\n", states.len()));
            for &s in &states {
                out.push_str(&format!("state {s}\n"));
                for (_, key, to) in t.descend.iter().filter(|(f, _, _)| *f == s) {
                    out.push_str(&format!("  descend {key} -> {to}\n"));
                }
                for (_, key, to) in t.goto_entries.iter().filter(|(f, _, _)| *f == s) {
                    out.push_str(&format!("  goto {key} -> {to}\n"));
                }
                for index in t.reduce_rules(s) {
                    out.push_str(&format!("  reduce {}\n", t.rules[index]));
                }
            }
            let report = t.nondeterminism_report();
            let widest = report.values().max().copied().unwrap_or(0);
            out.push_str(&format!(
                "reduce alternatives: max {widest} over {} reductive states\n",
                report.len()
            ));
        }
        Format::Tsv => {
            out.push_str("state\tentry\tkey\ttarget\n");
            for &s in &states {
                for (_, key, to) in t.descend.iter().filter(|(f, _, _)| *f == s) {
                    out.push_str(&format!("{s}\tdescend\t{key}\t{to}\n"));
                }
                for (_, key, to) in t.goto_entries.iter().filter(|(f, _, _)| *f == s) {
                    out.push_str(&format!("{s}\tgoto\t{key}\t{to}\n"));
                }
                for index in t.reduce_rules(s) {
                    let rule = &t.rules[index];
                    out.push_str(&format!("{s}\treduce\t{}\t{}\n", rule.payload(), rule.hash()));
                }
            }
        }
    }
    out
}
