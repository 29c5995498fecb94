use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pcfgen::analysis::{
    frequency_csv, ks_compare, report_json, suite_distribution, uncovered_keys,
};
use pcfgen::generator::{generate_suite, write_suite, GeneratorConfig};
use pcfgen::grammar::Severity;
use pcfgen::learner::{learn, read_corpus_dir, LearnError, UnparsablePolicy};
use pcfgen::{invert, parse_grammar, parse_input, serialize_grammar, tree_to_json, Grammar};

/// Learn input probabilities from samples and generate inputs from them.
#[derive(Parser)]
#[command(name = "pcfgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn alternative probabilities from a corpus of sample inputs.
    Learn(LearnArgs),
    /// Invert the probabilities of a probabilistic grammar.
    Invert(InvertArgs),
    /// Generate a suite of inputs from a probabilistic grammar.
    Generate(GenerateArgs),
    /// Compare how two suites exercise a grammar.
    Compare(CompareArgs),
    /// Parse one input and print its derivation tree.
    Parse(ParseArgs),
}

#[derive(Args)]
struct GrammarArg {
    /// Grammar file.
    #[arg(long, short)]
    grammar: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    grammar: GrammarArg,
    /// Directory of sample inputs, one per file.
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the probabilistic grammar.
    #[arg(long, short)]
    out: PathBuf,
    /// Where to write the expansion counts [default: <OUT>.counts.json].
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Leave out samples that do not parse instead of failing.
    #[arg(long)]
    skip_unparsable: bool,
}

#[derive(Args)]
struct InvertArgs {
    #[command(flatten)]
    grammar: GrammarArg,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    grammar: GrammarArg,
    /// Output directory for the suite.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Expansion budget before closing the tree along cheapest alternatives.
    #[arg(long, default_value_t = 200)]
    max_expansions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write each derivation tree as NNNN.tree.json.
    #[arg(long)]
    emit_trees: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    grammar: GrammarArg,
    /// Suite treated as the sample when listing uncovered keys.
    #[arg(long)]
    suite_a: PathBuf,
    #[arg(long)]
    suite_b: PathBuf,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for report.json and frequencies.csv.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    skip_unparsable: bool,
}

#[derive(Args)]
struct ParseArgs {
    #[command(flatten)]
    grammar: GrammarArg,
    /// Input file.
    #[arg(long, short)]
    input: PathBuf,
    /// Print the tree as JSON.
    #[arg(long)]
    json: bool,
}

/// 1 for bad input data, 2 for bad usage, files or grammars.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn data(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_grammar(arg: &GrammarArg) -> Result<Grammar, Failure> {
    let text = read(&arg.grammar)?;
    let g = parse_grammar(&text).map_err(|e| usage(format!("{}:{e}", arg.grammar.display())))?;
    for d in g
        .validate()
        .iter()
        .filter(|d| d.severity == Severity::Warning)
    {
        eprintln!("{}: {d}", arg.grammar.display());
    }
    g.check()
        .map_err(|e| usage(format!("{}: {e}", arg.grammar.display())))?;
    Ok(g)
}

fn load_corpus(dir: &Path) -> Result<Vec<pcfgen::Sample>, Failure> {
    read_corpus_dir(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn policy(skip: bool) -> UnparsablePolicy {
    if skip {
        UnparsablePolicy::Skip
    } else {
        UnparsablePolicy::Abort
    }
}

fn learn_failure(dir: &Path, e: LearnError) -> Failure {
    match e {
        LearnError::Unparsable { name, error } => {
            data(format!("{}: {error}", dir.join(name).display()))
        }
        other => usage(other.to_string()),
    }
}

fn report_corpus(dir: &Path, corpus: &pcfgen::learner::CorpusCounts) {
    for (name, error) in &corpus.skipped {
        eprintln!("{}: skipped: {error}", dir.join(name).display());
    }
    for name in &corpus.ambiguous {
        eprintln!(
            "{}: ambiguous parse, using the canonical tree",
            dir.join(name).display()
        );
    }
    eprintln!(
        "{}: parsed {} input(s), skipped {}",
        dir.display(),
        corpus.parsed,
        corpus.skipped.len()
    );
}

fn cmd_learn(args: LearnArgs) -> CmdResult {
    let g = load_grammar(&args.grammar)?;
    let corpus = load_corpus(&args.corpus)?;
    let learned = learn(&g, &corpus, policy(args.skip_unparsable))
        .map_err(|e| learn_failure(&args.corpus, e))?;
    report_corpus(&args.corpus, &learned.corpus);
    write(&args.out, &serialize_grammar(&learned.grammar))?;
    let counts_path = args.counts.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".counts.json");
        p.into()
    });
    write(&counts_path, &learned.corpus.counts.to_json())
}

fn cmd_invert(args: InvertArgs) -> CmdResult {
    let g = load_grammar(&args.grammar)?;
    let inverted =
        invert(&g).map_err(|e| usage(format!("{}: {e}", args.grammar.grammar.display())))?;
    write(&args.out, &serialize_grammar(&inverted))
}

fn cmd_generate(args: GenerateArgs) -> CmdResult {
    let g = load_grammar(&args.grammar)?;
    let cfg = GeneratorConfig::new(args.max_expansions, args.seed, args.count)
        .map_err(|e| usage(e.to_string()))?;
    let suite = generate_suite(&g, &cfg)
        .map_err(|e| usage(format!("{}: {e}", args.grammar.grammar.display())))?;
    write_suite(&args.out, &g, &cfg, &suite, args.emit_trees).map_err(|e| usage(e.to_string()))?;
    eprintln!("{}: wrote {} input(s)", args.out.display(), suite.len());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> CmdResult {
    let g = load_grammar(&args.grammar)?;
    let mut dists = Vec::new();
    for dir in [&args.suite_a, &args.suite_b] {
        let suite = load_corpus(dir)?;
        let d = suite_distribution(&g, &suite, policy(args.skip_unparsable))
            .map_err(|e| learn_failure(dir, e))?;
        report_corpus(dir, &d.corpus);
        if d.distribution.is_empty() {
            return Err(data(format!(
                "{}: suite exercises no production",
                dir.display()
            )));
        }
        dists.push(d.distribution);
    }
    let (a, b) = (&dists[0], &dists[1]);
    let report = ks_compare(a, b, args.resamples, args.seed).map_err(|e| usage(e.to_string()))?;
    let json = report_json(&report, &uncovered_keys(a, b));
    eprintln!("frequencies are relative production usage counts per (nonterminal, alternative)");
    print!("{json}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
        write(&out.join("report.json"), &json)?;
        write(&out.join("frequencies.csv"), &frequency_csv(a, b))?;
    }
    Ok(())
}

fn cmd_parse(args: ParseArgs) -> CmdResult {
    let g = load_grammar(&args.grammar)?;
    let text = read(&args.input)?;
    let outcome =
        parse_input(&g, &text).map_err(|e| data(format!("{}:{e}", args.input.display())))?;
    if outcome.ambiguous {
        eprintln!(
            "{}: ambiguous parse, using the canonical tree",
            args.input.display()
        );
    }
    if args.json {
        println!("{}", tree_to_json(&outcome.tree));
    } else {
        print!("{}", outcome.tree);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Parse(a) => cmd_parse(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
