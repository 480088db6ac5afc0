//! `matchfuzz` command suite.
//!
//! Exit status: 0 on success, 1 when findings are present (`fuzz`,
//! `replay`, `select`) or `verify` reports violations, 2 on usage or input
//! errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use matchfuzz::campaign::{replay, run_campaign, write_output, Budget, CampaignConfig};
use matchfuzz::coverage::{CoverageState, EDGE_MAP_SIZE};
use matchfuzz::feedback::{build_report, decode_coverage};
use matchfuzz::ir::{parse_module, print_module};
use matchfuzz::mutate::{Mutator, MutatorConfig, TypeUniverse};
use matchfuzz::select::{Selector, Verdict};
use matchfuzz::target::{builtin_target, builtin_targets, compile_patterns, FaultSpec, FeatureSet, TargetSpec};
use matchfuzz::verify::verify_module;

#[derive(Parser)]
#[command(
    name = "matchfuzz",
    version,
    about = "Coverage-guided structured fuzzing of a table-driven instruction selector"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TargetArgs {
    /// Built-in target name or path to a target description file.
    #[arg(long, default_value = "vex")]
    target: String,
    /// Feature override, `name=on|off`. Repeatable.
    #[arg(long = "feature", value_name = "K=V")]
    features: Vec<String>,
    /// Injected fault, e.g. `width=20:abort`. Repeatable.
    #[arg(long = "fault", value_name = "SPEC")]
    faults: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fuzzing campaign and write its output directory.
    Fuzz {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Execution budget.
        #[arg(long, conflicts_with = "seconds")]
        execs: Option<u64>,
        /// Wall-clock budget.
        #[arg(long)]
        seconds: Option<u64>,
        /// Disable matcher-coverage guidance of the mutator.
        #[arg(long)]
        no_guidance: bool,
        /// Directory of `*.ir` seed modules.
        #[arg(long, value_name = "DIR")]
        seeds: Option<PathBuf>,
        #[arg(long, value_name = "DIR", env = "MATCHFUZZ_OUT", default_value = "matchfuzz-out")]
        out: PathBuf,
        /// Executions between guidance epochs.
        #[arg(long, default_value_t = 10_000)]
        epoch: u64,
    },
    /// Apply mutation steps to a module and print the result.
    Mutate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        steps: u32,
        /// Take the type universe from this target.
        #[arg(long)]
        target: Option<String>,
        input: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Verify a module; one violation per line.
    Verify { input: PathBuf },
    /// Run instruction selection on a module.
    Select {
        #[command(flatten)]
        target: TargetArgs,
        input: PathBuf,
        /// Print every matcher-table byte read as `idx,kind`.
        #[arg(long)]
        trace: bool,
    },
    /// Summarize a coverage dump.
    CovReport { dump: PathBuf },
    /// Decode a coverage dump into a guidance report.
    Decode {
        #[command(flatten)]
        target: TargetArgs,
        dump: PathBuf,
    },
    /// List built-in targets.
    Targets,
    /// Re-run a reproducer or corpus entry.
    Replay {
        #[command(flatten)]
        target: TargetArgs,
        input: PathBuf,
    },
}

/// A failure that ends the command with exit status 2.
struct Fail(String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(e.to_string())
    }
}

type Outcome = Result<ExitCode, Fail>;

fn read(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| Fail(format!("{}: {e}", path.display())))
}

fn resolve(args: &TargetArgs) -> Result<(TargetSpec, FeatureSet), Fail> {
    let mut t = load_target(&args.target)?;
    for f in &args.faults {
        t = t.with_fault(FaultSpec::parse(f).map_err(Fail)?);
    }
    let mut overrides = Vec::new();
    for kv in &args.features {
        let (k, v) = kv.split_once('=').ok_or_else(|| Fail(format!("feature '{kv}' is not K=V")))?;
        let on = match v {
            "on" | "true" | "1" => true,
            "off" | "false" | "0" => false,
            _ => return Err(Fail(format!("feature value '{v}' is not on/off"))),
        };
        overrides.push((k.to_string(), on));
    }
    let features = t.features_from(&overrides)?;
    Ok((t, features))
}

fn load_target(name: &str) -> Result<TargetSpec, Fail> {
    match builtin_target(name) {
        Ok(t) => Ok(t),
        Err(e) if Path::new(name).is_file() => {
            let _ = e;
            Ok(TargetSpec::parse(&read(Path::new(name))?)?)
        }
        Err(e) => Err(e.into()),
    }
}

fn findings_exit(any: bool) -> ExitCode {
    if any {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn fuzz(
    target: &TargetArgs,
    seed: u64,
    budget: Budget,
    guidance: bool,
    seeds: Option<PathBuf>,
    out: &Path,
    epoch: u64,
) -> Outcome {
    let (t, features) = resolve(target)?;
    let cfg =
        CampaignConfig { seed, budget, guidance, seeds_dir: seeds, epoch_every: epoch, ..CampaignConfig::default() };
    let res = run_campaign(&t, features, &cfg)?;
    write_output(out, &res)?;
    let s = &res.stats;
    println!(
        "executions={} corpus={} edge_buckets={} matcher_bits={}/{} findings={} epochs={}",
        s.executions,
        s.corpus,
        s.edge_buckets,
        s.matcher_bits,
        res.coverage.matcher_size(),
        s.findings,
        s.epochs.len()
    );
    for f in res.findings.records() {
        println!(
            "finding {} {} {} [{}]",
            f.signature.hash_hex(),
            f.signature.kind.name(),
            f.signature.root,
            f.signature.types
        );
    }
    Ok(findings_exit(!res.findings.is_empty()))
}

fn mutate(seed: u64, steps: u32, target: Option<&str>, input: &Path, output: Option<&Path>) -> Outcome {
    let mut m = parse_module(&read(input)?)?;
    let universe = match target {
        Some(name) => {
            let t = load_target(name)?;
            TypeUniverse::for_target(&t, t.default_features())
        }
        None => TypeUniverse::default(),
    };
    let mut mu = Mutator::new(MutatorConfig { seed, universe, ..MutatorConfig::default() })?;
    for _ in 0..steps {
        mu.mutate_step(&mut m);
    }
    let text = print_module(&m);
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Fail(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(input: &Path) -> Outcome {
    let m = parse_module(&read(input)?)?;
    let v = verify_module(&m);
    for x in &v {
        println!("{}", x.describe(&m));
    }
    Ok(findings_exit(!v.is_empty()))
}

fn select(target: &TargetArgs, input: &Path, trace: bool) -> Outcome {
    let (t, features) = resolve(target)?;
    let m = parse_module(&read(input)?)?;
    let (prog, _) = compile_patterns(&t)?;
    let mut cov = CoverageState::new(prog.size());
    let mut sel = Selector::new(&t, &prog, features);
    if trace {
        sel = sel.with_trace();
    }
    cov.begin_run();
    let res = sel.select_module(&m, &mut cov)?;
    let mut out = String::new();
    if let Some(tr) = &sel.trace {
        for (i, k) in tr {
            let _ = writeln!(out, "{i},{}", k.name());
        }
    }
    for p in &res.matched {
        let pd = &t.patterns[*p as usize];
        let _ = writeln!(out, "matched {} {}", pd.id, pd.emits);
    }
    match &res.verdict {
        Verdict::Ok => out.push_str("verdict ok\n"),
        Verdict::Finding(sig) => {
            let _ = writeln!(out, "verdict finding\n{sig}");
        }
    }
    print!("{out}");
    Ok(findings_exit(res.finding().is_some()))
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

fn cov_report(dump: &Path) -> Outcome {
    let cov = CoverageState::load_dump(dump)?;
    let (bits, size) = (cov.matcher_bits(), cov.matcher_size());
    println!("matcher_bits {bits}/{size} ({:.2}%)", pct(bits, size));
    println!("edges_hit {}/{EDGE_MAP_SIZE} ({:.2}%)", cov.edges_hit(), pct(cov.edges_hit(), EDGE_MAP_SIZE));
    println!("edge_buckets {}", cov.edge_buckets());
    Ok(ExitCode::SUCCESS)
}

fn decode(target: &TargetArgs, dump: &Path) -> Outcome {
    let (t, _) = resolve(target)?;
    let (prog, lut) = compile_patterns(&t)?;
    let cov = CoverageState::load_dump(dump)?;
    let decoded = decode_coverage(&cov.virgin_matcher, &lut, prog.size())?;
    print!("{}", build_report(&decoded, &t));
    Ok(ExitCode::SUCCESS)
}

fn targets() -> Outcome {
    for t in builtin_targets() {
        let (prog, _) = compile_patterns(&t)?;
        let features = if t.features.is_empty() { "-".to_string() } else { t.features.join(",") };
        println!("{} patterns={} table_bytes={} features={}", t.name, t.patterns.len(), prog.size(), features);
    }
    Ok(ExitCode::SUCCESS)
}

fn replay_cmd(target: &TargetArgs, input: &Path) -> Outcome {
    let (t, features) = resolve(target)?;
    let res = replay(&read(input)?, &t, features)?;
    match &res.verdict {
        Verdict::Ok => println!("verdict ok ({} instructions matched)", res.matched.len()),
        Verdict::Finding(sig) => println!("verdict finding\n{sig}"),
    }
    Ok(findings_exit(res.finding().is_some()))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Fuzz { target, seed, execs, seconds, no_guidance, seeds, out, epoch } => {
            let budget = match (execs, seconds) {
                (_, Some(s)) => Budget::Seconds(s),
                (Some(n), None) => Budget::Executions(n),
                (None, None) => Budget::Executions(10_000),
            };
            fuzz(&target, seed, budget, !no_guidance, seeds, &out, epoch)
        }
        Command::Mutate { seed, steps, target, input, output } => {
            mutate(seed, steps, target.as_deref(), &input, output.as_deref())
        }
        Command::Verify { input } => verify(&input),
        Command::Select { target, input, trace } => select(&target, &input, trace),
        Command::CovReport { dump } => cov_report(&dump),
        Command::Decode { target, dump } => decode(&target, &dump),
        Command::Targets => targets(),
        Command::Replay { target, input } => replay_cmd(&target, &input),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Fail(msg)) => {
            eprintln!("matchfuzz: {msg}");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
    }
}
