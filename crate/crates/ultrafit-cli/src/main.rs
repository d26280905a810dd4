//! Command-line front end for the ultrametric fitting library.
//!
//! Subcommands: `solve` (LP relaxation plus randomized pivot rounding),
//! `lower-bound` (LP only), `exact` (exhaustive oracle), `bench`
//! (Monte-Carlo ratio studies over generated instances), `check`
//! (ultrametric test for a distance matrix), and `newick` (tree export).
//!
//! Exit codes: 0 on success, 1 when `check` or `newick` finds a violating
//! triple, 2 on unreadable or invalid input, 3 on solver failure.

use std::fs;
use std::io::Read as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;

use ultrafit::harness::{
    default_parameters, generate, guarantee, ratio_study, GeneratorSpec, Guarantee, RatioReport,
    StudyConfig,
};
use ultrafit::instance::{
    disagreement_cost, first_violation_distances, format_matrix, pair_index, pairs,
    parse_instance, InputFormat, Instance, Mode, Ultrametric,
};
use ultrafit::lp::{build_lp, edge_costs, normalize_top_level, solve_lp, LevelSolution};
use ultrafit::newick::{to_newick, NewickError};
use ultrafit::oracle::{exact_opt, DEFAULT_BUDGET};
use ultrafit::pivot::run_with;
use ultrafit::tol;

#[derive(Parser)]
#[command(
    name = "ultrafit",
    version,
    about = "Fit ultrametrics to pairwise distance data by changing as little total weight as possible"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an ultrametric: solve the level LP, round it, print the result.
    Solve(SolveArgs),
    /// Solve only the LP relaxation and print the certified lower bound.
    LowerBound(LowerBoundArgs),
    /// Exact minimum cost by exhaustive enumeration (small instances).
    Exact(ExactArgs),
    /// Monte-Carlo approximation-ratio study over generated instances.
    Bench(BenchArgs),
    /// Check whether a distance matrix is an ultrametric.
    Check(CheckArgs),
    /// Export an ultrametric instance as a Newick tree.
    Newick(NewickArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Complete,
    Weighted,
    Kpartite,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Complete => Mode::Complete,
            ModeArg::Weighted => Mode::Weighted,
            ModeArg::Kpartite => Mode::Kpartite,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    /// One edge per line: `u,v,distance[,weight]`.
    Edges,
    /// First line `n`, then `n` comma-separated rows (`*` = unspecified).
    Matrix,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> InputFormat {
        match f {
            FormatArg::Edges => InputFormat::Edges,
            FormatArg::Matrix => InputFormat::Matrix,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Instance file; `-` reads standard input.
    input: String,
    /// Constraint regime of the instance.
    #[arg(long, value_enum, default_value_t = ModeArg::Complete)]
    mode: ModeArg,
    /// Input syntax.
    #[arg(long, value_enum, default_value_t = FormatArg::Edges)]
    format: FormatArg,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Rounding threshold in (0, 0.5]; defaults to the mode's analyzed value.
    #[arg(long)]
    alpha: Option<f64>,
    /// Shift in [0, 1] applied on unspecified pairs; defaults per mode.
    #[arg(long)]
    beta: Option<f64>,
    /// RNG seed; drawn from entropy (and printed) when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Round every edge by sampling, ignoring the deterministic thresholds.
    #[arg(long)]
    force_random: bool,
    /// Write the LP relaxation in LP text format to this file.
    #[arg(long, value_name = "FILE")]
    dump_lp: Option<PathBuf>,
    /// Write the per-frame rounding trace as JSON lines to this file.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Write the LP relaxation in LP text format to this file.
    #[arg(long, value_name = "FILE")]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Give up when the enumeration space exceeds this many candidates.
    #[arg(long, value_name = "STATES", default_value_t = DEFAULT_BUDGET)]
    oracle_budget: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    /// Random ultrametric with a few corrupted pairs.
    Perturbed,
    /// Independent uniform level per pair.
    RandomLevels,
    /// Two-level similar/dissimilar instance at a given density.
    CcRandom,
    /// Balanced k-partite ultrametric with corrupted specified pairs.
    Kpartite,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance generator family.
    #[arg(long, value_enum, default_value_t = GeneratorArg::Perturbed)]
    generator: GeneratorArg,
    /// Points per instance.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Distance levels in the generated ladder.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Corrupted pairs planted per instance (perturbed generators).
    #[arg(long, default_value_t = 2)]
    corruptions: usize,
    /// Similar-pair density for the two-level generator.
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    /// Number of parts for the k-partite generator.
    #[arg(long, default_value_t = 3)]
    parts: usize,
    /// Draw weights from shortest paths over random edge weights.
    #[arg(long)]
    metric_weights: bool,
    /// Number of generated instances.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Rounding runs per instance.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Rounding threshold; defaults to the mode's analyzed value.
    #[arg(long)]
    alpha: Option<f64>,
    /// Shift on unspecified pairs; defaults per mode.
    #[arg(long)]
    beta: Option<f64>,
    /// Master seed; drawn from entropy (and printed) when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Also compute the exact optimum per instance within this budget.
    #[arg(long, value_name = "STATES")]
    oracle_budget: Option<u64>,
    /// Round every edge by sampling, ignoring the deterministic thresholds.
    #[arg(long)]
    force_random: bool,
    /// Run the structural-invariant audits on every rounding trace.
    #[arg(long)]
    audit: bool,
    /// Write trials.csv and summary.json into this directory.
    #[arg(long, value_name = "DIR")]
    report_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    /// Candidate file; `-` reads standard input.
    input: String,
    /// Input syntax (the matrix must be complete either way).
    #[arg(long, value_enum, default_value_t = FormatArg::Matrix)]
    format: FormatArg,
}

#[derive(Args)]
struct NewickArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Write the tree here instead of standard output.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

/// A failed run, tagged with the exit class it maps to.
enum Failure {
    /// Unreadable input, parse error, or invalid configuration.
    Input(String),
    /// LP, rounding, oracle, or output failure.
    Solver(String),
}

impl Failure {
    fn exit(&self) -> ExitCode {
        match self {
            Failure::Input(_) => ExitCode::from(2),
            Failure::Solver(_) => ExitCode::from(3),
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Solver(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::LowerBound(args) => cmd_lower_bound(args),
        Command::Exact(args) => cmd_exact(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Check(args) => cmd_check(args),
        Command::Newick(args) => cmd_newick(args),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            failure.exit()
        }
    }
}

fn read_input(path: &str) -> Result<String, Failure> {
    if path == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::Input(format!("cannot read standard input: {e}")))?;
        Ok(text)
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {path}: {e}")))
    }
}

fn load_instance(args: &InputArgs) -> Result<Instance, Failure> {
    let text = read_input(&args.input)?;
    parse_instance(&text, args.mode.into(), args.format.into())
        .map_err(|e| Failure::Input(e.to_string()))
}

/// Fill in mode defaults, validate ranges, and — when the caller overrode
/// either parameter — say what guarantee (if any) still applies.
fn resolve_parameters(
    mode: Mode,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> Result<(f64, f64), Failure> {
    let (default_alpha, default_beta) = default_parameters(mode);
    let overridden = alpha.is_some() || beta.is_some();
    let alpha = alpha.unwrap_or(default_alpha);
    let beta = beta.unwrap_or(default_beta);
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Failure::Input(format!(
            "alpha must lie in (0, 0.5], got {alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Failure::Input(format!("beta must lie in [0, 1], got {beta}")));
    }
    if overridden {
        match guarantee(mode, alpha, beta) {
            Guarantee::Constant(g) => eprintln!(
                "note: alpha={alpha}, beta={beta} carries an expected-cost guarantee of {g:.6} times the optimum"
            ),
            Guarantee::Logarithmic => eprintln!(
                "note: alpha={alpha}, beta={beta} carries an O(min{{levels, log n}}) expected-cost guarantee"
            ),
            Guarantee::Unspecified => eprintln!(
                "warning: no stated guarantee for alpha={alpha}, beta={beta} in {mode} mode"
            ),
        }
    }
    Ok((alpha, beta))
}

/// Use the given seed, or draw one from entropy and print it for replay.
fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s = rand::rng().random::<u64>();
            eprintln!("seed: {s} (drawn from entropy; pass --seed {s} to reproduce)");
            s
        }
    }
}

fn write_file(path: &PathBuf, contents: &str, what: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::Solver(format!("cannot write {what} to {}: {e}", path.display())))
}

/// Solve the relaxation for an instance: build, optionally dump, solve,
/// normalize.
fn relax(inst: &Instance, dump_lp: Option<&PathBuf>) -> Result<LevelSolution, Failure> {
    let program = build_lp(inst).map_err(|e| Failure::Solver(e.to_string()))?;
    if let Some(path) = dump_lp {
        write_file(path, &program.to_lp_text(), "LP text")?;
    }
    let solution = solve_lp(&program).map_err(|e| Failure::Solver(e.to_string()))?;
    Ok(normalize_top_level(&solution, inst))
}

fn ratio_of(cost: f64, bound: f64) -> f64 {
    if bound > tol::RATIO_FLOOR {
        cost / bound
    } else if cost <= tol::RATIO_FLOOR {
        1.0
    } else {
        f64::INFINITY
    }
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, Failure> {
    let inst = load_instance(&args.input)?;
    let (alpha, beta) = resolve_parameters(inst.mode(), args.alpha, args.beta)?;
    let seed = resolve_seed(args.seed);

    let solution = relax(&inst, args.dump_lp.as_ref())?;
    let bound = edge_costs(&inst, &solution, alpha)
        .map_err(|e| Failure::Solver(e.to_string()))?
        .lp_lower_bound;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fitted, trace) = run_with(&inst, &solution, alpha, beta, &mut rng, args.force_random)
        .map_err(|e| Failure::Solver(e.to_string()))?;
    if let Some(path) = &args.trace {
        write_file(path, &trace.to_jsonl(), "rounding trace")?;
    }

    let cost =
        disagreement_cost(&inst, &fitted).map_err(|e| Failure::Solver(e.to_string()))?;

    let n = inst.n();
    let ladder = inst.ladder();
    let dist: Vec<f64> = (0..inst.num_pairs())
        .map(|p| ladder.value(fitted.level_by_pair(p)))
        .collect();

    let mut out = String::from("matrix:\n");
    out.push_str(&format_matrix(n, &dist));
    out.push_str("modifications:\nu,v,old,new,note\n");
    for (i, j) in pairs(n) {
        let p = pair_index(n, i, j);
        let new = dist[p];
        match inst.distance(p) {
            Some(old) => {
                if fitted.level_by_pair(p) != inst.input_level(p).expect("specified pair") {
                    out.push_str(&format!(
                        "{},{},{},{},\n",
                        inst.label(i),
                        inst.label(j),
                        old,
                        new
                    ));
                }
            }
            None => {
                out.push_str(&format!(
                    "{},{},*,{},filled\n",
                    inst.label(i),
                    inst.label(j),
                    new
                ));
            }
        }
    }
    out.push_str(&format!(
        "cost={cost} lp_bound={bound} ratio={}\n",
        ratio_of(cost, bound)
    ));
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_lower_bound(args: LowerBoundArgs) -> Result<ExitCode, Failure> {
    let inst = load_instance(&args.input)?;
    let (alpha, _) = default_parameters(inst.mode());
    let solution = relax(&inst, args.dump_lp.as_ref())?;
    let bound = edge_costs(&inst, &solution, alpha)
        .map_err(|e| Failure::Solver(e.to_string()))?
        .lp_lower_bound;
    println!("lp_bound={bound}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_exact(args: ExactArgs) -> Result<ExitCode, Failure> {
    let inst = load_instance(&args.input)?;
    let result =
        exact_opt(&inst, args.oracle_budget).map_err(|e| Failure::Solver(e.to_string()))?;

    let ladder = inst.ladder();
    let dist: Vec<f64> = (0..inst.num_pairs())
        .map(|p| ladder.value(result.witness.level_by_pair(p)))
        .collect();
    let mut out = String::from("matrix:\n");
    out.push_str(&format_matrix(inst.n(), &dist));
    out.push_str(&format!(
        "opt_cost={} enumerated={}\n",
        result.opt_cost, result.enumerated_count
    ));
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn generator_spec(args: &BenchArgs) -> Result<GeneratorSpec, Failure> {
    let spec = match args.generator {
        GeneratorArg::Perturbed => GeneratorSpec::perturbed(args.n, args.levels, args.corruptions),
        GeneratorArg::RandomLevels => GeneratorSpec::random_levels(args.n, args.levels),
        GeneratorArg::CcRandom => GeneratorSpec::cc_random(args.n, args.density),
        GeneratorArg::Kpartite => {
            GeneratorSpec::kpartite(args.n, args.levels, args.parts, args.corruptions)
        }
    };
    let spec = if args.metric_weights {
        spec.with_metric_weights()
    } else {
        spec
    };
    // Catch bad generator parameters up front, as a configuration error,
    // rather than letting every trial of the study fail identically.
    generate(&spec, 0).map_err(|e| Failure::Input(e.to_string()))?;
    Ok(spec)
}

fn print_bench_report(report: &RatioReport, audit: bool) {
    let agg = &report.aggregates;
    println!(
        "trials={} failed={} perfect={} mean_cost={}",
        agg.trials, agg.failed, agg.perfect, agg.mean_cost
    );
    match &agg.ratio_lp {
        Some(s) => println!(
            "ratio_lp: count={} mean={:.6} stderr={:.6} max={:.6}",
            s.count, s.mean, s.stderr, s.max
        ),
        None => println!("ratio_lp: none (no trial had a positive LP bound)"),
    }
    if report.config.oracle_budget.is_some() {
        match &agg.ratio_opt {
            Some(s) => println!(
                "ratio_opt: count={} mean={:.6} stderr={:.6} max={:.6}",
                s.count, s.mean, s.stderr, s.max
            ),
            None => println!("ratio_opt: none (oracle skipped or every optimum was zero)"),
        }
    }
    if audit {
        println!(
            "audit: frames={} violations={}",
            report.audit_frames, report.audit_violation_count
        );
        for v in &report.audit_violations {
            println!("audit violation: {v}");
        }
    }
    match guarantee(report.config.mode, report.config.alpha, report.config.beta) {
        Guarantee::Constant(g) => println!("guarantee: expected cost within {g:.6} of optimum"),
        Guarantee::Logarithmic => {
            println!("guarantee: expected cost within O(min{{levels, log n}}) of optimum")
        }
        Guarantee::Unspecified => println!("guarantee: none stated for these parameters"),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, Failure> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Solver(format!("cannot size the thread pool: {e}")))?;
    }
    let spec = generator_spec(&args)?;
    let (alpha, beta) = resolve_parameters(spec.mode(), args.alpha, args.beta)?;
    let seed = resolve_seed(args.seed);

    let mut config = StudyConfig::new(spec, args.trials, args.runs, seed);
    config.alpha = alpha;
    config.beta = beta;
    config.oracle_budget = args.oracle_budget;
    config.force_random = args.force_random;
    config.audit = args.audit;

    let report = ratio_study(&config);
    print_bench_report(&report, args.audit);
    if let Some(dir) = &args.report_dir {
        report
            .write_report_dir(dir)
            .map_err(|e| Failure::Solver(format!("cannot write report to {}: {e}", dir.display())))?;
        println!("report written to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode, Failure> {
    let text = read_input(&args.input)?;
    let inst = parse_instance(&text, Mode::Complete, args.format.into())
        .map_err(|e| Failure::Input(e.to_string()))?;
    let n = inst.n();
    let dist: Vec<f64> = (0..inst.num_pairs())
        .map(|p| inst.distance(p).expect("complete instance"))
        .collect();
    match first_violation_distances(n, &dist) {
        None => {
            println!("ok: ultrametric on {n} points");
            Ok(ExitCode::SUCCESS)
        }
        Some((i, j, k)) => {
            let d = |a: usize, b: usize| dist[pair_index(n, a, b)];
            println!(
                "violation: triple ({}, {}, {}) has distances d({},{})={}, d({},{})={}, d({},{})={}; \
                 the largest is not attained twice",
                inst.label(i),
                inst.label(j),
                inst.label(k),
                inst.label(i),
                inst.label(j),
                d(i, j),
                inst.label(i),
                inst.label(k),
                d(i, k),
                inst.label(j),
                inst.label(k),
                d(j, k),
            );
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_newick(args: NewickArgs) -> Result<ExitCode, Failure> {
    let inst = load_instance(&args.input)?;
    let n = inst.n();
    let mut levels = Vec::with_capacity(inst.num_pairs());
    for (i, j) in pairs(n) {
        match inst.input_level(pair_index(n, i, j)) {
            Some(level) => levels.push(level),
            None => {
                return Err(Failure::Input(format!(
                    "pair ({}, {}) has no distance; only fully specified instances describe a tree",
                    inst.label(i),
                    inst.label(j)
                )))
            }
        }
    }
    let candidate = Ultrametric::new(n, levels);
    match to_newick(&candidate, inst.labels(), inst.ladder()) {
        Ok(tree) => {
            match &args.output {
                Some(path) => write_file(path, &format!("{tree}\n"), "Newick tree")?,
                None => println!("{tree}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(NewickError::NotUltrametric(i, j, k)) => {
            println!(
                "violation: triple ({}, {}, {}) is not ultrametric; fit the instance first",
                inst.label(i),
                inst.label(j),
                inst.label(k)
            );
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(Failure::Input(e.to_string())),
    }
}
