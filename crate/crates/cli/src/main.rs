//! `antsearch`: simulate, analyze and verify plane-search automata.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use antsearch::algorithms::{AgentProgram, AlgorithmSpec};
use antsearch::automaton::ceil_log2;
use antsearch::chain_analysis::{decompose, drift_profile, reach_bound, stationary};
use antsearch::experiments::{
    aggregate, coverage_experiment, csv_field, lemma_suite, run_trials, RowLabel, SuiteGrid, SuiteOptions,
    SweepRow, TrialRecord, SCHEMA_VERSION,
};
use antsearch::grid_sim::{run_swarm, RunOptions, SwarmOptions};
use antsearch::{Automaton, GridPoint, TargetSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "antsearch", version, about = "Plane-search automata: simulation, chain analysis and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded swarm trials and report M_moves statistics.
    Simulate(SimulateArgs),
    /// Decompose the automaton's chain and report stationary behavior.
    Analyze(AnalyzeArgs),
    /// Print the selection metric b, ℓ and χ.
    Chi(ChiArgs),
    /// Run every cell of a JSON sweep file.
    Sweep(SweepArgs),
    /// Measure which cells of the D-square a swarm visits.
    Coverage(CoverageArgs),
    /// Run the finite-scale lemma checks; exits 2 on any failure.
    Verify(VerifyArgs),
    /// Write an algorithm's automaton as JSON.
    ExportAutomaton(ExportArgs),
}

#[derive(Args, Clone, Default)]
struct AlgArgs {
    /// Algorithm spec such as `nonuniform:D=64`, or `file:PATH` for a JSON automaton.
    #[arg(long)]
    alg: String,
    /// Target distance bound D.
    #[arg(long = "D")]
    d: Option<u64>,
    /// Coin fineness ℓ.
    #[arg(long = "l")]
    l: Option<u32>,
    /// Phase-coin base flips K of the uniform search.
    #[arg(long = "K")]
    k: Option<u32>,
    /// Phase cap of a compiled uniform search.
    #[arg(long)]
    cap: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    alg: AlgArgs,
    /// Number of agents.
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// `x,y`, `corner` or `uniform`.
    #[arg(long, default_value = "corner")]
    target: String,
    #[arg(long, default_value_t = 100)]
    trials: u32,
    /// Move budget per agent; defaults to 64(D²/n + D).
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the step trace of trial 0 as CSV to this path.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    alg: AlgArgs,
    /// Agents, used to fill `n` of a uniform spec.
    #[arg(long)]
    n: Option<u32>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ChiArgs {
    #[command(flatten)]
    alg: AlgArgs,
    #[arg(long)]
    n: Option<u32>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep file.
    file: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    alg: AlgArgs,
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// Steps per agent; defaults to D².
    #[arg(long)]
    delta: Option<u64>,
    /// Slack radius of the predicted region; defaults to ⌈D/16⌉.
    #[arg(long)]
    w: Option<u64>,
    #[arg(long, default_value_t = 20)]
    trials: u32,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = SuiteOptions::default().seed)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    alg: AlgArgs,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Invalid(String),
    SuiteFailed,
}

type CliResult<T = ()> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Invalid(e.to_string())
    }
}

/// An algorithm given by spec or loaded from a file.
enum Resolved {
    Spec(AlgorithmSpec),
    File { path: String, automaton: Automaton },
}

impl Resolved {
    fn label(&self) -> String {
        match self {
            Resolved::Spec(s) => s.to_string(),
            Resolved::File { path, .. } => format!("file:{path}"),
        }
    }

    fn ell(&self) -> Option<u32> {
        match self {
            Resolved::Spec(s) => s.ell(),
            Resolved::File { automaton, .. } => Some(automaton.chi().ell),
        }
    }

    fn spec_d(&self) -> Option<u64> {
        match self {
            Resolved::Spec(AlgorithmSpec::NonUniform { d } | AlgorithmSpec::NonUniformSearch { d, .. }) => Some(*d),
            _ => None,
        }
    }

    fn program(&self) -> CliResult<AgentProgram> {
        match self {
            Resolved::Spec(s) => Ok(s.program()?),
            Resolved::File { automaton, .. } => Ok(AgentProgram::Compiled(automaton.clone())),
        }
    }

    fn automaton(&self) -> CliResult<Automaton> {
        match self {
            Resolved::Spec(AlgorithmSpec::UniformSearch { phase_cap: None, .. }) => Err(invalid(
                "the uncapped uniform search has no finite automaton; pass --cap (at most 64)",
            )),
            Resolved::Spec(s) => Ok(s.build()?.automaton),
            Resolved::File { automaton, .. } => Ok(automaton.clone()),
        }
    }
}

/// Keys of each algorithm that command-line flags may supply.
fn flag_keys(name: &str) -> &'static [&'static str] {
    match name {
        "nonuniform" => &["D"],
        "nonuniform-search" => &["D", "l"],
        "coin" | "walk" | "search" => &["l"],
        "uniform" => &["l", "n", "K", "cap"],
        _ => &[],
    }
}

fn resolve(a: &AlgArgs, n: Option<u32>) -> CliResult<Resolved> {
    let alg = a.alg.trim();
    let tuning = [("--l", a.l.is_some()), ("--K", a.k.is_some()), ("--cap", a.cap.is_some())];
    if let Some(path) = alg.strip_prefix("file:") {
        if let Some((flag, _)) = tuning.iter().find(|t| t.1) {
            return Err(invalid(format!("{flag} does not apply to an automaton loaded from a file")));
        }
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read automaton file {path}: {e}")))?;
        let automaton = Automaton::from_json(&text).map_err(|e| invalid(format!("{path}: {e}")))?;
        return Ok(Resolved::File {
            path: path.to_string(),
            automaton,
        });
    }
    let (name, body) = alg.split_once(':').unwrap_or((alg, ""));
    let mut parts: Vec<(String, String)> = Vec::new();
    for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| invalid(format!("malformed algorithm spec {alg:?}: expected key=value, got {part:?}")))?;
        parts.push((k.trim().to_string(), v.trim().to_string()));
    }
    let accepted = flag_keys(name);
    let flags = [
        ("D", "--D", a.d.map(|v| v.to_string())),
        ("l", "--l", a.l.map(|v| v.to_string())),
        ("n", "--n", n.map(|v| v.to_string())),
        ("K", "--K", a.k.map(|v| v.to_string())),
        ("cap", "--cap", a.cap.map(|v| v.to_string())),
    ];
    for (key, flag, value) in flags {
        let Some(value) = value else { continue };
        if !accepted.contains(&key) {
            // D and n also describe the target and the swarm.
            if key == "D" || key == "n" {
                continue;
            }
            return Err(invalid(format!("{flag} does not apply to algorithm {name:?}")));
        }
        match parts.iter().find(|(k, _)| k == key) {
            Some((_, v)) if *v != value => {
                return Err(invalid(format!("{flag} {value} conflicts with {key}={v} in --alg")));
            }
            Some(_) => {}
            None => parts.push((key.to_string(), value)),
        }
    }
    let joined: Vec<String> = parts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let full = if joined.is_empty() {
        name.to_string()
    } else {
        format!("{name}:{}", joined.join(","))
    };
    Ok(Resolved::Spec(full.parse()?))
}

fn parse_target(s: &str, d: Option<u64>) -> CliResult<TargetSpec> {
    let need_d = || d.ok_or_else(|| invalid(format!("--target {s} needs --D")));
    let t = match s.trim() {
        "corner" => TargetSpec::WorstCorner { d: need_d()? },
        "uniform" => TargetSpec::UniformSquare { d: need_d()? },
        other => TargetSpec::Fixed {
            at: other
                .parse::<GridPoint>()
                .map_err(|e| invalid(format!("--target {other:?}: {e}; expected x,y, corner or uniform")))?,
        },
    };
    t.validate()?;
    Ok(t)
}

fn default_budget(d: u64, n: u32) -> u64 {
    64 * (d * d / n.max(1) as u64 + d)
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| invalid(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| invalid(format!("cannot write output: {e}")))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_rows(rows: &[SweepRow]) -> String {
    let mut s = String::from(SweepRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct RunConfig {
    algorithm: String,
    d: u64,
    n: u32,
    target: TargetSpec,
    trials: u32,
    budget: u64,
    seed: u64,
}

#[derive(Serialize)]
struct RunOutput {
    schema: u32,
    config: RunConfig,
    row: SweepRow,
    records: Vec<TrialRecord>,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    resolved: &Resolved,
    d: u64,
    n: u32,
    target: TargetSpec,
    trials: u32,
    budget: u64,
    seed: u64,
    jobs: Option<usize>,
) -> CliResult<RunOutput> {
    if trials == 0 || budget == 0 || n == 0 {
        return Err(invalid("--trials, --budget and --n must be at least 1"));
    }
    let program = resolved.program()?;
    let records = run_trials(&program, n, &target, budget, seed, trials, jobs)?;
    let algorithm = resolved.label();
    let row = aggregate(
        &RowLabel {
            algorithm: &algorithm,
            ell: resolved.ell(),
            d,
            n,
            target: &target,
            budget,
            seed,
        },
        &records,
    );
    Ok(RunOutput {
        schema: SCHEMA_VERSION,
        config: RunConfig {
            algorithm,
            d,
            n,
            target,
            trials,
            budget,
            seed,
        },
        row,
        records,
    })
}

fn simulate(a: SimulateArgs) -> CliResult {
    let resolved = resolve(&a.alg, Some(a.n))?;
    let d_hint = a.alg.d.or(resolved.spec_d());
    let target = parse_target(&a.target, d_hint)?;
    let d = d_hint.unwrap_or_else(|| target.resolve(0, 0).max_norm());
    let budget = a.budget.unwrap_or_else(|| default_budget(d, a.n));
    let result = run_cell(&resolved, d, a.n, target, a.trials, budget, a.seed, a.jobs)?;
    if let Some(path) = &a.trace {
        let program = resolved.program()?;
        let opts = SwarmOptions {
            run: RunOptions {
                trace: true,
                ..RunOptions::default()
            },
            prune: true,
        };
        let swarm = run_swarm(&program, a.n, &target, budget, a.seed, 0, &opts)?;
        let mut s = String::from("agent,step,state,action,x,y\n");
        for (i, run) in swarm.agents.iter().enumerate() {
            for r in run.trace.iter().flatten() {
                s.push_str(&format!("{i},{},{},{},{},{}\n", r.step, r.state, r.action, r.x, r.y));
            }
        }
        emit(&Some(path.clone()), &s)?;
    }
    let text = match a.out.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_rows(std::slice::from_ref(&result.row)),
        Format::Json => to_json(&result),
    };
    emit(&a.out.out, &text)
}

fn analyze(a: AnalyzeArgs) -> CliResult {
    let resolved = resolve(&a.alg, a.n)?;
    let automaton = resolved.automaton()?;
    let dec = decompose(&automaton);
    let profile = drift_profile(&automaton, &dec)?;
    let chi = automaton.chi();
    match a.out.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut s = String::from("class,states,period,p_up,p_down,p_left,p_right,drift_x,drift_y\n");
            for c in &profile.classes {
                let states: Vec<String> = c.states.iter().map(|s| s.to_string()).collect();
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    c.class,
                    states.join(" "),
                    c.period,
                    c.p_up,
                    c.p_down,
                    c.p_left,
                    c.p_right,
                    c.drift.0,
                    c.drift.1
                ));
            }
            emit(&a.out.out, &s)
        }
        Format::Json => {
            let mut classes = Vec::new();
            for (ci, c) in dec.classes.iter().enumerate() {
                let pis = (0..c.period)
                    .map(|tau| stationary(&automaton, &dec, ci, tau))
                    .collect::<Result<Vec<_>, _>>()?;
                classes.push(json!({
                    "states": c.states,
                    "period": c.period,
                    "feller": c.feller,
                    "stationary": pis,
                    "profile": profile.classes[ci],
                }));
            }
            let reach = match a.alg.d.or(resolved.spec_d()) {
                Some(d) => json!(reach_bound(
                    ceil_log2(automaton.state_count() as u64),
                    &automaton.min_probability(),
                    2,
                    d.max(2)
                )?),
                None => serde_json::Value::Null,
            };
            let report = json!({
                "schema": SCHEMA_VERSION,
                "algorithm": resolved.label(),
                "states": automaton.state_count(),
                "b": chi.b,
                "l": chi.ell,
                "chi": chi.chi,
                "p_min": automaton.min_probability(),
                "transient": dec.transient,
                "classes": classes,
                "reach_bound_c2": reach,
            });
            emit(&a.out.out, &to_json(&report))
        }
    }
}

fn chi(a: ChiArgs) -> CliResult {
    let resolved = resolve(&a.alg, a.n)?;
    let metric = resolved.automaton()?.chi();
    let register_bits = match &resolved {
        Resolved::Spec(s) => s.build()?.register_bits,
        Resolved::File { .. } => None,
    };
    let text = match a.out.format {
        Some(Format::Json) => to_json(&json!({
            "b": metric.b,
            "l": metric.ell,
            "chi": metric.chi,
            "register_bits": register_bits,
        })),
        Some(Format::Csv) => format!("b,l,chi\n{},{},{}\n", metric.b, metric.ell, metric.chi),
        None => format!("{metric}\n"),
    };
    emit(&a.out.out, &text)
}

/// A scalar or a list in a sweep file.
#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Axis<T> {
    fn values(&self) -> Vec<T> {
        match self {
            Axis::One(v) => vec![v.clone()],
            Axis::Many(v) => v.clone(),
        }
    }
}

fn optional_axis<T: Clone>(a: &Option<Axis<T>>) -> Vec<Option<T>> {
    match a {
        None => vec![None],
        Some(a) => a.values().into_iter().map(Some).collect(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    alg: String,
    #[serde(rename = "D")]
    d: Axis<u64>,
    #[serde(default)]
    n: Option<Axis<u32>>,
    #[serde(default)]
    l: Option<Axis<u32>>,
    #[serde(rename = "K", default)]
    k: Option<Axis<u32>>,
    #[serde(default)]
    cap: Option<u32>,
    #[serde(default = "default_sweep_target")]
    target: String,
    trials: u32,
    #[serde(default)]
    budget: Option<u64>,
}

fn default_sweep_target() -> String {
    "corner".into()
}

fn sweep(a: SweepArgs) -> CliResult {
    let text = fs::read_to_string(&a.file)
        .map_err(|e| invalid(format!("cannot read sweep file {}: {e}", a.file.display())))?;
    let file: SweepFile = serde_json::from_str(&text).map_err(|e| {
        invalid(format!(
            "{}: malformed sweep file at line {}, column {}: {e}",
            a.file.display(),
            e.line(),
            e.column()
        ))
    })?;
    let mut results = Vec::new();
    for d in file.d.values() {
        for n in file.n.as_ref().map_or(vec![1], Axis::values) {
            for l in optional_axis(&file.l) {
                for k in optional_axis(&file.k) {
                    let alg = AlgArgs {
                        alg: file.alg.clone(),
                        d: Some(d),
                        l,
                        k,
                        cap: file.cap,
                    };
                    let resolved = resolve(&alg, Some(n))?;
                    let target = parse_target(&file.target, Some(d))?;
                    let budget = file.budget.unwrap_or_else(|| default_budget(d, n));
                    results.push(run_cell(&resolved, d, n, target, file.trials, budget, a.seed, a.jobs)?);
                }
            }
        }
    }
    let out = match a.out.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_rows(&results.iter().map(|r| r.row.clone()).collect::<Vec<_>>()),
        Format::Json => to_json(&json!({ "schema": SCHEMA_VERSION, "cells": results })),
    };
    emit(&a.out.out, &out)
}

fn coverage(a: CoverageArgs) -> CliResult {
    let resolved = resolve(&a.alg, Some(a.n))?;
    let automaton = resolved.automaton()?;
    let d = a
        .alg
        .d
        .or(resolved.spec_d())
        .ok_or_else(|| invalid("coverage needs --D"))?;
    let delta = a.delta.unwrap_or(d * d);
    let w = a.w.unwrap_or(d.div_ceil(16).max(1));
    let report = coverage_experiment(&automaton, d, delta, w, a.n, a.trials, a.seed, a.jobs)?;
    let text = match a.out.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report),
        Format::Csv => format!(
            "D,delta,w,n,trials,seed,r0,predicted_fraction,visited_fraction,post_r0_inside_fraction,target_hit_rate\n\
             {},{},{},{},{},{},{},{},{},{},{}\n",
            report.d,
            report.delta,
            report.w,
            report.n,
            report.trials,
            report.seed,
            report.r0.map(|r| r.to_string()).unwrap_or_default(),
            report.predicted_fraction,
            report.visited_fraction,
            report.post_r0_inside_fraction.map(|f| f.to_string()).unwrap_or_default(),
            report.target_hit_rate
        ),
    };
    emit(&a.out.out, &text)
}

fn verify(a: VerifyArgs) -> CliResult {
    let opts = SuiteOptions {
        seed: a.seed,
        jobs: a.jobs,
        ..SuiteOptions::default()
    };
    let report = lemma_suite(&SuiteGrid::default(), &opts)?;
    let text = match a.out.format {
        Some(Format::Json) => to_json(&report),
        Some(Format::Csv) => {
            let mut s = String::from("lemma,params,passed,detail\n");
            for c in &report.checks {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    c.lemma,
                    csv_field(&c.params),
                    c.passed,
                    csv_field(&c.detail)
                ));
            }
            s
        }
        None => {
            let mut s = String::new();
            for c in &report.checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                s.push_str(&format!("{mark} {} [{}] {}\n", c.lemma, c.params, c.detail));
            }
            let failed = report.failures().count();
            s.push_str(&format!("{} checks, {failed} failed\n", report.checks.len()));
            s
        }
    };
    emit(&a.out.out, &text)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::SuiteFailed)
    }
}

fn export(a: ExportArgs) -> CliResult {
    let resolved = resolve(&a.alg, a.n)?;
    let mut text = resolved.automaton()?.to_json();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    emit(&a.out, &text)
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Chi(a) => chi(a),
        Command::Sweep(a) => sweep(a),
        Command::Coverage(a) => coverage(a),
        Command::Verify(a) => verify(a),
        Command::ExportAutomaton(a) => export(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::SuiteFailed) => {
            eprintln!("error: lemma suite failed");
            ExitCode::from(2)
        }
    }
}
