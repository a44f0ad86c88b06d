//! Seeded Monte Carlo campaigns: swarm sweeps, speed-up and scaling fits,
//! coverage experiments and the per-lemma verification suite.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::algorithms::{
    build_coin, build_nonuniform, build_nonuniform_search, build_search, build_walk,
    expected_iteration_moves, expected_moves_through_phase, first_covering_phase,
    hit_probability_per_iteration, l_path_displacement_law, pass_law, phase_move_bound,
    search_visit_probability, walk_pmf, AlgorithmError, AlgorithmSpec, Fragment,
};
use crate::automaton::{ceil_log2, Action, Automaton, StateId};
use crate::chain_analysis::{absorption_probabilities, predict_coverage, reach_bound, ChainError};
use crate::grid_sim::{
    apply_action, run_swarm, GridPoint, Program, SimError, SwarmOptions, TargetSpec,
};
use crate::procedural::{phase_coin_flips, sample_phase, UniformProgram};
use crate::rational::Rational;
use crate::rng::{self, AgentRng};

/// Version tag of serialized results.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn config(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

/// Runs `f` on a pool of `jobs` threads, or the global pool.
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| ExperimentError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(serialize_with = "display")]
    pub algorithm: AlgorithmSpec,
    pub d: u64,
    pub n: u32,
    pub target: TargetSpec,
    pub trials: u32,
    pub budget: u64,
    pub master_seed: u64,
    /// Worker threads; never changes results.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub target: GridPoint,
    pub m_moves: Option<u64>,
    pub m_steps: Option<u64>,
    pub finder: Option<u32>,
    /// No agent found the target within the budget.
    pub exhausted: bool,
}

impl TrialRecord {
    /// Moves counted toward the mean; censored trials contribute the budget.
    pub fn contributed(&self, budget: u64) -> u64 {
        self.m_moves.unwrap_or(budget)
    }
}

/// Quotes a CSV field when it holds a comma or quote.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub algorithm: String,
    pub d: u64,
    pub n: u32,
    pub ell: Option<u32>,
    pub target: String,
    pub trials: u32,
    pub budget: u64,
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub find_rate: f64,
    pub exhaust_rate: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "algorithm,D,n,l,target,trials,budget,seed,mean,std,ci95_lo,ci95_hi,find_rate,exhaust_rate";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&self.algorithm),
            self.d,
            self.n,
            self.ell.map(|l| l.to_string()).unwrap_or_default(),
            csv_field(&self.target),
            self.trials,
            self.budget,
            self.seed,
            self.mean,
            self.std,
            self.ci95_lo,
            self.ci95_hi,
            self.find_rate,
            self.exhaust_rate
        )
    }

    pub fn half_width(&self) -> f64 {
        (self.ci95_hi - self.ci95_lo) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub row: SweepRow,
    pub records: Vec<TrialRecord>,
}

/// Mean, sample standard deviation and 95% normal interval.
pub fn summarize(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    let hw = 1.96 * std / n.sqrt();
    (mean, std, mean - hw, mean + hw)
}

/// Runs `trials` independent swarms of `program`; record `i` depends only
/// on `(master_seed, i)`.
pub fn run_trials<P: Program + ?Sized>(
    program: &P,
    n: u32,
    target: &TargetSpec,
    budget: u64,
    master_seed: u64,
    trials: u32,
    jobs: Option<usize>,
) -> Result<Vec<TrialRecord>, ExperimentError> {
    target.validate()?;
    if n == 0 {
        return Err(SimError::NoAgents.into());
    }
    let opts = SwarmOptions::default();
    with_jobs(jobs, || {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let s = run_swarm(program, n, target, budget, master_seed, t, &opts)
                    .expect("validated arguments");
                TrialRecord {
                    trial: t,
                    target: s.target,
                    m_moves: s.m_moves,
                    m_steps: s.m_steps,
                    finder: s.finder,
                    exhausted: s.m_moves.is_none(),
                }
            })
            .collect()
    })
}

/// Run parameters echoed into a `SweepRow`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowLabel<'a> {
    pub algorithm: &'a str,
    pub ell: Option<u32>,
    pub d: u64,
    pub n: u32,
    pub target: &'a TargetSpec,
    pub budget: u64,
    pub seed: u64,
}

/// Aggregates trial records; censored trials contribute the budget.
pub fn aggregate(label: &RowLabel<'_>, records: &[TrialRecord]) -> SweepRow {
    let values: Vec<f64> = records.iter().map(|r| r.contributed(label.budget) as f64).collect();
    let (mean, std, lo, hi) = summarize(&values);
    let trials = records.len().max(1) as f64;
    let exhausted = records.iter().filter(|r| r.exhausted).count() as f64;
    SweepRow {
        algorithm: label.algorithm.to_string(),
        d: label.d,
        n: label.n,
        ell: label.ell,
        target: label.target.to_string(),
        trials: records.len() as u32,
        budget: label.budget,
        seed: label.seed,
        mean,
        std,
        ci95_lo: lo,
        ci95_hi: hi,
        find_rate: 1.0 - exhausted / trials,
        exhaust_rate: exhausted / trials,
    }
}

pub fn sweep_row(cfg: &ExperimentConfig, records: &[TrialRecord]) -> SweepRow {
    let algorithm = cfg.algorithm.to_string();
    aggregate(
        &RowLabel {
            algorithm: &algorithm,
            ell: cfg.algorithm.ell(),
            d: cfg.d,
            n: cfg.n,
            target: &cfg.target,
            budget: cfg.budget,
            seed: cfg.master_seed,
        },
        records,
    )
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    if cfg.trials == 0 {
        return Err(config("trials must be at least 1"));
    }
    if cfg.budget == 0 {
        return Err(config("budget must be at least 1"));
    }
    let program = cfg.algorithm.program()?;
    let records = run_trials(&program, cfg.n, &cfg.target, cfg.budget, cfg.master_seed, cfg.trials, cfg.jobs)?;
    Ok(ExperimentResult {
        schema: SCHEMA_VERSION,
        config: cfg.clone(),
        row: sweep_row(cfg, &records),
        records,
    })
}

/// `mean(n = 1) / mean(n)`.
pub fn speedup(stats_n: &SweepRow, stats_1: &SweepRow) -> Result<f64, ExperimentError> {
    if stats_n.mean <= 0.0 {
        return Err(config("speed-up undefined for a zero mean"));
    }
    Ok(stats_1.mean / stats_n.mean)
}

/// Least-squares slope of `ln(mean)` against `ln(D)`.
pub fn fit_scaling_exponent(series: &[(f64, f64)]) -> Result<f64, ExperimentError> {
    let mut ds: Vec<f64> = series.iter().map(|p| p.0).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    if ds.len() < 3 {
        return Err(config("need at least 3 distinct D values"));
    }
    if series.iter().any(|&(d, m)| d <= 0.0 || m <= 0.0) {
        return Err(config("D and means must be positive"));
    }
    let pts: Vec<(f64, f64)> = series.iter().map(|&(d, m)| (d.ln(), m.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairVerdict {
    pub d_near: u64,
    pub d_far: u64,
    pub mean_near: f64,
    pub mean_far: f64,
    /// `mean_far ≥ mean_near`, or the intervals overlap.
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub rows: Vec<SweepRow>,
    pub pairs: Vec<PairVerdict>,
    pub monotone: bool,
}

/// Compares mean `M_moves` of the procedural uniform search on corner
/// targets at consecutive distances.
#[allow(clippy::too_many_arguments)]
pub fn uniform_monotonicity_check(
    ell: u32,
    n: u32,
    big_k: u32,
    ds: &[u64],
    trials: u32,
    budget: u64,
    seed: u64,
    jobs: Option<usize>,
) -> Result<MonotonicityReport, ExperimentError> {
    if ds.windows(2).any(|w| w[0] > w[1]) {
        return Err(config("D list must be sorted"));
    }
    let algorithm = AlgorithmSpec::UniformSearch {
        ell,
        n: n as u64,
        big_k,
        phase_cap: None,
    };
    let mut rows = Vec::new();
    for &d in ds {
        let cfg = ExperimentConfig {
            algorithm,
            d,
            n,
            target: TargetSpec::WorstCorner { d },
            trials,
            budget,
            master_seed: seed,
            jobs,
        };
        rows.push(run_experiment(&cfg)?.row);
    }
    let pairs: Vec<PairVerdict> = rows
        .windows(2)
        .map(|w| PairVerdict {
            d_near: w[0].d,
            d_far: w[1].d,
            mean_near: w[0].mean,
            mean_far: w[1].mean,
            monotone: w[1].mean >= w[0].mean || w[1].ci95_hi >= w[0].ci95_lo,
        })
        .collect();
    let monotone = pairs.iter().all(|p| p.monotone);
    Ok(MonotonicityReport { rows, pairs, monotone })
}

/// Ratio of mean `M_moves` at a coarser `ℓ` to a finer one, with the
/// exponent `c` solving `ratio = 2^{c·ℓ_coarse}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllInflation {
    pub ell_fine: u32,
    pub ell_coarse: u32,
    pub ratio: f64,
    pub fitted_c: f64,
}

pub fn ell_inflation(fine: &SweepRow, coarse: &SweepRow) -> Result<EllInflation, ExperimentError> {
    let (Some(ell_fine), Some(ell_coarse)) = (fine.ell, coarse.ell) else {
        return Err(config("both rows need an l parameter"));
    };
    let ratio = speedup(fine, coarse)?;
    Ok(EllInflation {
        ell_fine,
        ell_coarse,
        ratio,
        fitted_c: ratio.log2() / ell_coarse as f64,
    })
}

/// Exact set of grid cells, dense inside the `D`-ball when it fits.
enum Occupancy {
    Dense { d: i64, bits: Vec<u64> },
    Sparse { d: i64, cells: HashSet<(i64, i64)> },
}

/// Dense bitmaps larger than this many bits switch to a hash set.
pub const DENSE_BITMAP_LIMIT: u64 = 1 << 28;

impl Occupancy {
    fn new(d: u64) -> Self {
        let side = 2 * d + 1;
        let di = d as i64;
        if side.saturating_mul(side) <= DENSE_BITMAP_LIMIT {
            Occupancy::Dense {
                d: di,
                bits: vec![0; (side * side).div_ceil(64) as usize],
            }
        } else {
            Occupancy::Sparse {
                d: di,
                cells: HashSet::new(),
            }
        }
    }

    fn index(d: i64, p: GridPoint) -> usize {
        let side = 2 * d + 1;
        ((p.y + d) * side + (p.x + d)) as usize
    }

    fn insert(&mut self, p: GridPoint) {
        match self {
            Occupancy::Dense { d, bits } => {
                if p.x.abs() <= *d && p.y.abs() <= *d {
                    let i = Self::index(*d, p);
                    bits[i / 64] |= 1 << (i % 64);
                }
            }
            Occupancy::Sparse { d, cells } => {
                if p.x.abs() <= *d && p.y.abs() <= *d {
                    cells.insert((p.x, p.y));
                }
            }
        }
    }

    fn contains(&self, p: GridPoint) -> bool {
        match self {
            Occupancy::Dense { d, bits } => {
                p.x.abs() <= *d && p.y.abs() <= *d && {
                    let i = Self::index(*d, p);
                    bits[i / 64] >> (i % 64) & 1 == 1
                }
            }
            Occupancy::Sparse { cells, .. } => cells.contains(&(p.x, p.y)),
        }
    }

    fn count(&self) -> u64 {
        match self {
            Occupancy::Dense { bits, .. } => bits.iter().map(|w| w.count_ones() as u64).sum(),
            Occupancy::Sparse { cells, .. } => cells.len() as u64,
        }
    }

    fn cells(&self) -> Vec<GridPoint> {
        match self {
            Occupancy::Dense { d, bits } => {
                let side = (2 * d + 1) as usize;
                let mut out = Vec::new();
                for (w, &word) in bits.iter().enumerate() {
                    let mut word = word;
                    while word != 0 {
                        let i = w * 64 + word.trailing_zeros() as usize;
                        word &= word - 1;
                        out.push(GridPoint::new((i % side) as i64 - d, (i / side) as i64 - d));
                    }
                }
                out
            }
            Occupancy::Sparse { cells, .. } => {
                cells.iter().map(|&(x, y)| GridPoint::new(x, y)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageTrial {
    pub trial: u32,
    pub visited_cells: u64,
    pub visited_fraction: f64,
    pub target: GridPoint,
    pub target_hit: bool,
    pub post_r0_cells: u64,
    pub post_r0_inside: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub schema: u32,
    pub d: u64,
    pub delta: u64,
    pub w: u64,
    pub n: u32,
    pub trials: u32,
    pub seed: u64,
    pub c: u64,
    /// `None` when the reach bound saturated.
    pub r0: Option<u64>,
    /// Cells of the `D`-square inside the predicted region.
    pub predicted_fraction: f64,
    /// (i) Mean fraction of the `D`-square visited.
    pub visited_fraction: f64,
    /// (ii) Share of cells first covered after step `R_0` that lie in the
    /// predicted region; `None` when no agent ran past `R_0`.
    pub post_r0_inside_fraction: Option<f64>,
    /// (iii) Share of trials whose uniform target was visited.
    pub target_hit_rate: f64,
    pub trials_detail: Vec<CoverageTrial>,
}

/// Reach-bound constant used by coverage experiments.
pub const DEFAULT_REACH_C: u64 = 2;

/// Simulates `n` agents for `delta` steps each and measures which cells of
/// the max-norm `D`-ball they visit.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    a: &Automaton,
    d: u64,
    delta: u64,
    w: u64,
    n: u32,
    trials: u32,
    seed: u64,
    jobs: Option<usize>,
) -> Result<CoverageReport, ExperimentError> {
    if n == 0 || trials == 0 || d == 0 {
        return Err(config("need n, trials and D at least 1"));
    }
    let prediction = predict_coverage(a, d, delta, w)?;
    let r0 = reach_bound(ceil_log2(a.state_count() as u64), &a.min_probability(), DEFAULT_REACH_C, d.max(2))?;
    let cutoff = r0.unwrap_or(u64::MAX);
    let side = (2 * d + 1) as f64;
    let targets = TargetSpec::UniformSquare { d };
    let details: Vec<CoverageTrial> = with_jobs(jobs, || {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut all = Occupancy::new(d);
                let mut late = Occupancy::new(d);
                for agent in 0..n {
                    let mut r = rng::stream(seed, t, agent);
                    let mut s = a.start();
                    let mut pos = GridPoint::ORIGIN;
                    for step in 1..=delta {
                        if a.is_halting(s) {
                            break;
                        }
                        s = a.step_unchecked(s, &mut r);
                        let act = a.label(s);
                        pos = apply_action(pos, act);
                        if act.is_move() {
                            all.insert(pos);
                            if step > cutoff {
                                late.insert(pos);
                            }
                        }
                    }
                }
                let target = targets.resolve(seed, t);
                let late_cells = late.cells();
                let inside = late_cells.iter().filter(|&&q| prediction.contains(q)).count() as u64;
                let visited = all.count();
                CoverageTrial {
                    trial: t,
                    visited_cells: visited,
                    visited_fraction: visited as f64 / (side * side),
                    target,
                    target_hit: all.contains(target),
                    post_r0_cells: late_cells.len() as u64,
                    post_r0_inside: inside,
                }
            })
            .collect()
    })?;
    let tn = trials as f64;
    let late_total: u64 = details.iter().map(|t| t.post_r0_cells).sum();
    let late_inside: u64 = details.iter().map(|t| t.post_r0_inside).sum();
    Ok(CoverageReport {
        schema: SCHEMA_VERSION,
        d,
        delta,
        w,
        n,
        trials,
        seed,
        c: DEFAULT_REACH_C,
        r0,
        predicted_fraction: prediction.fraction,
        visited_fraction: details.iter().map(|t| t.visited_fraction).sum::<f64>() / tn,
        post_r0_inside_fraction: (late_total > 0).then(|| late_inside as f64 / late_total as f64),
        target_hit_rate: details.iter().filter(|t| t.target_hit).count() as f64 / tn,
        trials_detail: details,
    })
}

/// One pass of a looping automaton from `origin` until it re-enters
/// `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationSample {
    pub moves: u64,
    /// Moves taken when `target` was first stepped on.
    pub hit_at: Option<u64>,
}

pub fn sample_iteration(
    a: &Automaton,
    origin: StateId,
    target: GridPoint,
    rng: &mut AgentRng,
) -> IterationSample {
    let mut s = origin;
    let mut pos = GridPoint::ORIGIN;
    let mut moves = 0;
    let mut hit_at = None;
    loop {
        s = a.step_unchecked(s, rng);
        if s == origin {
            return IterationSample { moves, hit_at };
        }
        let act = a.label(s);
        pos = apply_action(pos, act);
        if act.is_move() {
            moves += 1;
            if hit_at.is_none() && pos == target {
                hit_at = Some(moves);
            }
        }
    }
}

/// Parameters swept by `lemma_suite`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SuiteGrid {
    pub ds: Vec<u64>,
    pub ells: Vec<u32>,
    pub ns: Vec<u64>,
}

impl Default for SuiteGrid {
    fn default() -> Self {
        SuiteGrid {
            ds: vec![2, 4, 8, 16],
            ells: vec![1, 2],
            ns: vec![1, 4],
        }
    }
}

impl SuiteGrid {
    pub fn is_empty(&self) -> bool {
        self.ds.is_empty() && self.ells.is_empty() && self.ns.is_empty()
    }
}

pub type WalkBuilder = fn(u32, u32, Action) -> Result<Fragment, AlgorithmError>;

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Iterations for per-iteration Monte Carlo checks.
    pub iterations: u64,
    /// Single-agent runs for the conditioned find check.
    pub find_trials: u64,
    /// Trials for phase-level checks.
    pub phase_trials: u64,
    pub walk_builder: WalkBuilder,
    pub jobs: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 1,
            iterations: 100_000,
            find_trials: 20_000,
            phase_trials: 1_000,
            walk_builder: build_walk,
            jobs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub lemma: String,
    pub params: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub schema: u32,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Checks(Vec<CheckResult>);

impl Checks {
    fn push(&mut self, lemma: &str, params: String, passed: bool, detail: String) {
        self.0.push(CheckResult {
            lemma: lemma.to_string(),
            params,
            passed,
            detail,
        });
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let (mean, std, _, _) = summarize(values);
    (mean, std / (values.len().max(1) as f64).sqrt())
}

/// Runs the finite-scale lemma checks over `grid`.
pub fn lemma_suite(grid: &SuiteGrid, opts: &SuiteOptions) -> Result<SuiteReport, ExperimentError> {
    let mut checks = Checks(Vec::new());
    if grid.is_empty() {
        return Ok(SuiteReport {
            schema: SCHEMA_VERSION,
            checks: Vec::new(),
            passed: true,
        });
    }
    check_coin(grid, &mut checks)?;
    check_walk(grid, opts, &mut checks)?;
    check_uniform_area(grid, &mut checks)?;
    check_oracle_equivalence(grid, &mut checks)?;
    with_jobs(opts.jobs, || -> Result<(), ExperimentError> {
        check_iteration_moves(grid, opts, &mut checks)?;
        check_condition(grid, opts, &mut checks)?;
        check_iterations(grid, &mut checks)?;
        check_ria(grid, opts, &mut checks)?;
        check_phase_moves(grid, opts, &mut checks);
        check_while_loop(grid, opts, &mut checks);
        Ok(())
    })??;
    let passed = checks.0.iter().all(|c| c.passed);
    Ok(SuiteReport {
        schema: SCHEMA_VERSION,
        checks: checks.0,
        passed,
    })
}

fn check_coin(grid: &SuiteGrid, checks: &mut Checks) -> Result<(), ExperimentError> {
    for &ell in &grid.ells {
        for k in 0..=8 {
            let f = build_coin(k, ell)?;
            let h = absorption_probabilities(&f.automaton, &[f.exit])?;
            let want = Rational::pow2_neg(k * ell);
            checks.push(
                "p_coin",
                format!("k={k} l={ell}"),
                h[f.entry] == want,
                format!("tails probability {} (want {want})", h[f.entry]),
            );
        }
    }
    Ok(())
}

fn check_walk(grid: &SuiteGrid, opts: &SuiteOptions, checks: &mut Checks) -> Result<(), ExperimentError> {
    for &ell in &grid.ells {
        for k in 1..=(10 / ell) {
            let f = (opts.walk_builder)(k, ell, Action::Up)?;
            let side = 1u64 << (k * ell);
            let law = pass_law(&f.automaton, f.entry, |s| s == f.exit, side)?;
            let floor = Rational::pow2_neg(k * ell + 2);
            let mut ok = true;
            let mut worst = String::new();
            for i in 0..=side {
                let got = law.outcomes.get(&(0, i as i64, i)).cloned().unwrap_or_else(Rational::zero);
                if got != walk_pmf(k, ell, i as u32) || got < floor {
                    ok = false;
                    worst = format!("P[{i} moves] = {:.3e}, floor {:.3e}", got.to_f64(), floor.to_f64());
                    break;
                }
            }
            checks.push(
                "walk",
                format!("k={k} l={ell}"),
                ok,
                if ok { format!("pmf geometric and >= 2^-{} on 0..={side}", k * ell + 2) } else { worst },
            );
        }
    }
    Ok(())
}

fn check_uniform_area(grid: &SuiteGrid, checks: &mut Checks) -> Result<(), ExperimentError> {
    for &ell in &grid.ells {
        for k in 1..=(5 / ell) {
            let f = build_search(k, ell)?;
            let side = 1i64 << (k * ell);
            let law = pass_law(&f.automaton, f.entry, |s| s == f.exit, 2 * side as u64)?;
            let floor = Rational::pow2_neg(k * ell + 6);
            let mut ok = true;
            let mut min = Rational::one();
            for x in 0..=side {
                for y in 0..=side {
                    let p = GridPoint::new(x, y);
                    let got = if (x, y) == (0, 0) {
                        Rational::one()
                    } else {
                        law.arrivals.get(&(x, y)).cloned().unwrap_or_else(Rational::zero)
                    };
                    ok &= got == search_visit_probability(k, ell, p) && got >= floor;
                    min = min.min(got);
                }
            }
            checks.push(
                "uniformArea",
                format!("k={k} l={ell}"),
                ok,
                format!("min visit probability {:.3e}, floor {:.3e}", min.to_f64(), floor.to_f64()),
            );
        }
    }
    Ok(())
}

fn check_oracle_equivalence(grid: &SuiteGrid, checks: &mut Checks) -> Result<(), ExperimentError> {
    for &d in grid.ds.iter().filter(|&&d| d <= 4) {
        let a = build_nonuniform(d)?;
        let law = pass_law(&a, 0, |s| s == 0, 8)?;
        let oracle = l_path_displacement_law(&Rational::frac(1, d), 8);
        let ok = oracle.iter().all(|(&(dx, dy), m)| {
            law.outcomes.get(&(dx, dy, (dx.abs() + dy.abs()) as u64)) == Some(m)
        });
        checks.push("automatonLaw", format!("D={d}"), ok, "iteration law equals the procedure".into());
    }
    for &d in &grid.ds {
        for &ell in &grid.ells {
            let s = build_nonuniform_search(d, ell)?;
            if s.k * ell > 4 {
                continue;
            }
            let law = pass_law(&s.automaton, 0, |q| q == 0, 8)?;
            let oracle = l_path_displacement_law(&Rational::pow2_neg(s.k * ell), 8);
            let ok = oracle.iter().all(|(&(dx, dy), m)| {
                law.outcomes.get(&(dx, dy, (dx.abs() + dy.abs()) as u64)) == Some(m)
            });
            checks.push(
                "searchLaw",
                format!("D={d} l={ell}"),
                ok,
                format!("k={} iteration law equals the procedure", s.k),
            );
        }
    }
    Ok(())
}

fn iteration_samples(a: &Automaton, target: GridPoint, seed: u64, tag: u32, count: u64) -> Vec<IterationSample> {
    let chunks = count.div_ceil(1 << 14);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(seed, tag, c as u32);
            let len = (count - c * (1 << 14)).min(1 << 14);
            (0..len).map(move |_| sample_iteration(a, 0, target, &mut r)).collect::<Vec<_>>()
        })
        .collect()
}

fn check_iteration_moves(grid: &SuiteGrid, opts: &SuiteOptions, checks: &mut Checks) -> Result<(), ExperimentError> {
    for &d in &grid.ds {
        let a = build_nonuniform(d)?;
        let samples = iteration_samples(&a, GridPoint::new(i64::MAX, 0), opts.seed, d as u32, opts.iterations);
        let moves: Vec<f64> = samples.iter().map(|s| s.moves as f64).collect();
        let (mean, se) = mean_sd(&moves);
        let exact = expected_iteration_moves(d)?.to_f64();
        let ok = (mean - exact).abs() <= 5.0 * se && mean <= 2.0 * d as f64 + 5.0 * se;
        checks.push(
            "exp_D",
            format!("D={d}"),
            ok,
            format!("mean {mean:.3} vs exact {exact} (5se {:.3}), bound {}", 5.0 * se, 2 * d),
        );
    }
    Ok(())
}

fn check_condition(grid: &SuiteGrid, opts: &SuiteOptions, checks: &mut Checks) -> Result<(), ExperimentError> {
    for &d in &grid.ds {
        let a = build_nonuniform(d)?;
        let target = GridPoint::new(1, 0);
        let samples = iteration_samples(&a, target, opts.seed, 1000 + d as u32, opts.iterations);
        let all: Vec<f64> = samples.iter().map(|s| s.moves as f64).collect();
        let missed: Vec<f64> = samples.iter().filter(|s| s.hit_at.is_none()).map(|s| s.moves as f64).collect();
        let (m, se) = mean_sd(&all);
        let (mc, sec) = mean_sd(&missed);
        let ok = mc <= 2.0 * m + 5.0 * (sec + 2.0 * se);
        checks.push(
            "condition",
            format!("D={d} target=1,0"),
            ok,
            format!("mean given miss {mc:.3} vs 2x mean {:.3}", 2.0 * m),
        );
    }
    Ok(())
}

fn check_iterations(grid: &SuiteGrid, checks: &mut Checks) -> Result<(), ExperimentError> {
    for &d in grid.ds.iter().filter(|&&d| d <= 8) {
        let mut ns: Vec<u64> = grid.ns.clone();
        ns.extend([16, 64 * d]);
        ns.sort_unstable();
        ns.dedup();
        let di = d as i64;
        let hits: Vec<Rational> = (-di..=di)
            .flat_map(|x| (-di..=di).map(move |y| GridPoint::new(x, y)))
            .filter(|&p| p != GridPoint::ORIGIN)
            .map(|p| hit_probability_per_iteration(d, p))
            .collect::<Result<_, _>>()?;
        let worst = hits.iter().min().cloned().expect("nonempty square");
        let per_agent = Rational::frac(1, 64 * d);
        checks.push(
            "iterations",
            format!("D={d} n=1 hit"),
            worst >= per_agent,
            format!("worst hit probability {:.5} vs 1/(64D) = {:.5}", worst.to_f64(), per_agent.to_f64()),
        );
        for &n in &ns {
            let miss = worst.complement().expect("probability").pow(n as u32);
            let product = per_agent.complement().expect("probability").pow(n as u32);
            let floor_num = (64 * d).saturating_sub(n);
            let literal = Rational::frac(floor_num, 64 * d).max(Rational::frac(1, 2));
            // The linear form only follows from the product bound at the ends.
            let literal_required = n == 1 || n >= 64 * d;
            checks.push(
                "iterations",
                format!("D={d} n={n}"),
                miss <= product && (!literal_required || miss <= literal),
                format!(
                    "worst miss probability {:.4}, (1-1/(64D))^n {:.4}, max(1-n/(64D),1/2) {:.4}",
                    miss.to_f64(),
                    product.to_f64(),
                    literal.to_f64()
                ),
            );
        }
    }
    Ok(())
}

fn check_ria(grid: &SuiteGrid, opts: &SuiteOptions, checks: &mut Checks) -> Result<(), ExperimentError> {
    const MAX_I: usize = 5;
    for &d in &grid.ds {
        let a = build_nonuniform(d)?;
        let target = GridPoint::new(d as i64, d as i64);
        // (iteration of first find, moves until the find), for finds within MAX_I.
        let finds: Vec<(usize, u64)> = (0..opts.find_trials)
            .into_par_iter()
            .filter_map(|t| {
                let mut r = rng::stream(opts.seed, 2000 + d as u32, t as u32);
                let mut total = 0;
                for i in 1..=MAX_I {
                    let s = sample_iteration(&a, 0, target, &mut r);
                    if let Some(h) = s.hit_at {
                        return Some((i, total + h));
                    }
                    total += s.moves;
                }
                None
            })
            .collect();
        for i in 1..=MAX_I {
            let moves: Vec<f64> = finds.iter().filter(|f| f.0 == i).map(|f| f.1 as f64).collect();
            if moves.len() < 2 {
                continue;
            }
            let (m, se) = mean_sd(&moves);
            let bound = 4.0 * i as f64 * d as f64;
            checks.push(
                "ria",
                format!("D={d} i={i}"),
                m <= bound + 5.0 * se,
                format!("mean {m:.2} over {} finds, bound {bound}", moves.len()),
            );
        }
    }
    Ok(())
}

fn check_phase_moves(grid: &SuiteGrid, opts: &SuiteOptions, checks: &mut Checks) {
    let program = UniformProgram { ell: 1, n: 4, big_k: 2 };
    let trials = opts.phase_trials.max(2) * 10;
    for i in 1..=3u32 {
        let totals: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::stream(opts.seed, 3000 + i, t as u32);
                (1..=i)
                    .map(|j| sample_phase(&program, j, (i64::MAX, 0), &mut r).moves as f64)
                    .sum()
            })
            .collect();
        let (m, se) = mean_sd(&totals);
        let bound = phase_move_bound(i, 1, 4, 2).to_f64();
        let exact = expected_moves_through_phase(i, 1, 4, 2).to_f64();
        checks.push(
            "exp_i",
            format!("i={i} l=1 n=4 K=2"),
            m + 5.0 * se <= bound && (m - exact).abs() <= 5.0 * se,
            format!("mean {m:.1} (exact {exact}) + 5se {:.1} vs bound {bound}", 5.0 * se),
        );
    }
    let _ = grid;
}

fn check_while_loop(grid: &SuiteGrid, opts: &SuiteOptions, checks: &mut Checks) {
    let (ell, big_k, n) = (1u32, 8u32, 16u64);
    if !grid.ells.contains(&ell) {
        return;
    }
    let program = UniformProgram { ell, n, big_k };
    for &d in grid.ds.iter().filter(|&&d| d >= 4) {
        let i0 = first_covering_phase(d, ell);
        let target = (d as i64, d as i64);
        let calls_floor = 1u64 << ((big_k / 2 + i0) * ell);
        let outcomes: Vec<(u64, bool)> = (0..opts.phase_trials)
            .into_par_iter()
            .map(|t| {
                let (mut calls, mut found) = (0, false);
                for agent in 0..n {
                    let mut r = rng::stream(opts.seed, 4000 + d as u32, (t * n + agent) as u32);
                    let s = sample_phase(&program, i0, target, &mut r);
                    calls += s.search_calls;
                    found |= s.found;
                }
                (calls, found)
            })
            .collect();
        let trials = outcomes.len() as f64;
        let enough = outcomes.iter().filter(|o| o.0 >= calls_floor).count() as f64 / trials;
        let found = outcomes.iter().filter(|o| o.1).count() as f64 / trials;
        let want_calls = 1.0 - 0.5f64.powi((2 * ell + 2) as i32);
        let want_find = 1.0 - 0.5f64.powi((2 * ell + 1) as i32);
        checks.push(
            "whileLoop",
            format!("D={d} i={i0} l={ell} K={big_k} n={n}"),
            enough >= want_calls,
            format!(
                "{:.4} of trials made >= {calls_floor} search calls (gate flips {})",
                enough,
                phase_coin_flips(i0, ell, n, big_k)
            ),
        );
        checks.push(
            "probFind",
            format!("D={d} i={i0} l={ell} K={big_k} n={n}"),
            found >= want_find,
            format!("phase find rate {found:.4} vs {want_find:.4}"),
        );
    }
}
