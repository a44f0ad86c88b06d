//! Executing agents on the infinite integer grid.
//!
//! A *step* is one transition of an agent's program; a *move* is a step that
//! lands in an up/down/left/right state. `Origin` teleports back to `(0,0)`
//! for zero moves and one step. A target is found the first time the agent
//! arrives on it by a move, so passing over the target counts.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{Action, Automaton, StateId};
use crate::rng::{self, AgentRng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: i64,
    pub y: i64,
}

impl GridPoint {
    pub const ORIGIN: GridPoint = GridPoint { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        GridPoint { x, y }
    }

    /// Max-norm distance from the origin.
    pub fn max_norm(self) -> u64 {
        self.x.unsigned_abs().max(self.y.unsigned_abs())
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

impl FromStr for GridPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (x, y) = s
            .split_once(',')
            .ok_or_else(|| format!("expected \"x,y\", got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<i64>().map_err(|e| format!("{v:?}: {e}"));
        Ok(GridPoint::new(parse(x)?, parse(y)?))
    }
}

pub fn apply_action(p: GridPoint, act: Action) -> GridPoint {
    match act {
        Action::Up => GridPoint::new(p.x, p.y + 1),
        Action::Down => GridPoint::new(p.x, p.y - 1),
        Action::Right => GridPoint::new(p.x + 1, p.y),
        Action::Left => GridPoint::new(p.x - 1, p.y),
        Action::Origin => GridPoint::ORIGIN,
        Action::None => p,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("target may not be the origin")]
    TargetAtOrigin,
    #[error("target distance D must be at least 1")]
    ZeroDistance,
    #[error("agent count must be at least 1")]
    NoAgents,
}

/// Where the target is placed in each trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TargetSpec {
    Fixed { at: GridPoint },
    /// The corner `(D, D)`.
    WorstCorner { d: u64 },
    /// Uniform over the max-norm ball of radius `D`, origin excluded.
    UniformSquare { d: u64 },
}

impl TargetSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            TargetSpec::Fixed { at } if at == GridPoint::ORIGIN => Err(SimError::TargetAtOrigin),
            TargetSpec::WorstCorner { d: 0 } | TargetSpec::UniformSquare { d: 0 } => {
                Err(SimError::ZeroDistance)
            }
            _ => Ok(()),
        }
    }

    /// The target for `trial`; uniform placements draw from the trial's
    /// shared stream so every agent sees the same target.
    pub fn resolve(&self, master_seed: u64, trial: u32) -> GridPoint {
        match *self {
            TargetSpec::Fixed { at } => at,
            TargetSpec::WorstCorner { d } => GridPoint::new(d as i64, d as i64),
            TargetSpec::UniformSquare { d } => {
                let mut rng = rng::trial_stream(master_seed, trial);
                let d = d as i64;
                loop {
                    let p = GridPoint::new(rng.gen_range(-d..=d), rng.gen_range(-d..=d));
                    if p != GridPoint::ORIGIN {
                        return p;
                    }
                }
            }
        }
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Fixed { at } => write!(f, "{at}"),
            TargetSpec::WorstCorner { .. } => write!(f, "corner"),
            TargetSpec::UniformSquare { .. } => write!(f, "uniform"),
        }
    }
}

/// Per-agent execution state of a program.
pub trait Walker {
    /// Identifier of the current program state (for traces).
    fn state(&self) -> StateId;
    /// Takes one step and returns the action of the new state, or `None`
    /// when the agent can never act again.
    fn next_action(&mut self, rng: &mut AgentRng) -> Option<Action>;
}

/// Anything that can spawn identical, independent agents.
pub trait Program: Sync {
    type Walker<'a>: Walker
    where
        Self: 'a;

    fn walker(&self) -> Self::Walker<'_>;
}

pub struct AutomatonWalker<'a> {
    automaton: &'a Automaton,
    state: StateId,
}

impl Walker for AutomatonWalker<'_> {
    fn state(&self) -> StateId {
        self.state
    }

    #[inline]
    fn next_action(&mut self, rng: &mut AgentRng) -> Option<Action> {
        if self.automaton.is_halting(self.state) {
            return None;
        }
        self.state = self.automaton.step_unchecked(self.state, rng);
        Some(self.automaton.label(self.state))
    }
}

impl Program for Automaton {
    type Walker<'a> = AutomatonWalker<'a>;

    fn walker(&self) -> AutomatonWalker<'_> {
        AutomatonWalker {
            automaton: self,
            state: self.start(),
        }
    }
}

pub const DEFAULT_STEP_CAP_FACTOR: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Steps are capped at `budget * step_cap_factor`.
    pub step_cap_factor: u64,
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            step_cap_factor: DEFAULT_STEP_CAP_FACTOR,
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Found,
    BudgetExhausted,
    StepCapReached,
    /// The program entered a state it can never leave without moving.
    Halted,
    /// Stopped early because it could no longer improve the swarm minima.
    Pruned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub state: StateId,
    pub action: Action,
    pub x: i64,
    pub y: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRun {
    pub outcome: Outcome,
    pub steps: u64,
    pub moves: u64,
    pub final_position: GridPoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

impl AgentRun {
    pub fn found(&self) -> bool {
        self.outcome == Outcome::Found
    }
}

/// A resumable single-agent run.
struct Cursor<W> {
    walker: W,
    pos: GridPoint,
    steps: u64,
    moves: u64,
    trace: Option<Vec<TraceRow>>,
    outcome: Option<Outcome>,
}

impl<W: Walker> Cursor<W> {
    fn new(walker: W, trace: bool) -> Self {
        Cursor {
            walker,
            pos: GridPoint::ORIGIN,
            steps: 0,
            moves: 0,
            trace: trace.then(Vec::new),
            outcome: None,
        }
    }

    /// Executes at most `limit` steps, stopping early once an outcome is
    /// reached.
    fn advance(
        &mut self,
        rng: &mut AgentRng,
        target: GridPoint,
        budget: u64,
        step_cap: u64,
        prune_at: Option<(u64, u64)>,
        limit: u64,
    ) {
        for _ in 0..limit {
            if self.moves >= budget {
                self.outcome = Some(Outcome::BudgetExhausted);
                return;
            }
            if self.steps >= step_cap {
                self.outcome = Some(Outcome::StepCapReached);
                return;
            }
            if let Some((best_moves, best_steps)) = prune_at {
                if self.moves >= best_moves && self.steps >= best_steps {
                    self.outcome = Some(Outcome::Pruned);
                    return;
                }
            }
            let Some(act) = self.walker.next_action(rng) else {
                self.outcome = Some(Outcome::Halted);
                return;
            };
            self.steps += 1;
            self.pos = apply_action(self.pos, act);
            if let Some(t) = self.trace.as_mut() {
                t.push(TraceRow {
                    step: self.steps,
                    state: self.walker.state(),
                    action: act,
                    x: self.pos.x,
                    y: self.pos.y,
                });
            }
            if act.is_move() {
                self.moves += 1;
                if self.pos == target {
                    self.outcome = Some(Outcome::Found);
                    return;
                }
            }
        }
    }

    fn finish(self) -> AgentRun {
        AgentRun {
            outcome: self.outcome.expect("run finished"),
            steps: self.steps,
            moves: self.moves,
            final_position: self.pos,
            trace: self.trace,
        }
    }
}

/// Runs one agent until it finds `target`, spends `budget` moves, or hits
/// the step cap.
pub fn run_agent<P: Program + ?Sized>(
    program: &P,
    target: GridPoint,
    budget: u64,
    rng: &mut AgentRng,
    opts: &RunOptions,
) -> AgentRun {
    let mut cursor = Cursor::new(program.walker(), opts.trace);
    let step_cap = budget.saturating_mul(opts.step_cap_factor);
    while cursor.outcome.is_none() {
        cursor.advance(rng, target, budget, step_cap, None, u64::MAX);
    }
    cursor.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwarmOptions {
    pub run: RunOptions,
    /// Stop agents once they can no longer lower either minimum. Minima and
    /// the finder are unaffected; agents' records are truncated.
    pub prune: bool,
}

impl Default for SwarmOptions {
    fn default() -> Self {
        SwarmOptions {
            run: RunOptions::default(),
            prune: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwarmResult {
    pub target: GridPoint,
    pub agents: Vec<AgentRun>,
    /// Minimum over agents of moves-to-hit; `None` when nobody found it.
    pub m_moves: Option<u64>,
    pub m_steps: Option<u64>,
    /// Lowest-id agent realizing `m_moves`.
    pub finder: Option<u32>,
}

/// Steps each agent runs before the next agent takes a turn.
const SWARM_CHUNK: u64 = 4096;

/// Runs `n` independent agents against one trial's target. Agent `i` uses
/// stream `(master_seed, trial, i)`, so the result is a pure function of the
/// arguments. Agents advance in round-robin chunks so that an early find
/// prunes every other agent.
pub fn run_swarm<P: Program + ?Sized>(
    program: &P,
    n: u32,
    target: &TargetSpec,
    budget: u64,
    master_seed: u64,
    trial: u32,
    opts: &SwarmOptions,
) -> Result<SwarmResult, SimError> {
    if n == 0 {
        return Err(SimError::NoAgents);
    }
    target.validate()?;
    let point = target.resolve(master_seed, trial);
    let step_cap = budget.saturating_mul(opts.run.step_cap_factor);
    let mut rngs: Vec<AgentRng> = (0..n).map(|i| rng::stream(master_seed, trial, i)).collect();
    let mut cursors: Vec<_> = (0..n).map(|_| Cursor::new(program.walker(), opts.run.trace)).collect();
    let mut best: Option<(u64, u32)> = None;
    let mut m_steps: Option<u64> = None;
    let mut active = n as usize;
    while active > 0 {
        for (i, (cursor, rng)) in cursors.iter_mut().zip(rngs.iter_mut()).enumerate() {
            if cursor.outcome.is_some() {
                continue;
            }
            let prune_at = if opts.prune {
                best.map(|(m, _)| (m, m_steps.unwrap_or(u64::MAX)))
            } else {
                None
            };
            cursor.advance(rng, point, budget, step_cap, prune_at, SWARM_CHUNK);
            match cursor.outcome {
                None => {}
                Some(Outcome::Found) => {
                    active -= 1;
                    let agent = i as u32;
                    if best.is_none_or(|(m, a)| (cursor.moves, agent) < (m, a)) {
                        best = Some((cursor.moves, agent));
                    }
                    m_steps = Some(m_steps.map_or(cursor.steps, |s| s.min(cursor.steps)));
                }
                Some(_) => active -= 1,
            }
        }
    }
    Ok(SwarmResult {
        target: point,
        agents: cursors.into_iter().map(Cursor::finish).collect(),
        m_moves: best.map(|(m, _)| m),
        m_steps,
        finder: best.map(|(_, a)| a),
    })
}

/// Writes a trace as `step,state,action,x,y` lines with a header.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> io::Result<()> {
    writeln!(out, "step,state,action,x,y")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.step, r.state, r.action, r.x, r.y)?;
    }
    Ok(())
}
