//! Builders for the search algorithms as compiled automata, the matching
//! procedural programs, and closed-form expectations.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::automaton::{ceil_log2, Action, Automaton, AutomatonError, ChiMetric, StateId};
use crate::grid_sim::{apply_action, AutomatonWalker, GridPoint, Program, Walker};
use crate::procedural::{phase_coin_flips, UniformProgram, UniformWalker};
use crate::rational::Rational;
use crate::rng::AgentRng;

/// Largest accepted `ℓ`; procedural coins draw `ℓ` bits from one `u64`.
pub const MAX_ELL: u32 = 62;
/// Largest accepted phase cap for compiled uniform search.
pub const MAX_PHASE_CAP: u32 = 64;
/// Largest accepted `D` for the non-uniform builders.
pub const MAX_D: u64 = 1 << 31;

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed algorithm spec {spec:?}: {reason}")]
    Parse { spec: String, reason: String },
    #[error("target {0} is outside the supported range")]
    TargetOutOfRange(GridPoint),
    #[error("non-move states of the automaton form a cycle through state {0}")]
    SilentCycle(StateId),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
}

fn invalid(msg: impl Into<String>) -> AlgorithmError {
    AlgorithmError::InvalidParameter(msg.into())
}

fn check_d(d: u64) -> Result<(), AlgorithmError> {
    if !(2..=MAX_D).contains(&d) {
        return Err(invalid(format!("D must be in 2..={MAX_D}, got {d}")));
    }
    Ok(())
}

fn check_ell(ell: u32) -> Result<(), AlgorithmError> {
    if !(1..=MAX_ELL).contains(&ell) {
        return Err(invalid(format!("l must be in 1..={MAX_ELL}, got {ell}")));
    }
    Ok(())
}

/// A sub-automaton with a single entry and absorbing exits.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragment {
    pub automaton: Automaton,
    pub entry: StateId,
    /// The normal exit; for coins this is the tails exit.
    pub exit: StateId,
    /// The heads exit of a coin.
    pub heads_exit: Option<StateId>,
    /// Register bits of the procedure, excluding the exit markers.
    pub register_bits: u32,
}

#[derive(Default)]
struct ChainBuilder {
    labels: Vec<Action>,
    rows: Vec<Vec<(StateId, Rational)>>,
}

impl ChainBuilder {
    fn add(&mut self, label: Action) -> StateId {
        self.labels.push(label);
        self.rows.push(Vec::new());
        self.labels.len() - 1
    }

    fn edge(&mut self, from: StateId, to: StateId, p: Rational) {
        self.rows[from].push((to, p));
    }

    fn absorbing(&mut self, s: StateId) {
        self.edge(s, s, Rational::one());
    }

    /// Wires `k` flips of `C_{1/2^ℓ}`. Every state in `first` performs flip
    /// one; fresh None-labeled counter states perform the rest. Any heads
    /// leads to `heads`, all tails to `tails`.
    fn coin_flips(&mut self, first: &[StateId], k: u32, ell: u32, heads: StateId, tails: StateId) {
        if k == 0 {
            for &s in first {
                self.edge(s, tails, Rational::one());
            }
            return;
        }
        let q = Rational::pow2_neg(ell);
        let h = q.complement().expect("q <= 1");
        let counters: Vec<StateId> = (1..k).map(|_| self.add(Action::None)).collect();
        let after_first = counters.first().copied().unwrap_or(tails);
        for &s in first {
            self.edge(s, heads, h.clone());
            self.edge(s, after_first, q.clone());
        }
        for (i, &c) in counters.iter().enumerate() {
            self.edge(c, heads, h.clone());
            self.edge(c, counters.get(i + 1).copied().unwrap_or(tails), q.clone());
        }
    }

    /// One `walk(k, ℓ, dir)`: returns its pending entry state, which is
    /// None-labeled. The walk leaves to `done`.
    fn walk(&mut self, k: u32, ell: u32, dir: Action, done: StateId) -> StateId {
        let pending = self.add(Action::None);
        if k == 0 {
            self.edge(pending, done, Rational::one());
            return pending;
        }
        let mover = self.add(dir);
        self.coin_flips(&[pending, mover], k, ell, mover, done);
        pending
    }

    /// Fair choice from `from` between two walks in directions `a` and `b`.
    fn fair_walks(&mut self, from: StateId, k: u32, ell: u32, a: Action, b: Action, done: StateId) {
        let half = Rational::frac(1, 2);
        let wa = self.walk(k, ell, a, done);
        let wb = self.walk(k, ell, b, done);
        self.edge(from, wa, half.clone());
        self.edge(from, wb, half);
    }

    /// One `search(k, ℓ)` entered at `choice` (which picks the vertical
    /// direction) and leaving to `done`.
    fn search(&mut self, choice: StateId, k: u32, ell: u32, done: StateId) {
        let horizontal = self.add(Action::None);
        self.fair_walks(choice, k, ell, Action::Up, Action::Down, horizontal);
        self.fair_walks(horizontal, k, ell, Action::Right, Action::Left, done);
    }

    fn finish(self, start: StateId) -> Result<Automaton, AlgorithmError> {
        Ok(Automaton::new(start, self.labels, self.rows)?)
    }
}

/// The five-state non-uniform automaton, states ordered
/// origin, up, down, left, right.
///
/// Vertical states leave through a tails flip followed by the horizontal
/// choice, so their rows are: self `1-1/D`, each horizontal state
/// `(1/(2D))(1-1/D)`, origin `1/D²`.
pub fn build_nonuniform(d: u64) -> Result<Automaton, AlgorithmError> {
    check_d(d)?;
    let p = Rational::frac(1, d);
    let stay = p.complement().expect("1/D <= 1");
    let p2 = &p * &p;
    let half = Rational::frac(1, 2);
    let vert = &half * &stay;
    let horiz = &(&half * &p) * &stay;
    let (o, up, down, left, right) = (0, 1, 2, 3, 4);
    let rows = vec![
        vec![
            (o, p2.clone()),
            (up, vert.clone()),
            (down, vert),
            (left, horiz.clone()),
            (right, horiz.clone()),
        ],
        vec![(up, stay.clone()), (left, horiz.clone()), (right, horiz.clone()), (o, p2.clone())],
        vec![(down, stay.clone()), (left, horiz.clone()), (right, horiz), (o, p2)],
        vec![(left, stay.clone()), (o, p.clone())],
        vec![(right, stay), (o, p)],
    ];
    let labels = vec![Action::Origin, Action::Up, Action::Down, Action::Left, Action::Right];
    Ok(Automaton::new(o, labels, rows)?)
}

/// `coin(k, ℓ)` as a fragment: the entry performs the first flip.
pub fn build_coin(k: u32, ell: u32) -> Result<Fragment, AlgorithmError> {
    check_ell(ell)?;
    let mut b = ChainBuilder::default();
    let entry = b.add(Action::Origin);
    let heads = b.add(Action::None);
    let tails = b.add(Action::None);
    b.absorbing(heads);
    b.absorbing(tails);
    b.coin_flips(&[entry], k, ell, heads, tails);
    Ok(Fragment {
        automaton: b.finish(entry)?,
        entry,
        exit: tails,
        heads_exit: Some(heads),
        register_bits: ceil_log2(k as u64),
    })
}

/// `walk(k, ℓ, dir)` as a fragment.
pub fn build_walk(k: u32, ell: u32, dir: Action) -> Result<Fragment, AlgorithmError> {
    check_ell(ell)?;
    if !dir.is_move() {
        return Err(invalid(format!("walk direction must be a move, got {dir}")));
    }
    let mut b = ChainBuilder::default();
    let entry = b.add(Action::Origin);
    let exit = b.add(Action::None);
    b.absorbing(exit);
    if k == 0 {
        b.edge(entry, exit, Rational::one());
    } else {
        let mover = b.add(dir);
        b.coin_flips(&[entry, mover], k, ell, mover, exit);
    }
    Ok(Fragment {
        automaton: b.finish(entry)?,
        entry,
        exit,
        heads_exit: None,
        register_bits: ceil_log2(k as u64),
    })
}

/// `search(k, ℓ)` as a fragment.
pub fn build_search(k: u32, ell: u32) -> Result<Fragment, AlgorithmError> {
    check_ell(ell)?;
    let mut b = ChainBuilder::default();
    let entry = b.add(Action::Origin);
    let exit = b.add(Action::None);
    b.absorbing(exit);
    b.search(entry, k, ell, exit);
    Ok(Fragment {
        automaton: b.finish(entry)?,
        entry,
        exit,
        heads_exit: None,
        register_bits: ceil_log2(k as u64) + 2,
    })
}

/// Smallest `k` with `2^{kℓ} ≥ D`, i.e. `⌈log₂D / ℓ⌉`.
pub fn boost_flips(d: u64, ell: u32) -> u32 {
    let mut k = 0u32;
    while ((k * ell) as u64) < 64 && (1u64 << (k * ell)) < d {
        k += 1;
    }
    k
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonUniformSearch {
    pub automaton: Automaton,
    pub k: u32,
    /// `⌈log₂k⌉ + 3`.
    pub register_bits: u32,
    /// `2^{kℓ} / D`.
    pub overshoot: Rational,
}

/// The non-uniform loop with every `C_{1/D}` flip replaced by
/// `coin(⌈log₂D/ℓ⌉, ℓ)`. State 0 is the origin.
pub fn build_nonuniform_search(d: u64, ell: u32) -> Result<NonUniformSearch, AlgorithmError> {
    check_d(d)?;
    check_ell(ell)?;
    let k = boost_flips(d, ell);
    let mut b = ChainBuilder::default();
    let origin = b.add(Action::Origin);
    b.search(origin, k, ell, origin);
    let overshoot = Rational::pow2_neg(k * ell)
        .recip()
        .expect("nonzero")
        / Rational::frac(d, 1);
    Ok(NonUniformSearch {
        automaton: b.finish(origin)?,
        k,
        register_bits: ceil_log2(k as u64) + 3,
        overshoot,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledUniform {
    pub automaton: Automaton,
    /// Absorbing state entered when the phase cap is exceeded.
    pub cap_state: StateId,
    /// Origin state of each phase, index 0 for phase 1.
    pub phase_origins: Vec<StateId>,
    /// Phase index, phase-coin counter, walk counter and 3 control bits.
    pub register_bits: u32,
}

fn check_uniform(ell: u32, n: u64, big_k: u32) -> Result<(), AlgorithmError> {
    check_ell(ell)?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if big_k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    Ok(())
}

/// The uniform search as an unbounded procedural program.
pub fn build_uniform_search(ell: u32, n: u64, big_k: u32) -> Result<UniformProgram, AlgorithmError> {
    check_uniform(ell, n, big_k)?;
    Ok(UniformProgram { ell, n, big_k })
}

/// The uniform search flattened over phases `1..=phase_cap`.
///
/// Each phase has an Origin-labeled state that is both the return point of
/// its searches and the first flip of its gating coin.
pub fn compile_uniform(
    ell: u32,
    n: u64,
    big_k: u32,
    phase_cap: u32,
) -> Result<CompiledUniform, AlgorithmError> {
    check_uniform(ell, n, big_k)?;
    if !(1..=MAX_PHASE_CAP).contains(&phase_cap) {
        return Err(invalid(format!("cap must be in 1..={MAX_PHASE_CAP}, got {phase_cap}")));
    }
    let mut b = ChainBuilder::default();
    let origins: Vec<StateId> = (0..phase_cap).map(|_| b.add(Action::Origin)).collect();
    let cap_state = b.add(Action::None);
    b.absorbing(cap_state);
    let mut max_gate = 0;
    for i in 1..=phase_cap {
        let home = origins[(i - 1) as usize];
        let next = origins.get(i as usize).copied().unwrap_or(cap_state);
        let choice = b.add(Action::None);
        let gate = phase_coin_flips(i, ell, n, big_k);
        max_gate = max_gate.max(gate);
        b.coin_flips(&[home], gate, ell, choice, next);
        b.search(choice, i, ell, home);
    }
    let cap_bits = ceil_log2(phase_cap as u64);
    Ok(CompiledUniform {
        automaton: b.finish(origins[0])?,
        cap_state,
        phase_origins: origins,
        register_bits: 2 * cap_bits + ceil_log2(max_gate as u64) + 3,
    })
}

/// Origin, then uniform steps among the four move states.
pub fn build_random_walk_baseline() -> Automaton {
    let quarter = Rational::frac(1, 4);
    let to_moves: Vec<(StateId, Rational)> = (1..=4).map(|s| (s, quarter.clone())).collect();
    let mut labels = vec![Action::Origin];
    labels.extend(Action::MOVES);
    Automaton::new(0, labels, vec![to_moves; 5]).expect("baseline is valid")
}

/// Which of the parameterized algorithms to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgorithmSpec {
    NonUniform { d: u64 },
    Coin { k: u32, ell: u32 },
    NonUniformSearch { d: u64, ell: u32 },
    Walk { k: u32, ell: u32, dir: Action },
    Search { k: u32, ell: u32 },
    /// Without a cap the procedural program runs unbounded phases.
    UniformSearch { ell: u32, n: u64, big_k: u32, phase_cap: Option<u32> },
    RandomWalkBaseline,
}

/// A compiled algorithm with its register accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct Built {
    pub automaton: Automaton,
    pub register_bits: Option<u32>,
}

impl AlgorithmSpec {
    pub fn validate(&self) -> Result<(), AlgorithmError> {
        match *self {
            AlgorithmSpec::NonUniform { d } => check_d(d),
            AlgorithmSpec::Coin { ell, .. } | AlgorithmSpec::Search { ell, .. } => check_ell(ell),
            AlgorithmSpec::NonUniformSearch { d, ell } => check_d(d).and_then(|_| check_ell(ell)),
            AlgorithmSpec::Walk { ell, dir, .. } => {
                check_ell(ell)?;
                if dir.is_move() {
                    Ok(())
                } else {
                    Err(invalid(format!("walk direction must be a move, got {dir}")))
                }
            }
            AlgorithmSpec::UniformSearch { ell, n, big_k, phase_cap } => {
                check_uniform(ell, n, big_k)?;
                match phase_cap {
                    Some(c) if !(1..=MAX_PHASE_CAP).contains(&c) => {
                        Err(invalid(format!("cap must be in 1..={MAX_PHASE_CAP}, got {c}")))
                    }
                    _ => Ok(()),
                }
            }
            AlgorithmSpec::RandomWalkBaseline => Ok(()),
        }
    }

    /// Compiles the algorithm. Uncapped uniform search has no finite
    /// automaton and is rejected.
    pub fn build(&self) -> Result<Built, AlgorithmError> {
        let (automaton, bits) = match *self {
            AlgorithmSpec::NonUniform { d } => (build_nonuniform(d)?, None),
            AlgorithmSpec::Coin { k, ell } => {
                let f = build_coin(k, ell)?;
                (f.automaton, Some(f.register_bits))
            }
            AlgorithmSpec::NonUniformSearch { d, ell } => {
                let s = build_nonuniform_search(d, ell)?;
                (s.automaton, Some(s.register_bits))
            }
            AlgorithmSpec::Walk { k, ell, dir } => {
                let f = build_walk(k, ell, dir)?;
                (f.automaton, Some(f.register_bits))
            }
            AlgorithmSpec::Search { k, ell } => {
                let f = build_search(k, ell)?;
                (f.automaton, Some(f.register_bits))
            }
            AlgorithmSpec::UniformSearch { ell, n, big_k, phase_cap } => {
                let Some(cap) = phase_cap else {
                    return Err(invalid(
                        "uniform search needs cap=<phases> to compile to an automaton",
                    ));
                };
                let c = compile_uniform(ell, n, big_k, cap)?;
                (c.automaton, Some(c.register_bits))
            }
            AlgorithmSpec::RandomWalkBaseline => (build_random_walk_baseline(), None),
        };
        Ok(Built {
            automaton,
            register_bits: bits,
        })
    }

    /// The runnable program: the compiled automaton, or the procedural
    /// interpreter for uncapped uniform search.
    pub fn program(&self) -> Result<AgentProgram, AlgorithmError> {
        self.validate()?;
        match *self {
            AlgorithmSpec::UniformSearch { ell, n, big_k, phase_cap: None } => {
                Ok(AgentProgram::Uniform(build_uniform_search(ell, n, big_k)?))
            }
            _ => Ok(AgentProgram::Compiled(self.build()?.automaton)),
        }
    }

    /// The `ℓ` parameter, for specs that have one.
    pub fn ell(&self) -> Option<u32> {
        match *self {
            AlgorithmSpec::Coin { ell, .. }
            | AlgorithmSpec::NonUniformSearch { ell, .. }
            | AlgorithmSpec::Walk { ell, .. }
            | AlgorithmSpec::Search { ell, .. }
            | AlgorithmSpec::UniformSearch { ell, .. } => Some(ell),
            AlgorithmSpec::NonUniform { .. } | AlgorithmSpec::RandomWalkBaseline => None,
        }
    }

    /// Replaces `D` for specs parameterized by distance.
    pub fn with_d(self, new_d: u64) -> Self {
        match self {
            AlgorithmSpec::NonUniform { .. } => AlgorithmSpec::NonUniform { d: new_d },
            AlgorithmSpec::NonUniformSearch { ell, .. } => {
                AlgorithmSpec::NonUniformSearch { d: new_d, ell }
            }
            other => other,
        }
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AlgorithmSpec::NonUniform { d } => write!(f, "nonuniform:D={d}"),
            AlgorithmSpec::Coin { k, ell } => write!(f, "coin:k={k},l={ell}"),
            AlgorithmSpec::NonUniformSearch { d, ell } => write!(f, "nonuniform-search:D={d},l={ell}"),
            AlgorithmSpec::Walk { k, ell, dir } => write!(f, "walk:k={k},l={ell},dir={dir}"),
            AlgorithmSpec::Search { k, ell } => write!(f, "search:k={k},l={ell}"),
            AlgorithmSpec::UniformSearch { ell, n, big_k, phase_cap } => {
                write!(f, "uniform:l={ell},n={n},K={big_k}")?;
                if let Some(c) = phase_cap {
                    write!(f, ",cap={c}")?;
                }
                Ok(())
            }
            AlgorithmSpec::RandomWalkBaseline => write!(f, "walkbaseline"),
        }
    }
}

struct Params<'a> {
    spec: &'a str,
    values: BTreeMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn parse(spec: &'a str, body: &'a str, allowed: &[&str]) -> Result<Self, AlgorithmError> {
        let mut values = BTreeMap::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| AlgorithmError::Parse {
                spec: spec.to_string(),
                reason: format!("expected key=value, got {part:?}"),
            })?;
            let key = key.trim();
            if !allowed.contains(&key) {
                return Err(AlgorithmError::Parse {
                    spec: spec.to_string(),
                    reason: format!("unknown key {key:?}; expected one of {}", allowed.join(", ")),
                });
            }
            if values.insert(key, value.trim()).is_some() {
                return Err(AlgorithmError::Parse {
                    spec: spec.to_string(),
                    reason: format!("key {key:?} given twice"),
                });
            }
        }
        Ok(Params { spec, values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, AlgorithmError> {
        self.values
            .get(key)
            .map(|v| {
                v.parse().map_err(|_| AlgorithmError::Parse {
                    spec: self.spec.to_string(),
                    reason: format!("bad value {v:?} for {key}"),
                })
            })
            .transpose()
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T, AlgorithmError> {
        self.get(key)?.ok_or_else(|| AlgorithmError::Parse {
            spec: self.spec.to_string(),
            reason: format!("missing {key}="),
        })
    }
}

/// Default gating constant for uniform search.
pub const DEFAULT_K: u32 = 4;

impl FromStr for AlgorithmSpec {
    type Err = AlgorithmError;

    /// Parses `name:key=value,...`, e.g. `nonuniform:D=64` or
    /// `uniform:l=2,n=16,K=4,cap=8`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let p = |allowed: &[&str]| Params::parse(s, body, allowed);
        let spec = match name {
            "nonuniform" => AlgorithmSpec::NonUniform { d: p(&["D"])?.req("D")? },
            "coin" => {
                let p = p(&["k", "l"])?;
                AlgorithmSpec::Coin { k: p.req("k")?, ell: p.req("l")? }
            }
            "nonuniform-search" => {
                let p = p(&["D", "l"])?;
                AlgorithmSpec::NonUniformSearch { d: p.req("D")?, ell: p.req("l")? }
            }
            "walk" => {
                let p = p(&["k", "l", "dir"])?;
                AlgorithmSpec::Walk { k: p.req("k")?, ell: p.req("l")?, dir: p.req("dir")? }
            }
            "search" => {
                let p = p(&["k", "l"])?;
                AlgorithmSpec::Search { k: p.req("k")?, ell: p.req("l")? }
            }
            "uniform" => {
                let p = p(&["l", "n", "K", "cap"])?;
                AlgorithmSpec::UniformSearch {
                    ell: p.req("l")?,
                    n: p.req("n")?,
                    big_k: p.get("K")?.unwrap_or(DEFAULT_K),
                    phase_cap: p.get("cap")?,
                }
            }
            "walkbaseline" => {
                p(&[])?;
                AlgorithmSpec::RandomWalkBaseline
            }
            other => {
                return Err(AlgorithmError::Parse {
                    spec: s.to_string(),
                    reason: format!(
                        "unknown algorithm {other:?}; expected nonuniform, coin, nonuniform-search, \
                         walk, search, uniform or walkbaseline"
                    ),
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Either a compiled automaton or the procedural uniform search.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentProgram {
    Compiled(Automaton),
    Uniform(UniformProgram),
}

impl AgentProgram {
    pub fn automaton(&self) -> Option<&Automaton> {
        match self {
            AgentProgram::Compiled(a) => Some(a),
            AgentProgram::Uniform(_) => None,
        }
    }
}

pub enum AgentWalker<'a> {
    Compiled(AutomatonWalker<'a>),
    Uniform(UniformWalker),
}

impl Walker for AgentWalker<'_> {
    fn state(&self) -> StateId {
        match self {
            AgentWalker::Compiled(w) => w.state(),
            AgentWalker::Uniform(w) => w.state(),
        }
    }

    #[inline]
    fn next_action(&mut self, rng: &mut AgentRng) -> Option<Action> {
        match self {
            AgentWalker::Compiled(w) => w.next_action(rng),
            AgentWalker::Uniform(w) => w.next_action(rng),
        }
    }
}

impl Program for AgentProgram {
    type Walker<'a> = AgentWalker<'a>;

    fn walker(&self) -> AgentWalker<'_> {
        match self {
            AgentProgram::Compiled(a) => AgentWalker::Compiled(a.walker()),
            AgentProgram::Uniform(u) => AgentWalker::Uniform(u.walker()),
        }
    }
}

// Closed forms.

/// Exact expected moves of one non-uniform iteration: two geometric walks
/// with mean `D - 1` each.
pub fn expected_iteration_moves(d: u64) -> Result<Rational, AlgorithmError> {
    check_d(d)?;
    Ok(Rational::frac(2 * (d - 1), 1))
}

/// Probability that one vertical-then-horizontal pass, whose walks stop
/// with probability `p` before each move, steps onto `target`. The origin
/// counts as visited.
pub fn l_path_visit_probability(p: &Rational, target: GridPoint) -> Rational {
    let cont = p.complement().expect("p <= 1");
    let half = Rational::frac(1, 2);
    let reach = |len: i64| &half * &cont.pow(len.unsigned_abs() as u32);
    match (target.x, target.y) {
        (0, 0) => Rational::one(),
        (0, y) => reach(y),
        (x, 0) => p * &reach(x),
        (x, y) => &(&reach(y) * p) * &reach(x),
    }
}

/// Exact probability that one non-uniform iteration visits `target`.
pub fn hit_probability_per_iteration(d: u64, target: GridPoint) -> Result<Rational, AlgorithmError> {
    check_d(d)?;
    if target == GridPoint::ORIGIN || target.max_norm() > d {
        return Err(AlgorithmError::TargetOutOfRange(target));
    }
    Ok(l_path_visit_probability(&Rational::frac(1, d), target))
}

/// Exact probability that `search(k, ℓ)` visits `target`.
pub fn search_visit_probability(k: u32, ell: u32, target: GridPoint) -> Rational {
    l_path_visit_probability(&Rational::pow2_neg(k * ell), target)
}

/// `P[walk(k, ℓ, ·) makes exactly i moves] = (1 - 2^{-kℓ})^i 2^{-kℓ}`.
pub fn walk_pmf(k: u32, ell: u32, i: u32) -> Rational {
    let q = Rational::pow2_neg(k * ell);
    &q.complement().expect("q <= 1").pow(i) * &q
}

/// Displacement law of one vertical-then-horizontal pass with stop
/// probability `p`, keyed by `(dx, dy)`, for passes of at most `max_moves`.
pub fn l_path_displacement_law(p: &Rational, max_moves: u64) -> BTreeMap<(i64, i64), Rational> {
    let cont = p.complement().expect("p <= 1");
    let leg = |len: i64| -> Rational {
        if len == 0 {
            p.clone()
        } else {
            &(&Rational::frac(1, 2) * &cont.pow(len.unsigned_abs() as u32)) * p
        }
    };
    let m = max_moves as i64;
    let mut law = BTreeMap::new();
    for dy in -m..=m {
        for dx in -(m - dy.abs())..=(m - dy.abs()) {
            law.insert((dx, dy), &leg(dy) * &leg(dx));
        }
    }
    law
}

/// `⌊log₂n/ℓ⌋`-shifted exponent of `ρ_i`: `(K + max(i - ⌊log₂n/ℓ⌋, 0))ℓ`.
pub fn rho_exponent(i: u32, ell: u32, n: u64, big_k: u32) -> u32 {
    phase_coin_flips(i, ell, n, big_k) * ell
}

/// `ρ_i`, the expected number of gating flips until the phase ends.
pub fn rho(i: u32, ell: u32, n: u64, big_k: u32) -> Rational {
    Rational::pow2_neg(rho_exponent(i, ell, n, big_k)).recip().expect("nonzero")
}

/// Expected `search` calls by one agent in phase `i`: `ρ_i(1 - 1/ρ_i)`.
pub fn expected_search_calls(i: u32, ell: u32, n: u64, big_k: u32) -> Rational {
    let r = rho(i, ell, n, big_k);
    r.checked_sub(&Rational::one()).expect("rho >= 1")
}

/// The first phase whose search square reaches distance `D`:
/// `⌈log_{2^ℓ} D⌉`.
pub fn first_covering_phase(d: u64, ell: u32) -> u32 {
    boost_flips(d, ell)
}

/// `4 ρ_i 2^{iℓ}`.
pub fn phase_move_bound(i: u32, ell: u32, n: u64, big_k: u32) -> Rational {
    let side = Rational::pow2_neg(i * ell).recip().expect("nonzero");
    &(&Rational::frac(4, 1) * &rho(i, ell, n, big_k)) * &side
}

/// Exact expected moves until an agent completes phase `i`:
/// `Σ_{i'≤i} (ρ_{i'} - 1) · 2(2^{i'ℓ} - 1)`.
pub fn expected_moves_through_phase(i: u32, ell: u32, n: u64, big_k: u32) -> Rational {
    (1..=i)
        .map(|j| {
            let walk_mean = Rational::pow2_neg(j * ell)
                .recip()
                .expect("nonzero")
                .checked_sub(&Rational::one())
                .expect(">= 1");
            &(&expected_search_calls(j, ell, n, big_k) * &Rational::frac(2, 1)) * &walk_mean
        })
        .sum()
}

// Exact enumeration over compiled automata.

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Event {
    Move(StateId),
    End(StateId),
}

/// For each state, the law of the next move state or end state reached
/// through non-move states.
struct SilentClosure<'a, F> {
    automaton: &'a Automaton,
    is_end: F,
    memo: HashMap<StateId, Vec<(Event, Rational)>>,
}

impl<'a, F: Fn(StateId) -> bool> SilentClosure<'a, F> {
    fn new(automaton: &'a Automaton, is_end: F) -> Self {
        SilentClosure {
            automaton,
            is_end,
            memo: HashMap::new(),
        }
    }

    fn from(&mut self, s: StateId) -> Result<Vec<(Event, Rational)>, AlgorithmError> {
        let mut stack = Vec::new();
        self.resolve_row(s, &mut stack)
    }

    fn resolve_row(
        &mut self,
        s: StateId,
        stack: &mut Vec<StateId>,
    ) -> Result<Vec<(Event, Rational)>, AlgorithmError> {
        let mut acc: BTreeMap<Event, Rational> = BTreeMap::new();
        for t in self.automaton.row(s).to_vec() {
            if (self.is_end)(t.to) {
                add_mass(&mut acc, Event::End(t.to), t.prob);
            } else if self.automaton.label(t.to).is_move() {
                add_mass(&mut acc, Event::Move(t.to), t.prob);
            } else {
                for (ev, p) in self.silent(t.to, stack)? {
                    add_mass(&mut acc, ev, &p * &t.prob);
                }
            }
        }
        Ok(acc.into_iter().collect())
    }

    fn silent(
        &mut self,
        s: StateId,
        stack: &mut Vec<StateId>,
    ) -> Result<Vec<(Event, Rational)>, AlgorithmError> {
        if let Some(v) = self.memo.get(&s) {
            return Ok(v.clone());
        }
        if stack.contains(&s) {
            return Err(AlgorithmError::SilentCycle(s));
        }
        stack.push(s);
        let v = self.resolve_row(s, stack)?;
        stack.pop();
        self.memo.insert(s, v.clone());
        Ok(v)
    }
}

fn add_mass<K: Ord>(acc: &mut BTreeMap<K, Rational>, key: K, p: Rational) {
    let slot = acc.entry(key).or_insert_with(Rational::zero);
    *slot = &*slot + &p;
}

/// Exact law of one pass through an automaton from `entry` until it enters
/// a state satisfying `is_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct PassLaw {
    /// Mass of passes ending with displacement `(dx, dy)` after `moves`
    /// moves; the displacement is taken before the end state's action.
    pub outcomes: BTreeMap<(i64, i64, u64), Rational>,
    /// Expected arrivals by a move at each cell, over passes of at most
    /// `max_moves` moves.
    pub arrivals: BTreeMap<(i64, i64), Rational>,
    /// Mass of passes still running after `max_moves` moves.
    pub truncated: Rational,
}

/// Enumerates one pass layer by layer in the number of moves. Non-move
/// states must not form cycles outside the end set.
pub fn pass_law<F: Fn(StateId) -> bool>(
    automaton: &Automaton,
    entry: StateId,
    is_end: F,
    max_moves: u64,
) -> Result<PassLaw, AlgorithmError> {
    let mut closure = SilentClosure::new(automaton, is_end);
    let mut law = PassLaw {
        outcomes: BTreeMap::new(),
        arrivals: BTreeMap::new(),
        truncated: Rational::zero(),
    };
    let mut layer: BTreeMap<(StateId, i64, i64), Rational> = BTreeMap::new();
    layer.insert((entry, 0, 0), Rational::one());
    for moves in 0..=max_moves {
        let mut next = BTreeMap::new();
        for ((s, x, y), mass) in layer {
            for (ev, p) in closure.from(s)? {
                let m = &mass * &p;
                match ev {
                    Event::End(_) => add_mass(&mut law.outcomes, (x, y, moves), m),
                    Event::Move(_) if moves == max_moves => law.truncated = &law.truncated + &m,
                    Event::Move(t) => {
                        let q = apply_action(GridPoint::new(x, y), automaton.label(t));
                        add_mass(&mut law.arrivals, (q.x, q.y), m.clone());
                        add_mass(&mut next, (t, q.x, q.y), m);
                    }
                }
            }
        }
        layer = next;
        if layer.is_empty() {
            break;
        }
    }
    Ok(law)
}

/// Exact probability that a pass from `entry` steps onto `target` within
/// `max_moves` moves, tracking first visits only.
pub fn pass_visit_probability<F: Fn(StateId) -> bool>(
    automaton: &Automaton,
    entry: StateId,
    is_end: F,
    target: GridPoint,
    max_moves: u64,
) -> Result<Rational, AlgorithmError> {
    let mut closure = SilentClosure::new(automaton, is_end);
    let mut hit = Rational::zero();
    let mut layer: BTreeMap<(StateId, i64, i64), Rational> = BTreeMap::new();
    layer.insert((entry, 0, 0), Rational::one());
    for _ in 0..max_moves {
        let mut next = BTreeMap::new();
        for ((s, x, y), mass) in layer {
            for (ev, p) in closure.from(s)? {
                if let Event::Move(t) = ev {
                    let m = &mass * &p;
                    let q = apply_action(GridPoint::new(x, y), automaton.label(t));
                    if q == target {
                        hit = &hit + &m;
                    } else {
                        add_mass(&mut next, (t, q.x, q.y), m);
                    }
                }
            }
        }
        layer = next;
        if layer.is_empty() {
            break;
        }
    }
    Ok(hit)
}

/// `χ` of an algorithm's compiled automaton, with its register accounting.
pub fn measured_chi(spec: &AlgorithmSpec) -> Result<(ChiMetric, Option<u32>), AlgorithmError> {
    let built = spec.build()?;
    Ok((built.automaton.chi(), built.register_bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: i64, y: i64) -> GridPoint {
        GridPoint::new(x, y)
    }

    #[test]
    fn nonuniform_rows_match_labels() {
        let a = build_nonuniform(2).unwrap();
        assert_eq!(a.prob(0, 0), Rational::frac(1, 4));
        assert_eq!(a.prob(0, 1), Rational::frac(1, 4));
        assert_eq!(a.prob(1, 0), Rational::frac(1, 4));
        assert_eq!(a.prob(3, 0), Rational::frac(1, 2));
        for row in a.transition_matrix() {
            assert_eq!(row.iter().sum::<Rational>(), Rational::one());
        }
        let chi = build_nonuniform(16).unwrap().chi();
        assert_eq!((chi.b, chi.ell), (3, 8));
        assert!(build_nonuniform(1).is_err());
    }

    #[test]
    fn fragment_register_bits() {
        for (k, bits) in [(2, 1), (4, 2), (8, 3), (3, 2)] {
            assert_eq!(build_coin(k, 2).unwrap().register_bits, bits);
        }
        assert_eq!(build_search(4, 1).unwrap().register_bits, 4);
    }

    #[test]
    fn nonuniform_search_size_and_chi() {
        let s = build_nonuniform_search(256, 2).unwrap();
        assert_eq!(s.k, 4);
        assert_eq!(s.automaton.state_count(), 22);
        let chi = s.automaton.chi();
        assert_eq!((chi.b, chi.ell, chi.chi), (5, 2, 6.0));
        assert_eq!(s.register_bits, 5);
        assert_eq!(s.overshoot, Rational::one());
        let s = build_nonuniform_search(5, 2).unwrap();
        assert_eq!((s.k, s.overshoot.clone()), (2, Rational::frac(16, 5)));
    }

    #[test]
    fn boost_flips_is_ceiling() {
        assert_eq!(boost_flips(2, 1), 1);
        assert_eq!(boost_flips(256, 2), 4);
        assert_eq!(boost_flips(257, 2), 5);
        assert_eq!(boost_flips(10, 2), 2);
        assert_eq!(first_covering_phase(10, 2), 2);
    }

    #[test]
    fn hit_probability_examples() {
        assert_eq!(hit_probability_per_iteration(2, p(1, 0)).unwrap(), Rational::frac(1, 8));
        assert_eq!(hit_probability_per_iteration(2, p(0, 1)).unwrap(), Rational::frac(1, 4));
        assert!(hit_probability_per_iteration(2, p(3, 0)).is_err());
        assert!(hit_probability_per_iteration(2, p(0, 0)).is_err());
    }

    #[test]
    fn compiled_iteration_matches_closed_form() {
        for d in [2u64, 3, 4] {
            let a = build_nonuniform(d).unwrap();
            let law = pass_law(&a, 0, |s| s == 0, 6).unwrap();
            let oracle = l_path_displacement_law(&Rational::frac(1, d), 6);
            for ((dx, dy), mass) in &oracle {
                let m = (dx.abs() + dy.abs()) as u64;
                let got = law.outcomes.get(&(*dx, *dy, m)).cloned().unwrap_or_else(Rational::zero);
                assert_eq!(&got, mass, "D={d} ({dx},{dy})");
            }
        }
    }

    #[test]
    fn walk_pmf_examples() {
        let w = build_walk(1, 1, Action::Up).unwrap();
        let law = pass_law(&w.automaton, w.entry, |s| s == w.exit, 8).unwrap();
        for i in 0..=8u64 {
            let got = law.outcomes.get(&(0, i as i64, i)).cloned().unwrap_or_else(Rational::zero);
            assert_eq!(got, walk_pmf(1, 1, i as u32));
        }
        assert_eq!(walk_pmf(1, 2, 0), Rational::frac(1, 4));
        let at_least_two = Rational::one()
            .checked_sub(&(walk_pmf(1, 1, 0) + walk_pmf(1, 1, 1)))
            .unwrap();
        assert_eq!(at_least_two, Rational::frac(1, 4));
    }

    #[test]
    fn search_visit_dp_agrees_with_first_visit() {
        let f = build_search(1, 2).unwrap();
        let law = pass_law(&f.automaton, f.entry, |s| s == f.exit, 8).unwrap();
        for t in [p(1, 1), p(2, 1), p(-2, 3), p(0, 2), p(3, 0)] {
            let first = pass_visit_probability(&f.automaton, f.entry, |s| s == f.exit, t, 8).unwrap();
            assert_eq!(law.arrivals[&(t.x, t.y)], first);
            assert_eq!(first, search_visit_probability(1, 2, t));
        }
        assert!(search_visit_probability(1, 2, p(1, 1)) >= Rational::frac(1, 256));
    }

    #[test]
    fn uniform_closed_forms() {
        assert_eq!(rho(1, 1, 4, 2), Rational::frac(4, 1));
        assert_eq!(rho(3, 1, 4, 2), Rational::frac(8, 1));
        assert_eq!(expected_search_calls(3, 1, 4, 2), Rational::frac(7, 1));
        assert_eq!(phase_move_bound(3, 1, 4, 2), Rational::frac(256, 1));
        assert_eq!(expected_moves_through_phase(3, 1, 4, 2), Rational::frac(122, 1));
    }

    #[test]
    fn compiled_uniform_layout() {
        let c = compile_uniform(1, 4, 2, 3).unwrap();
        assert_eq!(c.automaton.start(), c.phase_origins[0]);
        assert!(c.automaton.is_halting(c.cap_state));
        assert_eq!(c.automaton.chi().ell, 1);
    }

    #[test]
    fn baseline_shape() {
        let a = build_random_walk_baseline();
        let chi = a.chi();
        assert_eq!((chi.b, chi.ell), (3, 2));
        assert_eq!(a.prob(0, 0), Rational::zero());
    }

    #[test]
    fn spec_roundtrip() {
        for s in [
            "nonuniform:D=64",
            "coin:k=3,l=2",
            "nonuniform-search:D=256,l=2",
            "walk:k=1,l=1,dir=up",
            "search:k=2,l=1",
            "uniform:l=2,n=16,K=4,cap=8",
            "uniform:l=1,n=4,K=4",
            "walkbaseline",
        ] {
            let spec: AlgorithmSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("nonuniform:D=1".parse::<AlgorithmSpec>().is_err());
        assert!("nonuniform:X=3".parse::<AlgorithmSpec>().is_err());
        assert!("walk:k=1,l=1,dir=origin".parse::<AlgorithmSpec>().is_err());
        assert!("teleport".parse::<AlgorithmSpec>().is_err());
        assert!(matches!(
            "uniform:l=1,n=4".parse::<AlgorithmSpec>().unwrap().program().unwrap(),
            AgentProgram::Uniform(_)
        ));
    }
}
