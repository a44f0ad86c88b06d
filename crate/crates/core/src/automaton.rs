//! Agent programs as labeled finite Markov chains with exact probabilities.
//!
//! An [`Automaton`] can only be obtained through validation, so every value
//! of the type satisfies the model constraints: rows are exactly stochastic,
//! every state carries an action label, the start state is labeled
//! [`Action::Origin`] and all transition targets exist. The unvalidated form
//! is [`RawAutomaton`], which is also the JSON file format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

pub type StateId = usize;

/// What an agent does on the grid when it enters a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Origin,
    None,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Origin,
        Action::None,
    ];

    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    /// True for the four grid moves; `Origin` and `None` are not moves.
    pub fn is_move(self) -> bool {
        matches!(self, Action::Up | Action::Down | Action::Left | Action::Right)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Origin => "origin",
            Action::None => "none",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTransition {
    pub to: StateId,
    pub num: u64,
    pub den: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawState {
    pub id: StateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Action>,
    #[serde(default)]
    pub transitions: Vec<RawTransition>,
}

/// Unvalidated automaton, exactly as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAutomaton {
    pub start: StateId,
    pub states: Vec<RawState>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoStates,
    DuplicateState { id: StateId },
    /// State ids must be exactly `0..|S|`.
    NonDenseIds { expected: usize, found: StateId },
    MissingLabel { state: StateId },
    UnknownStart { start: StateId },
    StartNotOrigin { label: Option<Action> },
    DanglingTransition { state: StateId, to: StateId },
    ZeroDenominator { state: StateId },
    RowNotStochastic { state: StateId, sum: Rational },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "automaton has no states"),
            Violation::DuplicateState { id } => write!(f, "state {id} declared twice"),
            Violation::NonDenseIds { expected, found } => {
                write!(f, "state ids must be 0..n-1: expected {expected}, found {found}")
            }
            Violation::MissingLabel { state } => write!(f, "state {state} has no label"),
            Violation::UnknownStart { start } => write!(f, "start state {start} is not declared"),
            Violation::StartNotOrigin { label } => match label {
                Some(l) => write!(f, "start must be Origin, found {l}"),
                None => write!(f, "start must be Origin, found no label"),
            },
            Violation::DanglingTransition { state, to } => {
                write!(f, "state {state} transitions to undeclared state {to}")
            }
            Violation::ZeroDenominator { state } => {
                write!(f, "state {state} has a transition with zero denominator")
            }
            Violation::RowNotStochastic { state, sum } => {
                write!(f, "row not stochastic: state {state} sums to {sum}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

#[derive(Debug, Error)]
pub enum AutomatonError {
    #[error("invalid automaton: {0}")]
    Invalid(ValidationReport),
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("initial distribution has {got} entries, automaton has {expected} states")]
    DistributionLength { expected: usize, got: usize },
    #[error("initial distribution sums to {0}, not 1")]
    DistributionNotNormalized(Rational),
    #[error("exact rationals exceeded the {max_bits}-bit size budget after {steps} steps")]
    RationalOverflow { max_bits: u64, steps: u64 },
    #[error("malformed automaton JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
}

/// Size limit for exact rational computations before callers should switch
/// to floating point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeBudget {
    pub max_bits: u64,
}

impl Default for SizeBudget {
    fn default() -> Self {
        SizeBudget { max_bits: 1 << 14 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub to: StateId,
    pub prob: Rational,
}

/// Memory bits, probability resolution and selection complexity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiMetric {
    pub b: u32,
    pub ell: u32,
    pub chi: f64,
}

impl ChiMetric {
    pub fn from_parts(b: u32, ell: u32) -> Self {
        ChiMetric {
            b,
            ell,
            chi: b as f64 + (ell as f64).log2(),
        }
    }
}

impl fmt::Display for ChiMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b={} ℓ={} χ={}", self.b, self.ell, fmt_real(self.chi))
    }
}

fn fmt_real(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x:.4}")
    }
}

/// `⌈log₂ n⌉`, with `ceil_log2(0) = ceil_log2(1) = 0`.
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

#[derive(Clone, Debug)]
enum RowSampler {
    Fixed(StateId),
    Exact {
        denom: u64,
        cumulative: Vec<u64>,
        targets: Vec<StateId>,
    },
    Float {
        cumulative: Vec<f64>,
        targets: Vec<StateId>,
    },
}

impl RowSampler {
    fn build(row: &[Transition]) -> RowSampler {
        if row.len() == 1 {
            return RowSampler::Fixed(row[0].to);
        }
        let targets: Vec<StateId> = row.iter().map(|t| t.to).collect();
        let mut lcm = BigInt::from(1u8);
        for t in row {
            lcm = lcm.lcm(t.prob.denom());
        }
        if let Some(denom) = lcm.to_u64() {
            let mut acc = 0u64;
            let cumulative = row
                .iter()
                .map(|t| {
                    let scaled = t.prob.numer() * (&lcm / t.prob.denom());
                    acc += scaled.to_u64().expect("fits below lcm");
                    acc
                })
                .collect();
            RowSampler::Exact {
                denom,
                cumulative,
                targets,
            }
        } else {
            let mut acc = 0.0;
            let cumulative = row
                .iter()
                .map(|t| {
                    acc += t.prob.to_f64();
                    acc
                })
                .collect();
            RowSampler::Float {
                cumulative,
                targets,
            }
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateId {
        match self {
            RowSampler::Fixed(s) => *s,
            RowSampler::Exact {
                denom,
                cumulative,
                targets,
            } => {
                let u = rng.gen_range(0..*denom);
                let i = cumulative.iter().position(|&c| u < c).unwrap_or(targets.len() - 1);
                targets[i]
            }
            RowSampler::Float {
                cumulative,
                targets,
            } => {
                let u: f64 = rng.gen::<f64>() * cumulative[cumulative.len() - 1];
                let i = cumulative.iter().position(|&c| u < c).unwrap_or(targets.len() - 1);
                targets[i]
            }
        }
    }
}

/// A validated agent automaton. Immutable; cheap to share across threads.
#[derive(Clone, Debug)]
pub struct Automaton {
    start: StateId,
    labels: Vec<Action>,
    rows: Vec<Vec<Transition>>,
    samplers: Vec<RowSampler>,
    halting: Vec<bool>,
}

impl PartialEq for Automaton {
    fn eq(&self, other: &Self) -> bool {
        self.start == other.start && self.labels == other.labels && self.rows == other.rows
    }
}

fn check_parts(
    start: StateId,
    labels: &[Option<Action>],
    rows: &[Vec<(StateId, Rational)>],
    report: &mut ValidationReport,
) {
    let n = labels.len();
    if n == 0 {
        report.violations.push(Violation::NoStates);
        return;
    }
    for (s, label) in labels.iter().enumerate() {
        if label.is_none() {
            report.violations.push(Violation::MissingLabel { state: s });
        }
    }
    if start >= n {
        report.violations.push(Violation::UnknownStart { start });
    } else if labels[start] != Some(Action::Origin) {
        report.violations.push(Violation::StartNotOrigin {
            label: labels[start],
        });
    }
    for (s, row) in rows.iter().enumerate() {
        for (to, _) in row {
            if *to >= n {
                report
                    .violations
                    .push(Violation::DanglingTransition { state: s, to: *to });
            }
        }
        let sum: Rational = row.iter().map(|(_, p)| p).sum();
        if !sum.is_one() {
            report
                .violations
                .push(Violation::RowNotStochastic { state: s, sum });
        }
    }
}

/// Checks `raw` against the model constraints.
pub fn validate(raw: &RawAutomaton) -> ValidationReport {
    let mut report = ValidationReport::default();
    parts_from_raw(raw, &mut report);
    report
}

type Parts = (Vec<Option<Action>>, Vec<Vec<(StateId, Rational)>>);

fn parts_from_raw(raw: &RawAutomaton, report: &mut ValidationReport) -> Option<Parts> {
    let n = raw.states.len();
    let mut by_id: BTreeMap<StateId, &RawState> = BTreeMap::new();
    for st in &raw.states {
        if by_id.insert(st.id, st).is_some() {
            report.violations.push(Violation::DuplicateState { id: st.id });
        }
    }
    for (expected, &id) in by_id.keys().enumerate() {
        if id != expected {
            report.violations.push(Violation::NonDenseIds {
                expected,
                found: id,
            });
            break;
        }
    }
    if !report.is_ok() {
        return None;
    }
    let mut labels = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for (id, st) in by_id {
        labels.push(st.label);
        let mut row = Vec::with_capacity(st.transitions.len());
        for t in &st.transitions {
            match Rational::new(t.num, t.den) {
                Ok(p) => row.push((t.to, p)),
                Err(_) => report.violations.push(Violation::ZeroDenominator { state: id }),
            }
        }
        rows.push(row);
    }
    check_parts(raw.start, &labels, &rows, report);
    report.is_ok().then_some((labels, rows))
}

impl Automaton {
    /// Builds and validates an automaton. Duplicate targets within a row are
    /// merged and zero-probability transitions dropped.
    pub fn new(
        start: StateId,
        labels: Vec<Action>,
        rows: Vec<Vec<(StateId, Rational)>>,
    ) -> Result<Self, AutomatonError> {
        let opt_labels: Vec<Option<Action>> = labels.iter().copied().map(Some).collect();
        let mut report = ValidationReport::default();
        if rows.len() != labels.len() {
            report.violations.push(Violation::NonDenseIds {
                expected: labels.len(),
                found: rows.len(),
            });
        }
        check_parts(start, &opt_labels, &rows, &mut report);
        if !report.is_ok() {
            return Err(AutomatonError::Invalid(report));
        }
        Ok(Self::assemble(start, labels, rows))
    }

    pub fn from_raw(raw: &RawAutomaton) -> Result<Self, AutomatonError> {
        let mut report = ValidationReport::default();
        match parts_from_raw(raw, &mut report) {
            Some((labels, rows)) => Ok(Self::assemble(
                raw.start,
                labels.into_iter().map(|l| l.expect("validated")).collect(),
                rows,
            )),
            None => Err(AutomatonError::Invalid(report)),
        }
    }

    fn assemble(start: StateId, labels: Vec<Action>, rows: Vec<Vec<(StateId, Rational)>>) -> Self {
        let rows: Vec<Vec<Transition>> = rows
            .into_iter()
            .map(|row| {
                let mut merged: BTreeMap<StateId, Rational> = BTreeMap::new();
                for (to, p) in row {
                    if p.is_zero() {
                        continue;
                    }
                    let e = merged.entry(to).or_insert_with(Rational::zero);
                    *e = &*e + &p;
                }
                merged
                    .into_iter()
                    .map(|(to, prob)| Transition { to, prob })
                    .collect()
            })
            .collect();
        let samplers = rows.iter().map(|r| RowSampler::build(r)).collect();
        let halting = rows
            .iter()
            .enumerate()
            .map(|(s, r)| r.len() == 1 && r[0].to == s && !labels[s].is_move())
            .collect();
        Automaton {
            start,
            labels,
            rows,
            samplers,
            halting,
        }
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn state_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, s: StateId) -> Action {
        self.labels[s]
    }

    pub fn labels(&self) -> &[Action] {
        &self.labels
    }

    pub fn row(&self, s: StateId) -> &[Transition] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Vec<Transition>] {
        &self.rows
    }

    /// Exact probability of the one-step transition `from -> to`.
    pub fn prob(&self, from: StateId, to: StateId) -> Rational {
        self.rows[from]
            .iter()
            .find(|t| t.to == to)
            .map(|t| t.prob.clone())
            .unwrap_or_else(Rational::zero)
    }

    /// Dense transition matrix, row-major.
    pub fn transition_matrix(&self) -> Vec<Vec<Rational>> {
        let n = self.state_count();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![Rational::zero(); n];
                for t in row {
                    dense[t.to] = t.prob.clone();
                }
                dense
            })
            .collect()
    }

    /// Smallest nonzero transition probability (`p₀`).
    pub fn min_probability(&self) -> Rational {
        self.rows
            .iter()
            .flatten()
            .map(|t| &t.prob)
            .min()
            .cloned()
            .expect("a valid automaton has at least one transition")
    }

    pub fn chi(&self) -> ChiMetric {
        let b = ceil_log2(self.state_count() as u64);
        let ell = self
            .min_probability()
            .resolution_exponent()
            .expect("nonzero")
            .max(1);
        ChiMetric::from_parts(b, ell)
    }

    /// True when `s` is absorbing and can never move the agent again.
    pub fn is_halting(&self, s: StateId) -> bool {
        self.halting[s]
    }

    /// Draws the successor of `s`.
    pub fn sample_step<R: Rng + ?Sized>(&self, s: StateId, rng: &mut R) -> Result<StateId, AutomatonError> {
        self.samplers
            .get(s)
            .map(|smp| smp.sample(rng))
            .ok_or(AutomatonError::UnknownState(s))
    }

    #[inline]
    pub(crate) fn step_unchecked<R: Rng + ?Sized>(&self, s: StateId, rng: &mut R) -> StateId {
        self.samplers[s].sample(rng)
    }

    /// Exact `init · P^k`.
    pub fn step_distribution(
        &self,
        init: &[Rational],
        k: u64,
        budget: SizeBudget,
    ) -> Result<Vec<Rational>, AutomatonError> {
        let n = self.state_count();
        if init.len() != n {
            return Err(AutomatonError::DistributionLength {
                expected: n,
                got: init.len(),
            });
        }
        let total: Rational = init.iter().sum();
        if !total.is_one() {
            return Err(AutomatonError::DistributionNotNormalized(total));
        }
        let mut cur: Vec<BigRational> = init.iter().map(|r| r.as_big().clone()).collect();
        for step in 0..k {
            let mut next = vec![BigRational::zero(); n];
            for (s, mass) in cur.iter().enumerate() {
                if mass.is_zero() {
                    continue;
                }
                for t in &self.rows[s] {
                    next[t.to] += mass * t.prob.as_big();
                }
            }
            if next
                .iter()
                .any(|r| crate::rational::ratio_bits(r) > budget.max_bits)
            {
                return Err(AutomatonError::RationalOverflow {
                    max_bits: budget.max_bits,
                    steps: step + 1,
                });
            }
            cur = next;
        }
        Ok(cur
            .into_iter()
            .map(|r| Rational::from_big(r).expect("non-negative"))
            .collect())
    }

    /// Floating-point `init · P^k`, for horizons beyond the exact budget.
    pub fn step_distribution_f64(&self, init: &[f64], k: u64) -> Vec<f64> {
        let n = self.state_count();
        let probs: Vec<Vec<(StateId, f64)>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|t| (t.to, t.prob.to_f64())).collect())
            .collect();
        let mut cur = init.to_vec();
        for _ in 0..k {
            let mut next = vec![0.0; n];
            for (s, &mass) in cur.iter().enumerate() {
                if mass != 0.0 {
                    for &(to, p) in &probs[s] {
                        next[to] += mass * p;
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Point mass on `s`.
    pub fn point_mass(&self, s: StateId) -> Vec<Rational> {
        let mut d = vec![Rational::zero(); self.state_count()];
        d[s] = Rational::one();
        d
    }

    pub fn to_raw(&self) -> RawAutomaton {
        RawAutomaton {
            start: self.start,
            states: self
                .rows
                .iter()
                .enumerate()
                .map(|(id, row)| RawState {
                    id,
                    label: Some(self.labels[id]),
                    transitions: row
                        .iter()
                        .map(|t| RawTransition {
                            to: t.to,
                            num: t.prob.numer_u64().expect("probability numerator fits u64"),
                            den: t.prob.denom_u64().expect("probability denominator fits u64"),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("serializable")
    }

    /// Parses and validates the JSON file format.
    pub fn from_json(text: &str) -> Result<Self, AutomatonError> {
        let raw: RawAutomaton = serde_json::from_str(text).map_err(|e| AutomatonError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_raw(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(n: u64, d: u64) -> Rational {
        Rational::frac(n, d)
    }

    fn two_state(p: [[Rational; 2]; 2]) -> Automaton {
        let [a, b] = p;
        let [a0, a1] = a;
        let [b0, b1] = b;
        Automaton::new(
            0,
            vec![Action::Origin, Action::None],
            vec![vec![(0, a0), (1, a1)], vec![(0, b0), (1, b1)]],
        )
        .unwrap()
    }

    fn raw_two_state(first_row: Vec<RawTransition>) -> RawAutomaton {
        RawAutomaton {
            start: 0,
            states: vec![
                RawState {
                    id: 0,
                    label: Some(Action::Origin),
                    transitions: first_row,
                },
                RawState {
                    id: 1,
                    label: Some(Action::None),
                    transitions: vec![RawTransition { to: 1, num: 1, den: 1 }],
                },
            ],
        }
    }

    #[test]
    fn single_state_self_loop_is_valid() {
        let raw = RawAutomaton {
            start: 0,
            states: vec![RawState {
                id: 0,
                label: Some(Action::Origin),
                transitions: vec![RawTransition { to: 0, num: 1, den: 1 }],
            }],
        };
        assert!(validate(&raw).is_ok());
        let a = Automaton::from_raw(&raw).unwrap();
        let chi = a.chi();
        assert_eq!((chi.b, chi.ell, chi.chi), (0, 1, 0.0));
    }

    #[test]
    fn row_summing_to_three_quarters_is_rejected() {
        let raw = raw_two_state(vec![
            RawTransition { to: 0, num: 1, den: 4 },
            RawTransition { to: 1, num: 1, den: 2 },
        ]);
        let report = validate(&raw);
        assert_eq!(
            report.violations,
            vec![Violation::RowNotStochastic {
                state: 0,
                sum: r(3, 4)
            }]
        );
        assert!(report.to_string().contains("row not stochastic"));
    }

    #[test]
    fn start_must_be_origin() {
        let mut raw = raw_two_state(vec![RawTransition { to: 1, num: 1, den: 1 }]);
        raw.states[0].label = Some(Action::Up);
        let report = validate(&raw);
        assert_eq!(
            report.violations,
            vec![Violation::StartNotOrigin {
                label: Some(Action::Up)
            }]
        );
        assert!(report.to_string().contains("start must be Origin"));
    }

    #[test]
    fn dangling_missing_label_and_bad_ids_are_reported() {
        let mut raw = raw_two_state(vec![RawTransition { to: 5, num: 1, den: 1 }]);
        raw.states[1].label = None;
        let v = validate(&raw).violations;
        assert!(v.contains(&Violation::MissingLabel { state: 1 }));
        assert!(v.contains(&Violation::DanglingTransition { state: 0, to: 5 }));

        let mut raw = raw_two_state(vec![RawTransition { to: 1, num: 1, den: 1 }]);
        raw.states[1].id = 3;
        assert!(matches!(
            validate(&raw).violations[0],
            Violation::NonDenseIds { .. }
        ));

        let raw = raw_two_state(vec![RawTransition { to: 1, num: 1, den: 0 }]);
        assert!(validate(&raw)
            .violations
            .contains(&Violation::ZeroDenominator { state: 0 }));
    }

    #[test]
    fn duplicate_targets_merge() {
        let a = Automaton::new(
            0,
            vec![Action::Origin],
            vec![vec![(0, r(1, 2)), (0, r(1, 2))]],
        )
        .unwrap();
        assert_eq!(a.row(0).len(), 1);
        assert!(a.row(0)[0].prob.is_one());
    }

    #[test]
    fn deterministic_and_absorbing_steps() {
        let a = Automaton::new(
            0,
            vec![Action::Origin, Action::None],
            vec![vec![(1, r(1, 1))], vec![(1, r(1, 1))]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(a.sample_step(0, &mut rng).unwrap(), 1);
            assert_eq!(a.sample_step(1, &mut rng).unwrap(), 1);
        }
        assert!(matches!(
            a.sample_step(9, &mut rng),
            Err(AutomatonError::UnknownState(9))
        ));
        assert!(a.is_halting(1));
        assert!(!a.is_halting(0));
    }

    #[test]
    fn fair_row_frequency_within_one_percent() {
        let a = two_state([[r(1, 2), r(1, 2)], [r(1, 2), r(1, 2)]]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 1_000_000;
        let ones = (0..draws)
            .filter(|_| a.sample_step(0, &mut rng).unwrap() == 1)
            .count();
        let freq = ones as f64 / draws as f64;
        assert!((0.49..=0.51).contains(&freq), "freq {freq}");
    }

    #[test]
    fn step_distribution_examples() {
        let fair = two_state([[r(1, 2), r(1, 2)], [r(1, 2), r(1, 2)]]);
        let init = fair.point_mass(0);
        let budget = SizeBudget::default();
        assert_eq!(fair.step_distribution(&init, 0, budget).unwrap(), init);
        assert_eq!(
            fair.step_distribution(&init, 1, budget).unwrap(),
            vec![r(1, 2), r(1, 2)]
        );
        let skew = two_state([[r(3, 4), r(1, 4)], [r(1, 2), r(1, 2)]]);
        assert_eq!(
            skew.step_distribution(&skew.point_mass(0), 2, budget).unwrap(),
            vec![r(11, 16), r(5, 16)]
        );
    }

    #[test]
    fn step_distribution_errors() {
        let skew = two_state([[r(3, 4), r(1, 4)], [r(1, 2), r(1, 2)]]);
        let budget = SizeBudget { max_bits: 16 };
        assert!(matches!(
            skew.step_distribution(&skew.point_mass(0), 100, budget),
            Err(AutomatonError::RationalOverflow { .. })
        ));
        assert!(matches!(
            skew.step_distribution(&[r(1, 2), r(1, 4)], 1, budget),
            Err(AutomatonError::DistributionNotNormalized(_))
        ));
        assert!(matches!(
            skew.step_distribution(&[r(1, 1)], 1, budget),
            Err(AutomatonError::DistributionLength { .. })
        ));
        let f = skew.step_distribution_f64(&[1.0, 0.0], 2);
        assert!((f[0] - 11.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let skew = two_state([[r(3, 4), r(1, 4)], [r(1, 2), r(1, 2)]]);
        let back = Automaton::from_json(&skew.to_json()).unwrap();
        assert_eq!(back, skew);
        assert_eq!(back.transition_matrix(), skew.transition_matrix());

        match Automaton::from_json("{\"start\": 0,\n \"states\": [}") {
            Err(AutomatonError::Json { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("expected json error, got {other:?}"),
        }
        let invalid = r#"{"start":0,"states":[{"id":0,"label":"up","transitions":[{"to":0,"num":1,"den":1}]}]}"#;
        assert!(matches!(
            Automaton::from_json(invalid),
            Err(AutomatonError::Invalid(_))
        ));
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(
            [0, 1, 2, 3, 4, 5, 8, 9, 17, 22].map(ceil_log2),
            [0, 0, 1, 2, 2, 3, 3, 4, 5, 5]
        );
    }

    #[test]
    fn chi_display() {
        assert_eq!(ChiMetric::from_parts(5, 2).to_string(), "b=5 ℓ=2 χ=6");
        assert_eq!(ChiMetric::from_parts(3, 3).to_string(), "b=3 ℓ=3 χ=4.5850");
    }
}
