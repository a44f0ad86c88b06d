//! Structural analysis of an automaton's Markov chain: recurrent classes,
//! periods and cyclic (Feller) classes, exact stationary distributions,
//! mixing certificates, drift, coverage prediction and tail bounds.

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::automaton::{ceil_log2, Action, Automaton, StateId};
use crate::grid_sim::GridPoint;
use crate::rational::{ratio_bits, ratio_to_f64, Rational};
use crate::rng;

/// Largest Feller class solved with exact rationals.
pub const EXACT_STATE_LIMIT: usize = 128;
/// Bit budget for exact intermediate values.
pub const EXACT_BITS_LIMIT: u64 = 1 << 13;
/// Convergence tolerance of the floating-point fallback.
pub const POWER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("class index {0} out of range")]
    UnknownClass(usize),
    #[error("cyclic class {tau} out of range for period {period}")]
    UnknownResidue { tau: usize, period: usize },
    #[error("singular stationary system; the decomposition is inconsistent")]
    Singular,
    #[error("distributions have different supports ({0} vs {1} entries)")]
    SupportMismatch(usize, usize),
    #[error("parameter out of range: {0}")]
    Range(String),
    #[error("automaton has no recurrent class")]
    NoRecurrentClass,
}

fn range(msg: impl Into<String>) -> ChainError {
    ChainError::Range(msg.into())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RecurrentClass {
    /// Sorted state ids.
    pub states: Vec<StateId>,
    pub period: usize,
    /// `G_0..G_{t-1}`; `G_0` holds the smallest state, and one step maps
    /// `G_τ` into `G_{τ+1 mod t}`.
    pub feller: Vec<Vec<StateId>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassDecomposition {
    /// Ordered by smallest member.
    pub classes: Vec<RecurrentClass>,
    pub transient: Vec<StateId>,
}

impl ClassDecomposition {
    /// Index of the recurrent class containing `s`.
    pub fn class_of(&self, s: StateId) -> Option<usize> {
        self.classes.iter().position(|c| c.states.binary_search(&s).is_ok())
    }
}

fn successors(a: &Automaton, s: StateId) -> impl Iterator<Item = StateId> + '_ {
    a.row(s).iter().map(|t| t.to)
}

/// Strongly connected components, iteratively (Tarjan).
pub fn strongly_connected_components(a: &Automaton) -> Vec<Vec<StateId>> {
    let n = a.state_count();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next_index = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut work: Vec<(StateId, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut edge)) = work.last_mut() {
            let row = a.row(v);
            if *edge < row.len() {
                let w = row[*edge].to;
                *edge += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// Period and cyclic classes of a closed, strongly connected state set.
fn periodic_structure(a: &Automaton, states: &[StateId]) -> (usize, Vec<Vec<StateId>>) {
    let n = a.state_count();
    let mut level = vec![usize::MAX; n];
    let root = states[0];
    level[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for w in successors(a, v) {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let mut period = 0usize;
    for &v in states {
        for w in successors(a, v) {
            let diff = (level[v] + 1).abs_diff(level[w]);
            period = period.gcd(&diff);
        }
    }
    let period = period.max(1);
    let mut feller = vec![Vec::new(); period];
    for &v in states {
        feller[level[v] % period].push(v);
    }
    (period, feller)
}

/// Recurrent classes (closed SCCs) with periods and cyclic classes.
pub fn decompose(a: &Automaton) -> ClassDecomposition {
    let comps = strongly_connected_components(a);
    let mut comp_of = vec![0; a.state_count()];
    for (i, c) in comps.iter().enumerate() {
        for &s in c {
            comp_of[s] = i;
        }
    }
    let mut classes = Vec::new();
    let mut transient = Vec::new();
    for (i, comp) in comps.iter().enumerate() {
        let closed = comp
            .iter()
            .all(|&s| successors(a, s).all(|t| comp_of[t] == i));
        if closed {
            let (period, feller) = periodic_structure(a, comp);
            classes.push(RecurrentClass {
                states: comp.clone(),
                period,
                feller,
            });
        } else {
            transient.extend_from_slice(comp);
        }
    }
    classes.sort_by_key(|c| c.states[0]);
    transient.sort_unstable();
    ClassDecomposition { classes, transient }
}

/// Stationary distribution of `P^t` restricted to one cyclic class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FellerStationary {
    pub states: Vec<StateId>,
    /// Present when the exact solve fit the size limits.
    pub exact: Option<Vec<Rational>>,
    pub approx: Vec<f64>,
}

fn class_local(a: &Automaton, states: &[StateId]) -> Vec<Vec<(usize, BigRational)>> {
    states
        .iter()
        .map(|&s| {
            a.row(s)
                .iter()
                .map(|t| (states.binary_search(&t.to).expect("closed class"), t.prob.as_big().clone()))
                .collect()
        })
        .collect()
}

fn push_exact(rows: &[Vec<(usize, BigRational)>], v: &[BigRational]) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); v.len()];
    for (i, m) in v.iter().enumerate() {
        if m.is_zero() {
            continue;
        }
        for (j, p) in &rows[i] {
            out[*j] += m * p;
        }
    }
    out
}

fn push_f64(rows: &[Vec<(usize, f64)>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (i, &m) in v.iter().enumerate() {
        if m != 0.0 {
            for &(j, p) in &rows[i] {
                out[j] += m * p;
            }
        }
    }
    out
}

fn too_big(v: &[BigRational]) -> bool {
    v.iter().any(|r| ratio_bits(r) > EXACT_BITS_LIMIT)
}

/// Solves `m x = rhs` over the rationals; `None` when singular.
pub fn solve_exact(mut m: Vec<Vec<BigRational>>, mut rhs: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let inv = m[col][col].recip();
        for v in &mut m[col][col..] {
            *v = &*v * &inv;
        }
        rhs[col] = &rhs[col] * &inv;
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            let (pivot_row, row) = if r < col {
                let (lo, hi) = m.split_at_mut(col);
                (&hi[0], &mut lo[r])
            } else {
                let (lo, hi) = m.split_at_mut(r);
                (&lo[col], &mut hi[0])
            };
            for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= &f * p;
            }
            let delta = &f * &rhs[col];
            rhs[r] -= delta;
        }
    }
    Some(rhs)
}

/// Rows of `P^t` restricted to `G_τ`, in class-local indexing of `G_τ`.
fn feller_power_exact(
    local: &[Vec<(usize, BigRational)>],
    class_states: &[StateId],
    g: &[StateId],
    t: usize,
) -> Option<Vec<Vec<BigRational>>> {
    let mut out = Vec::with_capacity(g.len());
    for &s in g {
        let mut v = vec![BigRational::zero(); class_states.len()];
        v[class_states.binary_search(&s).expect("member")] = BigRational::one();
        for _ in 0..t {
            v = push_exact(local, &v);
            if too_big(&v) {
                return None;
            }
        }
        out.push(
            g.iter()
                .map(|u| v[class_states.binary_search(u).expect("member")].clone())
                .collect(),
        );
    }
    Some(out)
}

fn stationary_exact(m: &[Vec<BigRational>]) -> Result<Vec<BigRational>, ChainError> {
    let n = m.len();
    // (M^T - I) π = 0 with the last equation replaced by Σπ = 1.
    let mut sys = vec![vec![BigRational::zero(); n]; n];
    for (i, row) in sys.iter_mut().enumerate().take(n - 1) {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = m[j][i].clone();
            if i == j {
                *cell -= BigRational::one();
            }
        }
    }
    sys[n - 1] = vec![BigRational::one(); n];
    let mut rhs = vec![BigRational::zero(); n];
    rhs[n - 1] = BigRational::one();
    solve_exact(sys, rhs).ok_or(ChainError::Singular)
}

/// Class stationary distribution by lazy power iteration.
fn class_stationary_f64(rows: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let n = rows.len();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..10_000_000 {
        let pushed = push_f64(rows, &v);
        let next: Vec<f64> = v.iter().zip(&pushed).map(|(a, b)| 0.5 * (a + b)).collect();
        let change: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if change < POWER_TOLERANCE {
            break;
        }
    }
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

fn class_ref(dec: &ClassDecomposition, class: usize, tau: usize) -> Result<&RecurrentClass, ChainError> {
    let c = dec.classes.get(class).ok_or(ChainError::UnknownClass(class))?;
    if tau >= c.period {
        return Err(ChainError::UnknownResidue {
            tau,
            period: c.period,
        });
    }
    Ok(c)
}

/// `π_τ` for cyclic class `tau` of recurrent class `class`.
pub fn stationary(
    a: &Automaton,
    dec: &ClassDecomposition,
    class: usize,
    tau: usize,
) -> Result<FellerStationary, ChainError> {
    let c = class_ref(dec, class, tau)?;
    let g = &c.feller[tau];
    if g.len() <= EXACT_STATE_LIMIT {
        let local = class_local(a, &c.states);
        if let Some(m) = feller_power_exact(&local, &c.states, g, c.period) {
            let pi = stationary_exact(&m)?;
            if !too_big(&pi) {
                let approx = pi.iter().map(ratio_to_f64).collect();
                let exact = pi
                    .into_iter()
                    .map(|r| Rational::from_big(r).map_err(|_| ChainError::Singular))
                    .collect::<Result<Vec<_>, _>>()?;
                return Ok(FellerStationary {
                    states: g.clone(),
                    exact: Some(exact),
                    approx,
                });
            }
        }
    }
    let rows: Vec<Vec<(usize, f64)>> = c
        .states
        .iter()
        .map(|&s| {
            a.row(s)
                .iter()
                .map(|t| (c.states.binary_search(&t.to).expect("closed"), t.prob.to_f64()))
                .collect()
        })
        .collect();
    let pi_class = class_stationary_f64(&rows);
    let t = c.period as f64;
    let approx = g
        .iter()
        .map(|s| t * pi_class[c.states.binary_search(s).expect("member")])
        .collect();
    Ok(FellerStationary {
        states: g.clone(),
        exact: None,
        approx,
    })
}

/// Checks `π (P^t|G_τ) = π` exactly.
pub fn is_exactly_stationary(
    a: &Automaton,
    c: &RecurrentClass,
    tau: usize,
    pi: &[Rational],
) -> bool {
    let g = &c.feller[tau];
    if pi.len() != g.len() {
        return false;
    }
    let local = class_local(a, &c.states);
    let mut v = vec![BigRational::zero(); c.states.len()];
    for (s, p) in g.iter().zip(pi) {
        v[c.states.binary_search(s).expect("member")] = p.as_big().clone();
    }
    for _ in 0..c.period {
        v = push_exact(&local, &v);
    }
    let total: BigRational = pi.iter().map(|p| p.as_big().clone()).sum();
    total.is_one()
        && g.iter()
            .zip(pi)
            .all(|(s, p)| &v[c.states.binary_search(s).expect("member")] == p.as_big())
}

/// Pushes `π_τ` through one step and returns the resulting distribution
/// over the class, aligned with `c.states`.
pub fn rotate_once(a: &Automaton, c: &RecurrentClass, tau: usize, pi: &[Rational]) -> Vec<Rational> {
    let local = class_local(a, &c.states);
    let mut v = vec![BigRational::zero(); c.states.len()];
    for (s, p) in c.feller[tau].iter().zip(pi) {
        v[c.states.binary_search(s).expect("member")] = p.as_big().clone();
    }
    push_exact(&local, &v)
        .into_iter()
        .map(|r| Rational::from_big(r).expect("non-negative"))
        .collect()
}

pub fn tv_distance(d1: &[f64], d2: &[f64]) -> Result<f64, ChainError> {
    if d1.len() != d2.len() {
        return Err(ChainError::SupportMismatch(d1.len(), d2.len()));
    }
    Ok(0.5 * d1.iter().zip(d2).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn inf_norm_distance(d1: &[f64], d2: &[f64]) -> Result<f64, ChainError> {
    if d1.len() != d2.len() {
        return Err(ChainError::SupportMismatch(d1.len(), d2.len()));
    }
    Ok(d1.iter().zip(d2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn abs_diff(a: &BigRational, b: &BigRational) -> BigRational {
    (a - b).abs()
}

/// Exact `max |d1 - d2|`.
pub fn inf_norm_distance_exact(d1: &[Rational], d2: &[Rational]) -> Result<Rational, ChainError> {
    if d1.len() != d2.len() {
        return Err(ChainError::SupportMismatch(d1.len(), d2.len()));
    }
    let m = d1
        .iter()
        .zip(d2)
        .map(|(a, b)| abs_diff(a.as_big(), b.as_big()))
        .max()
        .unwrap_or_else(BigRational::zero);
    Ok(Rational::from_big(m).expect("non-negative"))
}

/// Exact total variation distance.
pub fn tv_distance_exact(d1: &[Rational], d2: &[Rational]) -> Result<Rational, ChainError> {
    if d1.len() != d2.len() {
        return Err(ChainError::SupportMismatch(d1.len(), d2.len()));
    }
    let sum: BigRational = d1
        .iter()
        .zip(d2)
        .map(|(a, b)| abs_diff(a.as_big(), b.as_big()))
        .sum();
    Ok(Rational::from_big(sum / BigRational::from_integer(2.into())).expect("non-negative"))
}

/// `(1 - ε)^⌊k/k0⌋`.
pub fn rosenthal_bound(eps: f64, k: u64, k0: u64) -> Result<f64, ChainError> {
    if !(eps > 0.0 && eps <= 1.0) || k0 == 0 {
        return Err(range(format!("need 0 < eps <= 1 and k0 >= 1, got eps={eps}, k0={k0}")));
    }
    let e = k / k0;
    if e == 0 {
        return Ok(1.0);
    }
    Ok((1.0 - eps).powf(e as f64))
}

/// Exact `(1 - ε)^⌊k/k0⌋`.
pub fn rosenthal_bound_exact(eps: &Rational, k: u64, k0: u64) -> Result<Rational, ChainError> {
    if eps.is_zero() || k0 == 0 {
        return Err(range("need 0 < eps <= 1 and k0 >= 1"));
    }
    let base = eps.complement().ok_or_else(|| range("eps > 1"))?;
    let e = u32::try_from(k / k0).map_err(|_| range("exponent too large"))?;
    Ok(base.pow(e))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingReport {
    pub class: usize,
    pub tau: usize,
    pub period: usize,
    pub beta_requested: u64,
    /// `β` rounded up to a multiple of the period.
    pub beta: u64,
    pub rounded: bool,
    pub p0: Rational,
    /// `p0^{|S|}`.
    pub epsilon: Rational,
    /// `⌊β/|S|⌋`.
    pub exponent: u64,
    pub bound: f64,
    /// Worst start state's ∞-distance to `π_τ` after `β` steps.
    pub inf_distance: f64,
    pub tv_distance: f64,
    pub exact: bool,
    pub holds: bool,
}

/// Measures the distance to `π_τ` after `β` steps from every state of
/// `G_τ` and compares it with `(1 - p0^{|S|})^⌊β/|S|⌋`.
pub fn mixing_certificate(
    a: &Automaton,
    dec: &ClassDecomposition,
    class: usize,
    tau: usize,
    beta: u64,
) -> Result<MixingReport, ChainError> {
    let c = class_ref(dec, class, tau)?;
    let t = c.period as u64;
    let beta_used = beta.div_ceil(t) * t;
    let n_states = a.state_count() as u64;
    let p0 = a.min_probability();
    let epsilon = p0.pow(n_states as u32);
    let exponent = beta_used / n_states;
    let pi = stationary(a, dec, class, tau)?;
    let g = &c.feller[tau];
    let pos = |s: &StateId| c.states.binary_search(s).expect("member");

    let mut report = MixingReport {
        class,
        tau,
        period: c.period,
        beta_requested: beta,
        beta: beta_used,
        rounded: beta_used != beta,
        p0: p0.clone(),
        epsilon: epsilon.clone(),
        exponent,
        bound: rosenthal_bound(epsilon.to_f64().max(f64::MIN_POSITIVE), beta_used, n_states)?,
        inf_distance: 0.0,
        tv_distance: 0.0,
        exact: false,
        holds: false,
    };

    if let (Some(exact_pi), true) = (&pi.exact, g.len() <= EXACT_STATE_LIMIT) {
        let bound = rosenthal_bound_exact(&epsilon, beta_used, n_states)?;
        if bound.bits() <= EXACT_BITS_LIMIT {
            let local = class_local(a, &c.states);
            let mut worst_inf = Rational::zero();
            let mut worst_tv = Rational::zero();
            let mut exact_ok = true;
            for s in g {
                let mut v = vec![BigRational::zero(); c.states.len()];
                v[pos(s)] = BigRational::one();
                for _ in 0..beta_used {
                    v = push_exact(&local, &v);
                    if too_big(&v) {
                        exact_ok = false;
                        break;
                    }
                }
                if !exact_ok {
                    break;
                }
                let restricted: Vec<Rational> = g
                    .iter()
                    .map(|u| Rational::from_big(v[pos(u)].clone()).expect("non-negative"))
                    .collect();
                worst_inf = worst_inf.max(inf_norm_distance_exact(&restricted, exact_pi)?);
                worst_tv = worst_tv.max(tv_distance_exact(&restricted, exact_pi)?);
            }
            if exact_ok {
                report.inf_distance = worst_inf.to_f64();
                report.tv_distance = worst_tv.to_f64();
                report.exact = true;
                report.holds = worst_inf <= bound;
                return Ok(report);
            }
        }
    }

    let rows: Vec<Vec<(usize, f64)>> = c
        .states
        .iter()
        .map(|&s| a.row(s).iter().map(|t| (pos(&t.to), t.prob.to_f64())).collect())
        .collect();
    for s in g {
        let mut v = vec![0.0; c.states.len()];
        v[pos(s)] = 1.0;
        for _ in 0..beta_used {
            v = push_f64(&rows, &v);
        }
        let restricted: Vec<f64> = g.iter().map(|u| v[pos(u)]).collect();
        report.inf_distance = report.inf_distance.max(inf_norm_distance(&restricted, &pi.approx)?);
        report.tv_distance = report.tv_distance.max(tv_distance(&restricted, &pi.approx)?);
    }
    report.holds = report.inf_distance <= report.bound + 1e-9;
    Ok(report)
}

/// Stationary label probabilities and drift of one recurrent class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassProfile {
    pub class: usize,
    pub states: Vec<StateId>,
    pub period: usize,
    pub feller: Vec<FellerStationary>,
    pub p_up: f64,
    pub p_down: f64,
    pub p_left: f64,
    pub p_right: f64,
    /// Exact `(p↑, p↓, p←, p→)` when every `π_τ` was solved exactly.
    pub exact_label_mass: Option<[Rational; 4]>,
    /// `(p→ - p←, p↑ - p↓)`.
    pub drift: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryProfile {
    pub classes: Vec<ClassProfile>,
}

const LABEL_ORDER: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

/// Label masses average the `π_τ` with equal weight `1/t`.
pub fn drift_profile(a: &Automaton, dec: &ClassDecomposition) -> Result<StationaryProfile, ChainError> {
    let mut classes = Vec::new();
    for (ci, c) in dec.classes.iter().enumerate() {
        let feller: Vec<FellerStationary> = (0..c.period)
            .map(|tau| stationary(a, dec, ci, tau))
            .collect::<Result<_, _>>()?;
        let t = c.period as f64;
        let mut mass = [0.0f64; 4];
        let all_exact = feller.iter().all(|f| f.exact.is_some());
        let mut exact_mass = [(); 4].map(|_| BigRational::zero());
        for f in &feller {
            for (i, &s) in f.states.iter().enumerate() {
                if let Some(k) = LABEL_ORDER.iter().position(|&l| l == a.label(s)) {
                    mass[k] += f.approx[i] / t;
                    if let Some(ex) = &f.exact {
                        exact_mass[k] += ex[i].as_big();
                    }
                }
            }
        }
        let exact_label_mass = all_exact.then(|| {
            let t = BigRational::from_integer(c.period.into());
            exact_mass.map(|m| Rational::from_big(m / &t).expect("non-negative"))
        });
        let [p_up, p_down, p_left, p_right] = match &exact_label_mass {
            Some(m) => [m[0].to_f64(), m[1].to_f64(), m[2].to_f64(), m[3].to_f64()],
            None => mass,
        };
        let drift = match &exact_label_mass {
            Some(m) => (
                signed_diff(&m[3], &m[2]),
                signed_diff(&m[0], &m[1]),
            ),
            None => (p_right - p_left, p_up - p_down),
        };
        classes.push(ClassProfile {
            class: ci,
            states: c.states.clone(),
            period: c.period,
            feller,
            p_up,
            p_down,
            p_left,
            p_right,
            exact_label_mass,
            drift,
        });
    }
    Ok(StationaryProfile { classes })
}

fn signed_diff(a: &Rational, b: &Rational) -> f64 {
    ratio_to_f64(&(a.as_big() - b.as_big()))
}

/// Result of `reach_bound`; `None` when the value exceeds `u64`.
pub type ReachBound = Option<u64>;

/// `⌈p0^{-2^b} · 2^b · c · log₂D⌉`, exact when `D` is a power of two.
pub fn reach_bound(b: u32, p0: &Rational, c: u64, d: u64) -> Result<ReachBound, ChainError> {
    if p0.is_zero() || p0.complement().is_none() {
        return Err(range("p0 must be in (0, 1]"));
    }
    if c == 0 || d < 2 {
        return Err(range("need c >= 1 and D >= 2"));
    }
    if b >= 32 {
        return Ok(None);
    }
    let two_b = 1u64 << b;
    let inv = p0.recip().expect("nonzero");
    // Guard the power against blowing up before the overflow check.
    if (inv.bits() as u128) * (two_b as u128) > 4096 {
        return Ok(None);
    }
    let coeff = inv.pow(two_b as u32).into_big() * BigRational::from_integer((two_b * c).into());
    let value = if d.is_power_of_two() {
        let exact = coeff * BigRational::from_integer(d.trailing_zeros().into());
        exact.ceil().to_integer().to_u64()
    } else {
        let approx = (ratio_to_f64(&coeff) * (d as f64).log2()).ceil();
        (approx < u64::MAX as f64).then_some(approx as u64)
    };
    Ok(value)
}

/// Coverage region predicted from the drift of each recurrent class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveragePrediction {
    pub d: u64,
    pub delta: u64,
    pub w: u64,
    pub drifts: Vec<(f64, f64)>,
    /// Cells of the max-norm `D`-ball inside the region.
    pub cells: u64,
    pub total_cells: u64,
    pub fraction: f64,
}

const REGION_EPS: f64 = 1e-9;

/// Whether some `r ∈ [0, Δ]` has `‖q - r·v‖_∞ ≤ w`.
fn near_ray(q: GridPoint, v: (f64, f64), delta: f64, w: f64) -> bool {
    let mut lo = 0.0f64;
    let mut hi = delta;
    for (coord, dir) in [(q.x as f64, v.0), (q.y as f64, v.1)] {
        if dir.abs() < 1e-15 {
            if coord.abs() > w + REGION_EPS {
                return false;
            }
        } else {
            let (a, b) = ((coord - w) / dir, (coord + w) / dir);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    lo <= hi + REGION_EPS
}

impl CoveragePrediction {
    pub fn contains(&self, q: GridPoint) -> bool {
        if q.max_norm() > self.d {
            return false;
        }
        let w = self.w as f64;
        if q.max_norm() <= self.w {
            return true;
        }
        self.drifts
            .iter()
            .any(|&v| near_ray(q, v, self.delta as f64, w))
    }
}

/// Counts the predicted region for explicit drift vectors.
pub fn predict_coverage_for_drifts(
    drifts: &[(f64, f64)],
    d: u64,
    delta: u64,
    w: u64,
) -> Result<CoveragePrediction, ChainError> {
    if delta == 0 {
        return Err(range("round budget must be at least 1"));
    }
    let mut p = CoveragePrediction {
        d,
        delta,
        w,
        drifts: drifts.to_vec(),
        cells: 0,
        total_cells: (2 * d + 1) * (2 * d + 1),
        fraction: 0.0,
    };
    let di = d as i64;
    let mut cells = 0u64;
    for y in -di..=di {
        for x in -di..=di {
            if p.contains(GridPoint::new(x, y)) {
                cells += 1;
            }
        }
    }
    p.cells = cells;
    p.fraction = cells as f64 / p.total_cells as f64;
    Ok(p)
}

/// Default slack radius `⌈D / (16 |S|)⌉`, at least 1.
pub fn default_slack(d: u64, states: usize) -> u64 {
    d.div_ceil(16 * states as u64).max(1)
}

pub fn predict_coverage(
    a: &Automaton,
    d: u64,
    delta: u64,
    w: u64,
) -> Result<CoveragePrediction, ChainError> {
    if w == 0 {
        return Err(range("slack radius w must be at least 1"));
    }
    let dec = decompose(a);
    let profile = drift_profile(a, &dec)?;
    let drifts: Vec<(f64, f64)> = profile.classes.iter().map(|c| c.drift).collect();
    predict_coverage_for_drifts(&drifts, d, delta, w)
}

fn check_chernoff(mu: f64, delta: f64) -> Result<(), ChainError> {
    if !(mu >= 0.0 && (0.0..=1.0).contains(&delta)) {
        return Err(range(format!("need mu >= 0 and 0 <= delta <= 1, got mu={mu}, delta={delta}")));
    }
    Ok(())
}

/// `P[X > (1+δ)μ] ≤ e^{-δ²μ/2}`.
pub fn chernoff_upper(mu: f64, delta: f64) -> Result<f64, ChainError> {
    check_chernoff(mu, delta)?;
    Ok((-delta * delta * mu / 2.0).exp())
}

/// `P[X < (1-δ)μ] ≤ e^{-δ²μ/3}`.
pub fn chernoff_lower(mu: f64, delta: f64) -> Result<f64, ChainError> {
    check_chernoff(mu, delta)?;
    Ok((-delta * delta * mu / 3.0).exp())
}

/// `2e^{-δ²μ/3}`, clamped to 1.
pub fn chernoff_twosided(mu: f64, delta: f64) -> Result<f64, ChainError> {
    check_chernoff(mu, delta)?;
    Ok((2.0 * (-delta * delta * mu / 3.0).exp()).min(1.0))
}

/// Exact probability of eventually entering `targets` from each state.
pub fn absorption_probabilities(a: &Automaton, targets: &[StateId]) -> Result<Vec<Rational>, ChainError> {
    let n = a.state_count();
    let mut is_target = vec![false; n];
    for &t in targets {
        *is_target.get_mut(t).ok_or_else(|| range(format!("unknown state {t}")))? = true;
    }
    // States that can reach a target, by reverse search.
    let mut preds = vec![Vec::new(); n];
    for s in 0..n {
        for t in successors(a, s) {
            preds[t].push(s);
        }
    }
    let mut reaches = is_target.clone();
    let mut stack: Vec<StateId> = targets.to_vec();
    while let Some(v) = stack.pop() {
        for &u in &preds[v] {
            if !reaches[u] {
                reaches[u] = true;
                stack.push(u);
            }
        }
    }
    let unknown: Vec<StateId> = (0..n).filter(|&s| reaches[s] && !is_target[s]).collect();
    let idx = |s: StateId| unknown.binary_search(&s).ok();
    let m = unknown.len();
    let mut sys = vec![vec![BigRational::zero(); m]; m];
    let mut rhs = vec![BigRational::zero(); m];
    for (i, &s) in unknown.iter().enumerate() {
        sys[i][i] = BigRational::one();
        for t in a.row(s) {
            if is_target[t.to] {
                rhs[i] += t.prob.as_big();
            } else if let Some(j) = idx(t.to) {
                sys[i][j] -= t.prob.as_big();
            }
        }
    }
    let sol = solve_exact(sys, rhs).ok_or(ChainError::Singular)?;
    Ok((0..n)
        .map(|s| {
            if is_target[s] {
                Rational::one()
            } else if let Some(i) = idx(s) {
                Rational::from_big(sol[i].clone()).expect("probability")
            } else {
                Rational::zero()
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrivalReport {
    pub b: u32,
    pub p0: Rational,
    pub c: u64,
    pub d: u64,
    /// `None` when the reach bound saturated.
    pub r0: Option<u64>,
    /// Steps actually simulated per agent.
    pub horizon: u64,
    pub trials: u64,
    pub fraction: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Horizon used when the reach bound saturates.
pub const SATURATED_HORIZON: u64 = 1 << 32;

/// Simulates agents for `R_0` steps and reports how many ended inside a
/// recurrent class.
pub fn recurrence_arrival_check(
    a: &Automaton,
    c: u64,
    d: u64,
    trials: u64,
    seed: u64,
) -> Result<ArrivalReport, ChainError> {
    let dec = decompose(a);
    if dec.classes.is_empty() {
        return Err(ChainError::NoRecurrentClass);
    }
    if trials == 0 || trials > u32::MAX as u64 {
        return Err(range("trials must be in 1..=2^32-1"));
    }
    let mut recurrent = vec![false; a.state_count()];
    for cl in &dec.classes {
        for &s in &cl.states {
            recurrent[s] = true;
        }
    }
    let b = ceil_log2(a.state_count() as u64);
    let p0 = a.min_probability();
    let r0 = reach_bound(b, &p0, c, d)?;
    let horizon = r0.unwrap_or(SATURATED_HORIZON);
    let mut inside = 0u64;
    for trial in 0..trials {
        let mut r = rng::stream(seed, trial as u32, 0);
        let mut s = a.start();
        let mut steps = 0;
        while !recurrent[s] && steps < horizon {
            s = a.step_unchecked(s, &mut r);
            steps += 1;
        }
        inside += recurrent[s] as u64;
    }
    let fraction = inside as f64 / trials as f64;
    let target = 1.0 - (d as f64).powf(-(c as f64));
    let sigma = (target * (1.0 - target) / trials as f64).sqrt();
    let threshold = target - 5.0 * sigma;
    Ok(ArrivalReport {
        b,
        p0,
        c,
        d,
        r0,
        horizon,
        trials,
        fraction,
        threshold,
        passed: fraction >= threshold,
    })
}

/// Number of the first `r` steps of one agent that enter a state labeled
/// `label`.
pub fn count_label<R: Rng>(a: &Automaton, label: Action, r: u64, rng: &mut R) -> u64 {
    let mut s = a.start();
    let mut count = 0;
    for _ in 0..r {
        s = a.step_unchecked(s, rng);
        count += (a.label(s) == label) as u64;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{build_nonuniform, build_random_walk_baseline};

    fn chain(labels: Vec<Action>, rows: Vec<Vec<(StateId, Rational)>>) -> Automaton {
        Automaton::new(0, labels, rows).unwrap()
    }

    fn two_state() -> Automaton {
        chain(
            vec![Action::Origin, Action::Up],
            vec![
                vec![(0, Rational::frac(3, 4)), (1, Rational::frac(1, 4))],
                vec![(0, Rational::frac(1, 2)), (1, Rational::frac(1, 2))],
            ],
        )
    }

    #[test]
    fn absorbing_pair() {
        let a = chain(
            vec![Action::Origin, Action::None],
            vec![vec![(1, Rational::one())], vec![(1, Rational::one())]],
        );
        let dec = decompose(&a);
        assert_eq!(dec.transient, vec![0]);
        assert_eq!(dec.classes.len(), 1);
        assert_eq!((dec.classes[0].states.clone(), dec.classes[0].period), (vec![1], 1));
    }

    #[test]
    fn three_cycle_period() {
        let one = Rational::one();
        let a = chain(
            vec![Action::Origin, Action::Up, Action::Right],
            vec![vec![(1, one.clone())], vec![(2, one.clone())], vec![(0, one)]],
        );
        let dec = decompose(&a);
        let c = &dec.classes[0];
        assert_eq!(c.period, 3);
        assert_eq!(c.feller, vec![vec![0], vec![1], vec![2]]);
        let pi = stationary(&a, &dec, 0, 1).unwrap();
        assert_eq!(pi.exact.unwrap(), vec![Rational::one()]);
    }

    #[test]
    fn nonuniform_is_one_aperiodic_class() {
        let a = build_nonuniform(4).unwrap();
        let dec = decompose(&a);
        assert_eq!(dec.classes.len(), 1);
        assert_eq!(dec.classes[0].states.len(), 5);
        assert_eq!(dec.classes[0].period, 1);
        let prof = drift_profile(&a, &dec).unwrap();
        assert_eq!(prof.classes[0].drift, (0.0, 0.0));
    }

    #[test]
    fn two_state_stationary() {
        let a = two_state();
        let dec = decompose(&a);
        let pi = stationary(&a, &dec, 0, 0).unwrap();
        let exact = pi.exact.unwrap();
        assert_eq!(exact, vec![Rational::frac(2, 3), Rational::frac(1, 3)]);
        assert!(is_exactly_stationary(&a, &dec.classes[0], 0, &exact));
        assert!(stationary(&a, &dec, 0, 1).is_err());
    }

    #[test]
    fn distances() {
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(inf_norm_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.75, 0.25], &[0.5, 0.5]).unwrap(), 0.25);
        assert_eq!(inf_norm_distance(&[0.75, 0.25], &[0.5, 0.5]).unwrap(), 0.25);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
        let e = tv_distance_exact(
            &[Rational::frac(3, 4), Rational::frac(1, 4)],
            &[Rational::frac(1, 2), Rational::frac(1, 2)],
        )
        .unwrap();
        assert_eq!(e, Rational::frac(1, 4));
    }

    #[test]
    fn rosenthal_examples() {
        assert!((rosenthal_bound(0.25, 8, 1).unwrap() - 6561.0 / 65536.0).abs() < 1e-15);
        assert_eq!(rosenthal_bound(0.5, 3, 4).unwrap(), 1.0);
        assert_eq!(rosenthal_bound(1.0, 4, 4).unwrap(), 0.0);
        assert!(rosenthal_bound(0.0, 4, 4).is_err());
        assert_eq!(
            rosenthal_bound_exact(&Rational::frac(1, 4), 8, 1).unwrap(),
            Rational::frac(6561, 65536)
        );
    }

    #[test]
    fn mixing_two_state() {
        let a = two_state();
        let dec = decompose(&a);
        let r = mixing_certificate(&a, &dec, 0, 0, 20).unwrap();
        assert!(r.exact && r.holds);
        assert_eq!(r.epsilon, Rational::frac(1, 16));
        assert_eq!(r.exponent, 10);
    }

    #[test]
    fn mixing_rounds_beta_to_period() {
        let one = Rational::one();
        let a = chain(
            vec![Action::Origin, Action::Up],
            vec![vec![(1, one.clone())], vec![(0, one)]],
        );
        let dec = decompose(&a);
        let r = mixing_certificate(&a, &dec, 0, 0, 3).unwrap();
        assert_eq!((r.beta, r.rounded, r.period), (4, true, 2));
        assert!(r.holds);
    }

    #[test]
    fn drift_examples() {
        let a = build_random_walk_baseline();
        let dec = decompose(&a);
        assert_eq!(dec.transient, vec![0]);
        assert_eq!(dec.classes[0].states, vec![1, 2, 3, 4]);
        assert_eq!(drift_profile(&a, &dec).unwrap().classes[0].drift, (0.0, 0.0));
        let up = chain(
            vec![Action::Origin, Action::Up],
            vec![vec![(1, Rational::one())], vec![(1, Rational::one())]],
        );
        let dec = decompose(&up);
        assert_eq!(drift_profile(&up, &dec).unwrap().classes[0].drift, (0.0, 1.0));
    }

    #[test]
    fn reach_bound_examples() {
        assert_eq!(reach_bound(2, &Rational::frac(1, 2), 1, 256).unwrap(), Some(512));
        assert_eq!(reach_bound(0, &Rational::one(), 1, 2).unwrap(), Some(1));
        assert_eq!(reach_bound(3, &Rational::frac(1, 4), 2, 16).unwrap(), Some(4_194_304));
        assert_eq!(reach_bound(8, &Rational::frac(1, 4), 2, 16).unwrap(), None);
        assert!(reach_bound(1, &Rational::zero(), 1, 4).is_err());
    }

    #[test]
    fn coverage_examples() {
        let p = predict_coverage_for_drifts(&[(0.0, 0.0)], 256, 65536, 16).unwrap();
        assert_eq!(p.cells, 33 * 33);
        let p = predict_coverage_for_drifts(&[(0.0, 1.0)], 10, 10, 0).unwrap();
        assert_eq!(p.cells, 11);
        let a = build_random_walk_baseline();
        let p = predict_coverage(&a, 256, 256 * 256, 16).unwrap();
        assert!(p.fraction < 0.2);
    }

    #[test]
    fn chernoff_examples() {
        assert!((chernoff_upper(100.0, 0.1).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(chernoff_upper(5.0, 0.0).unwrap(), 1.0);
        assert_eq!(chernoff_lower(5.0, 0.0).unwrap(), 1.0);
        assert_eq!(chernoff_twosided(5.0, 0.0).unwrap(), 1.0);
        assert_eq!(chernoff_upper(0.0, 0.5).unwrap(), 1.0);
        assert!(chernoff_upper(1.0, 1.5).is_err());
    }

    #[test]
    fn absorption_solves_geometric_chain() {
        let half = Rational::frac(1, 2);
        let a = chain(
            vec![Action::Origin, Action::None, Action::None],
            vec![
                vec![(0, half.clone()), (1, Rational::frac(1, 4)), (2, Rational::frac(1, 4))],
                vec![(1, Rational::one())],
                vec![(2, Rational::one())],
            ],
        );
        let h = absorption_probabilities(&a, &[1]).unwrap();
        assert_eq!(h, vec![half, Rational::one(), Rational::zero()]);
    }

    #[test]
    fn arrival_examples() {
        let half = Rational::frac(1, 2);
        let a = chain(
            vec![Action::Origin, Action::None],
            vec![vec![(0, half.clone()), (1, half)], vec![(1, Rational::one())]],
        );
        let r = recurrence_arrival_check(&a, 1, 16, 10_000, 5).unwrap();
        assert_eq!(r.r0, Some(32));
        assert!(r.passed);
        let r = recurrence_arrival_check(&build_nonuniform(8).unwrap(), 2, 8, 100, 1).unwrap();
        assert_eq!(r.fraction, 1.0);
    }
}
