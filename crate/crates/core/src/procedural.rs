//! Direct interpreters of the search procedures, flipping coins with their
//! own random draws instead of walking a compiled state machine. They serve
//! as reference programs for the compiled automata and run the unbounded
//! uniform search.
//!
//! A procedural step is one emitted grid action (a move or a return to the
//! origin); coin flips are local computation and cost no steps.

use rand::Rng;

use crate::automaton::{Action, StateId};
use crate::grid_sim::{Program, Walker};
use crate::rational::Rational;
use crate::rng::AgentRng;

/// A coin showing tails with a fixed probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coin {
    /// `C_{1/d}`.
    OneOver(u64),
    /// `coin(k, ℓ)`: `k` flips of `C_{1/2^ℓ}`, tails iff all are tails.
    Boosted { k: u32, ell: u32 },
}

impl Coin {
    pub fn tails_probability(&self) -> Rational {
        match *self {
            Coin::OneOver(d) => Rational::frac(1, d),
            Coin::Boosted { k, ell } => Rational::pow2_neg(k * ell),
        }
    }

    /// Returns true for tails.
    #[inline]
    pub fn flip(&self, rng: &mut AgentRng) -> bool {
        match *self {
            Coin::OneOver(d) => rng.gen_range(0..d) == 0,
            Coin::Boosted { k, ell } => (0..k).all(|_| biased_tails(ell, rng)),
        }
    }
}

/// One flip of `C_{1/2^ℓ}`; true for tails.
#[inline]
pub fn biased_tails(ell: u32, rng: &mut AgentRng) -> bool {
    debug_assert!((1..64).contains(&ell));
    rng.gen::<u64>() & ((1u64 << ell) - 1) == 0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Leg {
    Vertical(Action),
    Horizontal(Action),
}

fn vertical(rng: &mut AgentRng) -> Leg {
    Leg::Vertical(if rng.gen::<bool>() { Action::Up } else { Action::Down })
}

fn horizontal(rng: &mut AgentRng) -> Leg {
    Leg::Horizontal(if rng.gen::<bool>() { Action::Right } else { Action::Left })
}

/// The non-uniform loop: pick a vertical direction and walk while the coin
/// shows heads, then the same horizontally, then return to the origin.
#[derive(Clone, Copy, Debug)]
pub struct IterationProgram {
    pub coin: Coin,
}

pub struct IterationWalker {
    coin: Coin,
    leg: Option<Leg>,
}

impl Walker for IterationWalker {
    fn state(&self) -> StateId {
        match self.leg {
            None => 0,
            Some(Leg::Vertical(_)) => 1,
            Some(Leg::Horizontal(_)) => 2,
        }
    }

    fn next_action(&mut self, rng: &mut AgentRng) -> Option<Action> {
        loop {
            let leg = match self.leg {
                Some(leg) => leg,
                None => {
                    let leg = vertical(rng);
                    self.leg = Some(leg);
                    leg
                }
            };
            let tails = self.coin.flip(rng);
            match (leg, tails) {
                (Leg::Vertical(dir) | Leg::Horizontal(dir), false) => return Some(dir),
                (Leg::Vertical(_), true) => self.leg = Some(horizontal(rng)),
                (Leg::Horizontal(_), true) => {
                    self.leg = None;
                    return Some(Action::Origin);
                }
            }
        }
    }
}

impl Program for IterationProgram {
    type Walker<'a> = IterationWalker;

    fn walker(&self) -> IterationWalker {
        IterationWalker {
            coin: self.coin,
            leg: None,
        }
    }
}

/// `⌊log₂ n / ℓ⌋`, computed exactly as the largest `m` with `2^{mℓ} ≤ n`.
pub fn floor_log_n_over_ell(n: u64, ell: u32) -> u32 {
    let mut m = 0u32;
    while ((m + 1) as u64) * (ell as u64) < 64 && (1u64 << ((m + 1) * ell)) <= n {
        m += 1;
    }
    m
}

/// Number of flips of the phase-`i` gating coin:
/// `K + max(i - ⌊log₂n/ℓ⌋, 0)`.
pub fn phase_coin_flips(i: u32, ell: u32, n: u64, big_k: u32) -> u32 {
    big_k + i.saturating_sub(floor_log_n_over_ell(n, ell))
}

/// The uniform search with unbounded phases. Phase `i` repeats
/// `search(i, ℓ)` followed by a return to the origin while the phase coin
/// shows heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniformProgram {
    pub ell: u32,
    pub n: u64,
    pub big_k: u32,
}

#[derive(Clone, Copy, Debug)]
enum UniformMode {
    PhaseCoin,
    Walking(Leg),
}

pub struct UniformWalker {
    program: UniformProgram,
    phase: u32,
    mode: UniformMode,
}

impl UniformWalker {
    pub fn phase(&self) -> u32 {
        self.phase
    }
}

impl Walker for UniformWalker {
    fn state(&self) -> StateId {
        let mode = match self.mode {
            UniformMode::PhaseCoin => 0,
            UniformMode::Walking(Leg::Vertical(_)) => 1,
            UniformMode::Walking(Leg::Horizontal(_)) => 2,
        };
        self.phase as StateId * 4 + mode
    }

    fn next_action(&mut self, rng: &mut AgentRng) -> Option<Action> {
        let UniformProgram { ell, n, big_k } = self.program;
        loop {
            match self.mode {
                UniformMode::PhaseCoin => {
                    let gate = Coin::Boosted {
                        k: phase_coin_flips(self.phase, ell, n, big_k),
                        ell,
                    };
                    if gate.flip(rng) {
                        self.phase += 1;
                    } else {
                        self.mode = UniformMode::Walking(vertical(rng));
                    }
                }
                UniformMode::Walking(leg) => {
                    let walk = Coin::Boosted { k: self.phase, ell };
                    let tails = walk.flip(rng);
                    match (leg, tails) {
                        (Leg::Vertical(dir) | Leg::Horizontal(dir), false) => return Some(dir),
                        (Leg::Vertical(_), true) => {
                            self.mode = UniformMode::Walking(horizontal(rng))
                        }
                        (Leg::Horizontal(_), true) => {
                            self.mode = UniformMode::PhaseCoin;
                            return Some(Action::Origin);
                        }
                    }
                }
            }
        }
    }
}

impl Program for UniformProgram {
    type Walker<'a> = UniformWalker;

    fn walker(&self) -> UniformWalker {
        UniformWalker {
            program: *self,
            phase: 1,
            mode: UniformMode::PhaseCoin,
        }
    }
}

/// Statistics of one agent's pass through a single uniform-search phase,
/// started at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseSample {
    pub search_calls: u64,
    pub moves: u64,
    pub found: bool,
}

/// Runs phase `phase` of the uniform search for one agent, recording search
/// calls, moves and whether `target` was stepped on.
pub fn sample_phase(
    program: &UniformProgram,
    phase: u32,
    target: (i64, i64),
    rng: &mut AgentRng,
) -> PhaseSample {
    let gate = Coin::Boosted {
        k: phase_coin_flips(phase, program.ell, program.n, program.big_k),
        ell: program.ell,
    };
    let walk = Coin::Boosted {
        k: phase,
        ell: program.ell,
    };
    let mut sample = PhaseSample {
        search_calls: 0,
        moves: 0,
        found: false,
    };
    while !gate.flip(rng) {
        sample.search_calls += 1;
        let (mut x, mut y) = (0i64, 0i64);
        let up = rng.gen::<bool>();
        while !walk.flip(rng) {
            y += if up { 1 } else { -1 };
            sample.moves += 1;
            sample.found |= (x, y) == target;
        }
        let right = rng.gen::<bool>();
        while !walk.flip(rng) {
            x += if right { 1 } else { -1 };
            sample.moves += 1;
            sample.found |= (x, y) == target;
        }
    }
    sample
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn floor_log_values() {
        assert_eq!(floor_log_n_over_ell(1, 1), 0);
        assert_eq!(floor_log_n_over_ell(4, 1), 2);
        assert_eq!(floor_log_n_over_ell(16, 2), 2);
        assert_eq!(floor_log_n_over_ell(15, 2), 1);
        assert_eq!(floor_log_n_over_ell(u64::MAX, 1), 63);
        assert_eq!(phase_coin_flips(3, 1, 4, 2), 3);
        assert_eq!(phase_coin_flips(1, 1, 4, 2), 2);
    }

    #[test]
    fn boosted_coin_frequency() {
        let coin = Coin::Boosted { k: 2, ell: 1 };
        let mut r = rng::stream(3, 0, 0);
        let n = 200_000;
        let tails = (0..n).filter(|_| coin.flip(&mut r)).count() as f64 / n as f64;
        let sd = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((tails - 0.25).abs() < 5.0 * sd, "{tails}");
        assert_eq!(coin.tails_probability(), Rational::frac(1, 4));
        assert!(Coin::Boosted { k: 0, ell: 3 }.flip(&mut r));
    }

    #[test]
    fn iteration_walker_emits_l_shapes() {
        let p = IterationProgram {
            coin: Coin::OneOver(3),
        };
        let mut w = p.walker();
        let mut r = rng::stream(9, 0, 0);
        let mut seen_horizontal = false;
        for _ in 0..10_000 {
            match w.next_action(&mut r).unwrap() {
                Action::Up | Action::Down => assert!(!seen_horizontal),
                Action::Left | Action::Right => seen_horizontal = true,
                Action::Origin => seen_horizontal = false,
                Action::None => unreachable!(),
            }
        }
    }

    #[test]
    fn uniform_walker_advances_phases() {
        let p = UniformProgram {
            ell: 1,
            n: 1,
            big_k: 1,
        };
        let mut w = p.walker();
        let mut r = rng::stream(1, 0, 0);
        for _ in 0..5_000 {
            assert!(w.next_action(&mut r).is_some());
        }
        assert!(w.phase() > 1);
    }
}
