//! Seeded random automata for property tests and oracle comparisons.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::automaton::{Action, Automaton, StateId};
use crate::rational::Rational;

/// Splits `den` into `parts` positive integers, uniformly over compositions.
fn composition<R: Rng>(rng: &mut R, den: u64, parts: usize) -> Vec<u64> {
    let mut cuts: Vec<u64> = (1..den).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<u64> = cuts.into_iter().take(parts - 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(den)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

fn random_row<R: Rng>(rng: &mut R, n: usize, den: u64, forced: Option<StateId>) -> Vec<(StateId, Rational)> {
    let max_support = n.min(den as usize).min(4);
    let support = rng.gen_range(1..=max_support);
    let mut targets: Vec<StateId> = (0..n).collect();
    targets.shuffle(rng);
    targets.truncate(support);
    if let Some(f) = forced {
        if !targets.contains(&f) {
            targets[0] = f;
        }
    }
    composition(rng, den, targets.len())
        .into_iter()
        .zip(targets)
        .map(|(num, to)| (to, Rational::frac(num, den)))
        .collect()
}

fn random_labels<R: Rng>(rng: &mut R, n: usize) -> Vec<Action> {
    let mut labels: Vec<Action> = (0..n).map(|_| *Action::ALL.choose(rng).expect("nonempty")).collect();
    labels[0] = Action::Origin;
    labels
}

/// An arbitrary automaton with `1..=max_states` states. Every probability is
/// a multiple of `1/den`.
pub fn random_automaton<R: Rng>(rng: &mut R, max_states: usize, den: u64) -> Automaton {
    let n = rng.gen_range(1..=max_states);
    let rows = (0..n).map(|_| random_row(rng, n, den, None)).collect();
    Automaton::new(0, random_labels(rng, n), rows).expect("generated automaton is valid")
}

/// An irreducible automaton on exactly `n` states: a Hamiltonian cycle
/// plus random extra edges. Probabilities are multiples of `1/den`, so
/// `p0 ≥ 1/den`.
pub fn random_irreducible<R: Rng>(rng: &mut R, n: usize, den: u64) -> Automaton {
    let mut order: Vec<StateId> = (0..n).collect();
    order[1..].shuffle(rng);
    let mut next = vec![0; n];
    for i in 0..n {
        next[order[i]] = order[(i + 1) % n];
    }
    let rows = (0..n).map(|s| random_row(rng, n, den, Some(next[s]))).collect();
    Automaton::new(0, random_labels(rng, n), rows).expect("generated automaton is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_analysis::decompose;
    use crate::rng;

    #[test]
    fn compositions_sum() {
        let mut r = rng::stream(1, 0, 0);
        for parts in 1..=8 {
            let c = composition(&mut r, 8, parts);
            assert_eq!(c.len(), parts);
            assert_eq!(c.iter().sum::<u64>(), 8);
            assert!(c.iter().all(|&x| x >= 1));
        }
    }

    #[test]
    fn irreducible_has_one_class() {
        let mut r = rng::stream(2, 0, 0);
        for n in 1..=5 {
            let a = random_irreducible(&mut r, n, 8);
            let dec = decompose(&a);
            assert_eq!(dec.classes.len(), 1);
            assert!(dec.transient.is_empty());
            assert!(a.min_probability() >= Rational::frac(1, 8));
        }
    }
}
