mod common;

use antsearch::chain_analysis::{
    decompose, is_exactly_stationary, mixing_certificate, rotate_once, stationary,
};
use antsearch::generate::{random_automaton, random_irreducible};
use antsearch::rng;
use antsearch::Rational;
use common::{brute_decompose, push_steps};

#[test]
fn decomposition_matches_brute_force() {
    let mut r = rng::stream(20, 0, 0);
    for i in 0..200 {
        let a = random_automaton(&mut r, 6, 6);
        let dec = decompose(&a);
        let brute = brute_decompose(&a);
        assert_eq!(dec.transient, brute.transient, "automaton {i}");
        assert_eq!(dec.classes.len(), brute.classes.len(), "automaton {i}");
        for (c, (states, period, feller)) in dec.classes.iter().zip(&brute.classes) {
            assert_eq!(&c.states, states, "automaton {i}");
            assert_eq!(c.period, *period, "automaton {i}");
            assert_eq!(&c.feller, feller, "automaton {i}");
        }
    }
}

#[test]
fn stationary_solves_are_exact_and_rotate() {
    let mut r = rng::stream(21, 0, 0);
    for _ in 0..200 {
        let a = random_automaton(&mut r, 6, 6);
        let dec = decompose(&a);
        for (ci, c) in dec.classes.iter().enumerate() {
            let pis: Vec<Vec<Rational>> = (0..c.period)
                .map(|tau| stationary(&a, &dec, ci, tau).unwrap().exact.expect("small chain"))
                .collect();
            for (tau, pi) in pis.iter().enumerate() {
                assert!(is_exactly_stationary(&a, c, tau, pi));
                // Independent check: push through P^t from the full state space.
                let mut init = vec![Rational::zero(); a.state_count()];
                for (s, p) in c.feller[tau].iter().zip(pi) {
                    init[*s] = p.clone();
                }
                assert_eq!(push_steps(&a, &init, c.period), init);
                let next = (tau + 1) % c.period;
                let rotated = rotate_once(&a, c, tau, pi);
                for (k, s) in c.states.iter().enumerate() {
                    let want = c.feller[next]
                        .iter()
                        .position(|u| u == s)
                        .map(|j| pis[next][j].clone())
                        .unwrap_or_else(Rational::zero);
                    assert_eq!(rotated[k], want);
                }
            }
        }
    }
}

#[test]
fn mixing_certificates_hold_on_irreducible_chains() {
    let mut r = rng::stream(22, 0, 0);
    for i in 0..100u64 {
        let n = 2 + (i as usize % 4);
        let a = random_irreducible(&mut r, n, 8);
        let dec = decompose(&a);
        assert_eq!(dec.classes.len(), 1);
        for beta in [1, 7, 16, 64] {
            for tau in 0..dec.classes[0].period {
                let rep = mixing_certificate(&a, &dec, 0, tau, beta).unwrap();
                assert!(rep.holds, "chain {i} beta {beta}: {rep:?}");
                assert_eq!(rep.beta % rep.period as u64, 0);
            }
        }
    }
}
