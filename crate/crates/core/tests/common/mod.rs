//! Independent oracles shared by integration tests.
#![allow(dead_code)]

use antsearch::automaton::{Automaton, StateId};
use antsearch::Rational;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Boolean `m`-step reachability matrix.
fn bool_power(adj: &[Vec<bool>], m: usize) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut out: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    for _ in 0..m {
        out = (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|k| out[i][k] && adj[k][j])).collect())
            .collect();
    }
    out
}

fn adjacency(a: &Automaton) -> Vec<Vec<bool>> {
    let n = a.state_count();
    (0..n)
        .map(|i| (0..n).map(|j| !a.prob(i, j).is_zero()).collect())
        .collect()
}

/// Recurrent classes as (states, period, cyclic classes), and transient
/// states, by transitive closure and closed-walk length enumeration.
pub struct BruteDecomposition {
    pub classes: Vec<(Vec<StateId>, usize, Vec<Vec<StateId>>)>,
    pub transient: Vec<StateId>,
}

pub fn brute_decompose(a: &Automaton) -> BruteDecomposition {
    let n = a.state_count();
    let adj = adjacency(a);
    // Reflexive transitive closure by Floyd-Warshall.
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j || adj[i][j]).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let recurrent: Vec<bool> = (0..n).map(|s| (0..n).all(|t| !reach[s][t] || reach[t][s])).collect();
    let mut classes = Vec::new();
    let mut seen = vec![false; n];
    let walk_len = 2 * n * n + 2;
    let powers: Vec<Vec<Vec<bool>>> = (0..=walk_len).map(|m| bool_power(&adj, m)).collect();
    for s in 0..n {
        if !recurrent[s] || seen[s] {
            continue;
        }
        let states: Vec<StateId> = (0..n).filter(|&t| reach[s][t] && reach[t][s]).collect();
        for &t in &states {
            seen[t] = true;
        }
        let period = (1..=walk_len)
            .filter(|&m| powers[m][s][s])
            .fold(0usize, gcd);
        let feller: Vec<Vec<StateId>> = (0..period)
            .map(|j| {
                states
                    .iter()
                    .copied()
                    .filter(|&t| (0..=walk_len).any(|m| m % period == j && powers[m][s][t]))
                    .collect()
            })
            .collect();
        classes.push((states, period, feller));
    }
    BruteDecomposition {
        classes,
        transient: (0..n).filter(|&s| !recurrent[s]).collect(),
    }
}

/// Exact distribution after `k` steps by repeated vector-matrix products.
pub fn push_steps(a: &Automaton, init: &[Rational], k: usize) -> Vec<Rational> {
    let n = a.state_count();
    let mut v = init.to_vec();
    for _ in 0..k {
        let mut out = vec![Rational::zero(); n];
        for (i, m) in v.iter().enumerate() {
            for t in a.row(i) {
                out[t.to] = out[t.to].clone() + m.clone() * t.prob.clone();
            }
        }
        v = out;
    }
    v
}
