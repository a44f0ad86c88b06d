use antsearch::algorithms::{build_nonuniform, hit_probability_per_iteration};
use antsearch::experiments::{run_experiment, sample_iteration, summarize, ExperimentConfig};
use antsearch::procedural::{sample_phase, UniformProgram};
use antsearch::rng;
use antsearch::{GridPoint, TargetSpec};
use rayon::prelude::*;

fn mean_se(values: &[f64]) -> (f64, f64) {
    let (m, sd, _, _) = summarize(values);
    (m, sd / (values.len() as f64).sqrt())
}

/// Expected moves to reach (1,0) with one agent, by summing the iteration
/// series directly. An iteration hits (1,0) only when the vertical leg is
/// empty (probability 1/D), the agent turns right (1/2) and walks at least
/// one step, in which case the hit is its first move.
fn single_agent_oracle(d: f64) -> f64 {
    let stop = 1.0 / d;
    let walk_mean = (1.0 - stop) / stop;
    let hit = stop * 0.5 * (1.0 - stop);
    // Moves of an iteration that hits: its horizontal walk, given length >= 1.
    let hit_moves = stop * 0.5 * walk_mean;
    let miss_moves = 2.0 * walk_mean - hit_moves;
    // Each miss costs its moves; the hit iteration costs 1 move.
    (miss_moves / hit) + 1.0
}

#[test]
fn single_agent_mean_matches_series_oracle() {
    let cfg = ExperimentConfig {
        algorithm: "nonuniform:D=2".parse().unwrap(),
        d: 2,
        n: 1,
        target: TargetSpec::Fixed { at: GridPoint::new(1, 0) },
        trials: 1_000_000,
        budget: 1_000,
        master_seed: 11,
        jobs: None,
    };
    let res = run_experiment(&cfg).unwrap();
    let oracle = single_agent_oracle(2.0);
    assert_eq!(oracle, 15.0);
    let se = res.row.std / (cfg.trials as f64).sqrt();
    assert!((res.row.mean - oracle).abs() <= 5.0 * se, "{} vs {oracle} (se {se})", res.row.mean);
}

#[test]
fn corner_mean_within_proof_bound() {
    let d = 8;
    let cfg = ExperimentConfig {
        algorithm: "nonuniform:D=8".parse().unwrap(),
        d,
        n: 1,
        target: TargetSpec::WorstCorner { d },
        trials: 10_000,
        budget: 1_000_000,
        master_seed: 12,
        jobs: None,
    };
    let res = run_experiment(&cfg).unwrap();
    let h = hit_probability_per_iteration(d, GridPoint::new(8, 8)).unwrap().to_f64();
    let bound = 4.0 * d as f64 / h;
    assert_eq!(res.row.exhaust_rate, 0.0);
    assert!(res.row.mean <= bound, "{} vs {bound}", res.row.mean);
}

fn iterations(d: u64, target: GridPoint, seed: u64, count: u32) -> Vec<antsearch::experiments::IterationSample> {
    let a = build_nonuniform(d).unwrap();
    (0..count / 1000)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(seed, d as u32, c);
            (0..1000).map(|_| sample_iteration(&a, 0, target, &mut r)).collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn iteration_mean_is_two_d_minus_two() {
    for d in [2u64, 8, 32] {
        let s = iterations(d, GridPoint::new(i64::MAX, 0), 13, 100_000);
        let (m, se) = mean_se(&s.iter().map(|x| x.moves as f64).collect::<Vec<_>>());
        let exact = 2.0 * (d as f64 - 1.0);
        assert!((m - exact).abs() <= 5.0 * se, "D={d}: {m} vs {exact}");
        assert!(m <= 2.0 * d as f64 + 5.0 * se);
    }
}

#[test]
fn missing_at_most_doubles_the_iteration_mean() {
    for d in [2u64, 8] {
        let s = iterations(d, GridPoint::new(1, 0), 14, 1_000_000);
        let all: Vec<f64> = s.iter().map(|x| x.moves as f64).collect();
        let missed: Vec<f64> = s.iter().filter(|x| x.hit_at.is_none()).map(|x| x.moves as f64).collect();
        let (m, se) = mean_se(&all);
        let (mc, sec) = mean_se(&missed);
        assert!(mc <= 2.0 * m + 5.0 * (sec + 2.0 * se), "D={d}: {mc} vs 2x{m}");
    }
}

#[test]
fn moves_until_find_in_iteration_i_within_4id() {
    let d = 4u64;
    let a = build_nonuniform(d).unwrap();
    let target = GridPoint::new(4, 4);
    let finds: Vec<(usize, f64)> = (0..1_000_000u32)
        .into_par_iter()
        .filter_map(|t| {
            let mut r = rng::stream(15, 0, t);
            let mut total = 0;
            for i in 1..=5 {
                let s = sample_iteration(&a, 0, target, &mut r);
                if let Some(h) = s.hit_at {
                    return Some((i, (total + h) as f64));
                }
                total += s.moves;
            }
            None
        })
        .collect();
    for i in 1..=5 {
        let bucket: Vec<f64> = finds.iter().filter(|f| f.0 == i).map(|f| f.1).collect();
        assert!(bucket.len() > 100);
        let (m, se) = mean_se(&bucket);
        assert!(m <= 4.0 * (i as f64) * d as f64 + 5.0 * se, "i={i}: {m}");
    }
}

#[test]
fn covering_phase_calls_and_finds() {
    let (ell, big_k, n) = (1u32, 8u32, 16u64);
    let program = UniformProgram { ell, n, big_k };
    for (d, i0) in [(4i64, 2u32), (8, 3)] {
        let floor = 1u64 << ((big_k / 2 + i0) * ell);
        let out: Vec<(u64, bool)> = (0..1_000u64)
            .into_par_iter()
            .map(|t| {
                let (mut calls, mut found) = (0, false);
                for agent in 0..n {
                    let mut r = rng::stream(16, d as u32, (t * n + agent) as u32);
                    let s = sample_phase(&program, i0, (d, d), &mut r);
                    calls += s.search_calls;
                    found |= s.found;
                }
                (calls, found)
            })
            .collect();
        let enough = out.iter().filter(|o| o.0 >= floor).count() as f64 / 1000.0;
        let found = out.iter().filter(|o| o.1).count() as f64 / 1000.0;
        assert!(enough >= 1.0 - 1.0 / 16.0, "D={d}: {enough}");
        assert!(found >= 1.0 - 1.0 / 8.0, "D={d}: {found}");
    }
}
