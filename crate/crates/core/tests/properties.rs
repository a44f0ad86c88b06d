use antsearch::automaton::SizeBudget;
use antsearch::chain_analysis::predict_coverage_for_drifts;
use antsearch::generate::random_automaton;
use antsearch::grid_sim::{run_agent, run_swarm, RunOptions, SwarmOptions};
use antsearch::rng;
use antsearch::{GridPoint, Rational, TargetSpec};
use proptest::prelude::*;

fn automaton(seed: u64) -> antsearch::Automaton {
    random_automaton(&mut rng::stream(seed, 0, 0), 6, 8)
}

/// Random automata may rarely move; keep the step cap small.
fn swarm_opts(prune: bool) -> SwarmOptions {
    SwarmOptions { run: RunOptions { step_cap_factor: 64, trace: false }, prune }
}

fn le_opt(a: Option<u64>, b: Option<u64>) -> bool {
    match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(x), Some(y)) => x <= y,
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn step_distribution_is_a_semigroup(seed in any::<u64>(), j in 0u64..6, k in 0u64..6) {
        let a = automaton(seed);
        let init = a.point_mass(a.start());
        let budget = SizeBudget::default();
        let direct = a.step_distribution(&init, j + k, budget).unwrap();
        let mid = a.step_distribution(&init, j, budget).unwrap();
        prop_assert_eq!(direct, a.step_distribution(&mid, k, budget).unwrap());
    }

    #[test]
    fn distributions_stay_normalized(seed in any::<u64>(), k in 0u64..8) {
        let a = automaton(seed);
        let d = a.step_distribution(&a.point_mass(a.start()), k, SizeBudget::default()).unwrap();
        prop_assert!(d.iter().sum::<Rational>().is_one());
    }

    #[test]
    fn replay_is_identical(seed in any::<u64>(), trial in 0u32..100, agent in 0u32..100, x in 1i64..4) {
        let a = automaton(seed);
        let opts = RunOptions { trace: true, step_cap_factor: 64 };
        let target = GridPoint::new(x, 0);
        let r1 = run_agent(&a, target, 50, &mut rng::stream(seed, trial, agent), &opts);
        let r2 = run_agent(&a, target, 50, &mut rng::stream(seed, trial, agent), &opts);
        prop_assert_eq!(r1, r2);
    }

    #[test]
    fn more_agents_never_slow_the_swarm(seed in any::<u64>(), m in 1u32..6, extra in 0u32..6) {
        let a = automaton(seed);
        let target = TargetSpec::UniformSquare { d: 3 };
        let opts = swarm_opts(true);
        let small = run_swarm(&a, m, &target, 200, seed, 0, &opts).unwrap();
        let large = run_swarm(&a, m + extra, &target, 200, seed, 0, &opts).unwrap();
        prop_assert!(le_opt(large.m_moves, small.m_moves));
        prop_assert!(le_opt(large.m_steps, small.m_steps));
    }

    #[test]
    fn pruning_keeps_the_minima(seed in any::<u64>(), n in 1u32..8) {
        let a = automaton(seed);
        let target = TargetSpec::WorstCorner { d: 2 };
        let pruned = run_swarm(&a, n, &target, 300, seed, 1, &swarm_opts(true)).unwrap();
        let full = run_swarm(&a, n, &target, 300, seed, 1, &swarm_opts(false)).unwrap();
        prop_assert_eq!(pruned.m_moves, full.m_moves);
        prop_assert_eq!(pruned.m_steps, full.m_steps);
        prop_assert_eq!(pruned.finder, full.finder);
    }

    #[test]
    fn coverage_grows_with_slack_and_horizon(
        dx in -1.0f64..1.0, dy in -1.0f64..1.0,
        d in 1u64..40, delta in 1u64..80, w in 0u64..6, dw in 0u64..4, ddelta in 0u64..40,
    ) {
        let drifts = [(dx, dy)];
        let base = predict_coverage_for_drifts(&drifts, d, delta, w).unwrap();
        let wider = predict_coverage_for_drifts(&drifts, d, delta, w + dw).unwrap();
        let longer = predict_coverage_for_drifts(&drifts, d, delta + ddelta, w).unwrap();
        prop_assert!(wider.cells >= base.cells);
        prop_assert!(longer.cells >= base.cells);
        let di = d as i64;
        for y in -di..=di {
            for x in -di..=di {
                let q = GridPoint::new(x, y);
                if base.contains(q) {
                    prop_assert!(wider.contains(q) && longer.contains(q));
                }
            }
        }
    }
}

