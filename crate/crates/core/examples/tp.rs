use antsearch::experiments::{run_experiment, ExperimentConfig};
use antsearch::TargetSpec;
use std::time::Instant;
fn main() {
    for (alg, d, n, trials) in [("nonuniform:D=32", 32u64, 1u32, 2000u32), ("nonuniform:D=64", 64, 16, 2000), ("nonuniform-search:D=256,l=2", 256, 16, 20)] {
        let t = Instant::now();
        let cfg = ExperimentConfig { algorithm: alg.parse().unwrap(), d, n, target: if d==256 {TargetSpec::UniformSquare{d}} else {TargetSpec::WorstCorner { d }}, trials, budget: 1 << 24, master_seed: 1, jobs: None };
        let r = run_experiment(&cfg).unwrap();
        let steps: u64 = r.records.iter().map(|x| x.m_steps.unwrap_or(0)).sum();
        println!("{alg} n={n} mean {} exhaust {} time {:?} min-steps total {steps}", r.row.mean, r.row.exhaust_rate, t.elapsed());
    }
}
