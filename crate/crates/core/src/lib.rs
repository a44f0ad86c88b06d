//! Plane-search simulation with probabilistic finite automata, plus exact
//! Markov-chain analysis of the automata.

pub mod algorithms;
pub mod automaton;
pub mod chain_analysis;
pub mod experiments;
pub mod generate;
pub mod grid_sim;
pub mod procedural;
pub mod rational;
pub mod rng;

pub use automaton::{Action, Automaton, ChiMetric, StateId};
pub use grid_sim::{GridPoint, Program, TargetSpec, Walker};
pub use rational::Rational;
