//! Landscape-aware online hyperparameter control for permutation
//! metaheuristics.
//!
//! A run alternates between search and control: the engine advances a
//! generation, [`ela`] condenses the live population into five landscape
//! features, the [`reasoning`] chain turns them into a directive and then
//! into new parameter values, and the [`experience`] pool remembers how each
//! decision worked out. [`controller`] wires the loop together.

pub mod ela;
pub mod metaheuristics;
pub mod problems;
pub mod rng;
pub mod experience;
pub mod llm;
pub mod reasoning;
pub mod controller;
