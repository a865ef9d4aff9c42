//! ε-safe conditional planning: plans that reach their goal with
//! probability at least `1 - epsilon` under a probabilistic model of the
//! world, built by a linear (tree) or nonlinear (partial-order) planner.

pub mod domain;
pub mod error;
pub mod plan;
pub mod plangraph;
pub mod planner;
pub mod probmodel;
pub mod sexpr;
pub mod simulator;
