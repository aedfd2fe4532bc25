//! Finite-horizon tabular reinforcement learning with jump-start roll-in
//! training and exact dynamic-programming oracles.
//!
//! The crate centers on three layers:
//!
//! - **Exact machinery** ([`mdp`], [`dp`], [`envs`]): dense time-inhomogeneous
//!   MDPs, backward-induction solvers, occupancy distributions, and the
//!   combination-lock / gridworld environments.
//! - **Learners** ([`policy`], [`qlearn`], [`jsrl`], [`cb`]): guide-policy
//!   constructors, tabular ε-greedy Q-learning, the guide/explorer roll-in
//!   training loop with curriculum or random switching, and the staged
//!   contextual-bandit variant.
//! - **Measurement** ([`analysis`]): concentratability of a guide against the
//!   optimal occupancy, exact suboptimality, the performance-difference
//!   identity, and sample-complexity sweeps.
//!
//! All randomness flows through seeded named substreams ([`rng`]); every run
//! is bitwise reproducible from a single 64-bit seed.

pub mod analysis;
pub mod cb;
pub mod dp;
pub mod envs;
pub mod error;
pub mod jsrl;
pub mod mdp;
pub mod policy;
pub mod qlearn;
pub mod rng;

pub use error::{Error, Result};
