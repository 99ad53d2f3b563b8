//! Multi-timescale simulator of O-RAN dynamic spectrum allocation.
//!
//! A Non-RT RIC rApp forecasts per-RU load and issues a [`PolicyProfile`]
//! once per episode. A Near-RT RIC xApp turns each slot's radio snapshot
//! into a conflict graph, colors it with PRBs and applies a post-coloring
//! fairness step. The [`sim`] module drives both loops and records
//! per-slot outcomes.
//!
//! [`PolicyProfile`]: policy::PolicyProfile

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod coloring;
pub mod config;
pub mod control;
pub mod error;
pub mod fairness;
pub mod graph;
pub mod ids;
pub mod metrics;
pub mod mobility;
pub mod policy;
pub mod radio;
pub mod rng;
pub mod sim;
pub mod traffic;
pub mod xapp;

pub use error::{Error, Result};
pub use ids::{RuId, UeId};
