//! Underwater RPL routing with a deterministic discrete-event simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod madm;
pub mod metrics;
pub mod protocol;
pub mod sim;
pub mod trace;

/// Node identifier. The sink is always node 0.
pub type NodeId = u32;
