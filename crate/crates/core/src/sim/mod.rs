//! Deterministic discrete-event simulator.

pub mod energy;
pub mod engine;
pub mod rng;
pub mod scenario;
pub mod topology;

pub use energy::{EnergyAccount, EnergyUse};
pub use engine::{run_scenario, NodeSummary, RunOutput, SafetyStats};
pub use scenario::{LossMode, Scenario, ScenarioError};
pub use topology::{generate_topology, mobility_step, Walk};
