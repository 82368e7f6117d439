//! Node placement and the random-walk mobility model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng::{network_rng, node_rng, Stream};
use super::scenario::{Scenario, ScenarioError};
use crate::protocol::{NodeState, ProtocolConfig};
use crate::NodeId;

/// Sink first, then sensors in id order. Exactly `⌊mobile_fraction·node_count⌋`
/// sensors are mobile; the sink never moves.
pub fn generate_topology(scenario: &Scenario, cfg: &ProtocolConfig) -> Result<Vec<NodeState>, ScenarioError> {
    if scenario.node_count < 1 {
        return Err(ScenarioError::new("node_count", "at least the sink is required"));
    }
    if scenario.area.iter().any(|a| !(*a > 0.0)) {
        return Err(ScenarioError::new("area", "deployment box has zero volume"));
    }
    let sensors = scenario.node_count - 1;
    let mobile_count = scenario.mobile_count().min(sensors);
    let mut ids: Vec<NodeId> = (1..scenario.node_count as NodeId).collect();
    let mut pick = network_rng(scenario.seed, Stream::Topology);
    // partial Fisher-Yates: the first `mobile_count` ids become mobile
    for i in 0..mobile_count {
        let j = pick.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    let mut mobile = vec![false; scenario.node_count];
    for &id in &ids[..mobile_count] {
        mobile[id as usize] = true;
    }

    let mut nodes = Vec::with_capacity(scenario.node_count);
    nodes.push(NodeState::new_root(0, scenario.sink_position, scenario.initial_sink_energy_j, cfg));
    for id in 1..scenario.node_count as NodeId {
        let mut rng = node_rng(scenario.seed, id, Stream::Topology);
        let pos = [
            rng.gen_range(0.0..=scenario.area[0]),
            rng.gen_range(0.0..=scenario.area[1]),
            rng.gen_range(0.0..=scenario.area[2]),
        ];
        nodes.push(NodeState::new_sensor(
            id,
            pos,
            scenario.initial_node_energy_j,
            mobile[id as usize],
            cfg,
        ));
    }
    Ok(nodes)
}

/// Random-walk state of one mobile node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Walk {
    pub velocity: [f64; 3],
    pub next_draw_s: f64,
}

impl Walk {
    pub fn idle() -> Self {
        Self { velocity: [0.0; 3], next_draw_s: 0.0 }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    // uniform on the sphere
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

fn reflect(x: f64, v: f64, hi: f64) -> (f64, f64) {
    let mut x = x;
    let mut v = v;
    // a single tick never crosses the box more than a few times
    for _ in 0..8 {
        if x < 0.0 {
            x = -x;
            v = -v;
        } else if x > hi {
            x = 2.0 * hi - x;
            v = -v;
        } else {
            break;
        }
    }
    (x.clamp(0.0, hi), v)
}

/// Advance a node by `dt_s` starting at `now_s`. Direction and speed are
/// redrawn whenever an epoch boundary is reached. Returns the new position.
pub fn mobility_step(
    position: [f64; 3],
    walk: &mut Walk,
    now_s: f64,
    dt_s: f64,
    rng: &mut ChaCha8Rng,
    scenario: &Scenario,
) -> [f64; 3] {
    if now_s >= walk.next_draw_s {
        let dir = random_direction(rng);
        let (lo, hi) = scenario.speed_range_mps;
        let speed = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        walk.velocity = [dir[0] * speed, dir[1] * speed, dir[2] * speed];
        walk.next_draw_s = now_s + scenario.direction_epoch_s;
    }
    let mut p = position;
    for i in 0..3 {
        let (x, v) = reflect(p[i] + walk.velocity[i] * dt_s, walk.velocity[i], scenario.area[i]);
        p[i] = x;
        walk.velocity[i] = v;
    }
    p
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
