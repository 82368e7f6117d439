//! RPLUW / RPLUWM control plane.

pub mod message;
pub mod node;
pub mod rank;
pub mod trickle;

pub use message::{ControlMessage, Destination, MessageKind, Outbound, RxInfo};
pub use node::{Mode, NodeState, ProtocolConfig, TimerKind, TimerUpdate, Transition};
pub use rank::{compute_rank, RankWeights, INFINITE_RANK, ROOT_RANK};
pub use trickle::{TrickleConfig, TrickleState};
