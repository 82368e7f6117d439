use serde::{Deserialize, Serialize};

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    Dio,
    Dao,
    DaoAck,
    Dis,
    Ns,
    Na,
    Rs,
    Ra,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::Dio,
        MessageKind::Dao,
        MessageKind::DaoAck,
        MessageKind::Dis,
        MessageKind::Ns,
        MessageKind::Na,
        MessageKind::Rs,
        MessageKind::Ra,
    ];

    /// On-air size. RA carries the same graph parameters as a DIO.
    pub fn size_bytes(self) -> u32 {
        match self {
            MessageKind::Dio | MessageKind::Ra => 50,
            MessageKind::Dao
            | MessageKind::DaoAck
            | MessageKind::Dis
            | MessageKind::Ns
            | MessageKind::Na
            | MessageKind::Rs => 4,
        }
    }

    pub fn is_neighbor_discovery(self) -> bool {
        matches!(self, MessageKind::Ns | MessageKind::Na | MessageKind::Rs | MessageKind::Ra)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            MessageKind::Dio => "DIO",
            MessageKind::Dao => "DAO",
            MessageKind::DaoAck => "DAO-ACK",
            MessageKind::Dis => "DIS",
            MessageKind::Ns => "NS",
            MessageKind::Na => "NA",
            MessageKind::Rs => "RS",
            MessageKind::Ra => "RA",
        }
    }
}

impl std::fmt::Display for MessageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Control plane payload. DIO and RA advertise the sender's position in the
/// graph; DAO carries the registering `target_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub kind: MessageKind,
    pub sender_id: NodeId,
    /// `f64::INFINITY` marks a poisoned (detached) advertisement.
    pub rank: f64,
    pub depth_m: f64,
    /// Sender's smoothed link SNR (dB) towards its own preferred parent,
    /// or towards the receiver for DAO.
    pub arssi: f64,
    pub dodag_root_id: NodeId,
    pub root_position: [f64; 3],
    pub sequence: u16,
    pub size_bytes: u32,
    pub hop_count: u32,
    pub residual_energy_j: f64,
    pub target_id: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Destination {
    Broadcast,
    Unicast(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub dest: Destination,
    pub msg: ControlMessage,
}

/// Physical-layer facts about a received frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxInfo {
    pub snr_db: f64,
    pub delay_s: f64,
}

/// Serial-number comparison over 16-bit wrapping counters: is `a` newer than `b`?
pub fn seq_newer(a: u16, b: u16) -> bool {
    (a.wrapping_sub(b) as i16) > 0
}
