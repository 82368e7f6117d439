//! Event trace records. One line per record: `time_s,node,kind,peer|-,detail`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceKind {
    /// Frame put on the air.
    Tx,
    /// Frame decoded by a receiver.
    Rx,
    /// Reception destroyed by a collision, half-duplex conflict or low SNR.
    RxLost,
    /// Data packet created at its origin.
    Gen,
    /// Data packet accepted for relaying.
    Fwd,
    /// Data packet reached the sink.
    Deliver,
    /// Data packet discarded.
    Drop,
    /// Protocol timer fired.
    Timer,
    /// Preferred parent changed; peer is the new parent or `-`.
    Parent,
    /// Battery exhausted.
    Death,
    /// Set of nodes connected to the sink changed; detail lists them.
    Reach,
    /// Position after a mobility tick.
    Pos,
    /// A safety property was violated.
    Violation,
}

impl TraceKind {
    pub const ALL: [TraceKind; 13] = [
        TraceKind::Tx,
        TraceKind::Rx,
        TraceKind::RxLost,
        TraceKind::Gen,
        TraceKind::Fwd,
        TraceKind::Deliver,
        TraceKind::Drop,
        TraceKind::Timer,
        TraceKind::Parent,
        TraceKind::Death,
        TraceKind::Reach,
        TraceKind::Pos,
        TraceKind::Violation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TraceKind::Tx => "tx",
            TraceKind::Rx => "rx",
            TraceKind::RxLost => "rx-lost",
            TraceKind::Gen => "gen",
            TraceKind::Fwd => "fwd",
            TraceKind::Deliver => "deliver",
            TraceKind::Drop => "drop",
            TraceKind::Timer => "timer",
            TraceKind::Parent => "parent",
            TraceKind::Death => "death",
            TraceKind::Reach => "reach",
            TraceKind::Pos => "pos",
            TraceKind::Violation => "violation",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TraceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraceKind::ALL
            .iter()
            .copied()
            .find(|k| k.label() == s)
            .ok_or_else(|| format!("unknown trace kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_s: f64,
    pub node: NodeId,
    pub kind: TraceKind,
    pub peer: Option<NodeId>,
    pub detail: String,
}

impl TraceRecord {
    pub fn new(time_s: f64, node: NodeId, kind: TraceKind, peer: Option<NodeId>, detail: impl Into<String>) -> Self {
        Self { time_s, node, kind, peer, detail: detail.into() }
    }

    /// First whitespace-separated token of the detail (the frame label for tx/rx).
    pub fn label(&self) -> &str {
        self.detail.split_whitespace().next().unwrap_or("")
    }

    /// Value of a `key=value` token in the detail.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail
            .split_whitespace()
            .filter_map(|t| t.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9},{},{},", self.time_s, self.node, self.kind)?;
        match self.peer {
            Some(p) => write!(f, "{p}")?,
            None => f.write_str("-")?,
        }
        write!(f, ",{}", self.detail)
    }
}

impl FromStr for TraceRecord {
    type Err = String;
    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut parts = line.splitn(5, ',');
        let mut next = |name: &str| parts.next().ok_or_else(|| format!("missing {name} in `{line}`"));
        let time_s = next("time")?.parse::<f64>().map_err(|e| e.to_string())?;
        let node = next("node")?.parse::<NodeId>().map_err(|e| e.to_string())?;
        let kind = next("kind")?.parse::<TraceKind>()?;
        let peer = match next("peer")? {
            "-" => None,
            p => Some(p.parse::<NodeId>().map_err(|e| e.to_string())?),
        };
        let detail = next("detail")?.to_string();
        Ok(Self { time_s, node, kind, peer, detail })
    }
}
