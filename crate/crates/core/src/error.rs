use alloc::boxed::Box;

use crate::fabric::Location;
use crate::flit::PacketId;
use crate::stats::StallReport;
use crate::topology::{CreditError, NodeId};
use crate::traffic::{PatternError, TraceError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("mesh radix must be at least 2, got {0}")]
    MeshTooSmall(usize),
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
    #[error("vc depth {depth} is smaller than packet length {packet}")]
    VcTooShallow { depth: usize, packet: usize },
    #[error("injection rate {0} outside [0, 1]")]
    RateOutOfRange(f64),
    #[error("{0} exceeds the supported maximum of {1}")]
    TooLarge(&'static str, usize),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Faults raised while simulating. Any of these means the model is broken
/// or the network stopped making progress; nothing is ever dropped silently.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cycle {cycle}: buffer overflow at router {router} {location}")]
    BufferOverflow {
        cycle: u64,
        router: NodeId,
        location: Location,
    },
    #[error("cycle {cycle}: router {router} port {port}: {source}")]
    Credit {
        cycle: u64,
        router: NodeId,
        port: usize,
        source: CreditError,
    },
    #[error("packet {0} delivered twice")]
    DuplicateDelivery(PacketId),
    #[error("packet {packet} flit {seq} delivered out of order")]
    OutOfOrder { packet: PacketId, seq: u16 },
    #[error("packet {packet} ejected at router {at}, destination is {dest}")]
    Misrouted { packet: PacketId, at: NodeId, dest: NodeId },
    #[error("cycle {cycle}: invariant violated: {what}")]
    Invariant { cycle: u64, what: &'static str },
    #[error("no progress: {0}")]
    Stall(Box<StallReport>),
}
