//! Packets and flits.

use crate::topology::NodeId;

/// Monotonic per-run packet identifier, assigned at generation.
pub type PacketId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub id: PacketId,
    pub src: NodeId,
    pub dest: NodeId,
    pub len: u16,
    /// Cycle the packet was generated (enqueued at its source).
    pub gen_cycle: u64,
    /// Generated inside the measurement window.
    pub measured: bool,
}

impl Packet {
    pub fn flit(&self, seq: u16) -> Flit {
        debug_assert!(seq < self.len);
        Flit {
            packet: self.id,
            src: self.src as u32,
            dest: self.dest as u32,
            gen_cycle: self.gen_cycle,
            seq,
            len: self.len,
            measured: self.measured,
            since: self.gen_cycle,
            route: RouteTag::default(),
        }
    }
}

/// Router-specific routing state carried with a flit.
///
/// The ring router stores the router-level exit exchange, the ring direction
/// and the exit port precomputed for the next exchange. The conventional
/// routers store the lookahead output port and the downstream VC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct RouteTag {
    pub exit: u8,
    pub dir: u8,
    pub next_port: u8,
    pub vc: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flit {
    pub packet: PacketId,
    pub src: u32,
    pub dest: u32,
    pub gen_cycle: u64,
    pub seq: u16,
    pub len: u16,
    pub measured: bool,
    /// Cycle the flit was written into the buffer it currently occupies.
    pub since: u64,
    pub(crate) route: RouteTag,
}

impl Flit {
    pub fn is_head(&self) -> bool {
        self.seq == 0
    }

    pub fn is_tail(&self) -> bool {
        self.seq + 1 == self.len
    }

    pub fn dest(&self) -> NodeId {
        self.dest as NodeId
    }

    pub fn src(&self) -> NodeId {
        self.src as NodeId
    }
}
