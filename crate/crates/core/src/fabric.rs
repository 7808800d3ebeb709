//! Glue between the simulation loop and the two router families.

use alloc::vec::Vec;
use core::fmt;

use crate::conventional::ConventionalFabric;
use crate::error::SimError;
use crate::flit::{Flit, PacketId};
use crate::ring::{ExchangeId, RingFabric, RingPort};
use crate::topology::{NodeId, PortDirection};
use crate::traffic::SourceQueue;

/// Where a buffered flit sits inside a router.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Exit buffer of a ring exchange.
    Exchange {
        exchange: ExchangeId,
        port: RingPort,
        vc: usize,
    },
    /// Input VC of a conventional router.
    Input { port: PortDirection, vc: usize },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Exchange { exchange, port, vc } => write!(f, "{exchange}.{port} vc{vc}"),
            Location::Input { port, vc } => write!(f, "in-{port} vc{vc}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Packet enqueued at its source.
    Generated { node: NodeId },
    /// Head flit written into the first buffer of a router.
    RouterIn { router: NodeId },
    /// Head flit left a router (onto a link or to the core).
    RouterOut { router: NodeId },
    /// Tail flit handed to the destination core.
    Ejected { router: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub cycle: u64,
    pub packet: PacketId,
    pub kind: EventKind,
}

/// Per-cycle results handed back by a fabric.
#[derive(Debug, Default)]
pub(crate) struct TickOutput {
    pub delivered: Vec<(NodeId, Flit)>,
    pub events: Option<Vec<Event>>,
}

impl TickOutput {
    #[inline]
    pub fn event(&mut self, cycle: u64, flit: &Flit, kind: EventKind) {
        if let Some(ev) = self.events.as_mut() {
            let wanted = match kind {
                EventKind::Ejected { .. } => flit.is_tail(),
                _ => flit.is_head(),
            };
            if wanted {
                ev.push(Event {
                    cycle,
                    packet: flit.packet,
                    kind,
                });
            }
        }
    }
}

/// A head flit observed by the progress monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferedHead {
    pub router: NodeId,
    pub location: Location,
    pub packet: PacketId,
    pub since: u64,
}

#[derive(Debug, Clone)]
pub(crate) enum Fabric {
    Ring(RingFabric),
    Conventional(ConventionalFabric),
}

impl Fabric {
    pub fn tick(
        &mut self,
        cycle: u64,
        sources: &mut [SourceQueue],
        inject: bool,
        out: &mut TickOutput,
    ) -> Result<(), SimError> {
        match self {
            Fabric::Ring(f) => f.tick(cycle, sources, inject, out),
            Fabric::Conventional(f) => f.tick(cycle, sources, inject, out),
        }
    }

    pub fn buffered_flits(&self) -> u64 {
        match self {
            Fabric::Ring(f) => f.buffered_flits(),
            Fabric::Conventional(f) => f.buffered_flits(),
        }
    }

    pub fn link_flits(&self) -> u64 {
        match self {
            Fabric::Ring(f) => f.link_flits(),
            Fabric::Conventional(f) => f.link_flits(),
        }
    }

    pub fn for_each_head(&self, visit: &mut dyn FnMut(BufferedHead)) {
        match self {
            Fabric::Ring(f) => f.for_each_head(visit),
            Fabric::Conventional(f) => f.for_each_head(visit),
        }
    }

    pub fn freeze(&mut self, router: NodeId) {
        match self {
            Fabric::Ring(f) => f.freeze(router),
            Fabric::Conventional(f) => f.freeze(router),
        }
    }

    pub fn check_invariants(&self) -> Result<(), &'static str> {
        match self {
            Fabric::Ring(f) => f.check_invariants(),
            Fabric::Conventional(f) => f.check_invariants(),
        }
    }
}
