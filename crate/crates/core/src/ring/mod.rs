//! Ring router: five exchanges on two directed rings.
//!
//! Clockwise order is Core -> North -> South -> East -> West -> Core. Every
//! exchange has two ring ports (A toward its counter-clockwise neighbor, B
//! toward its clockwise neighbor) and one external port E. Flits are
//! buffered on the exit side of each port. The Core exchange is never used
//! as a pass-through between its two ring ports, which breaks the cyclic
//! dependency around the ring.

mod fabric;

pub use fabric::{probe_transit, RingFabric};

use core::fmt;

use crate::arbiter::RoundRobin;
use crate::topology::{dor_output, NodeCoord, PortDirection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExchangeId {
    Core = 0,
    North = 1,
    South = 2,
    East = 3,
    West = 4,
}

impl ExchangeId {
    /// In clockwise ring order.
    pub const ALL: [ExchangeId; 5] = [
        ExchangeId::Core,
        ExchangeId::North,
        ExchangeId::South,
        ExchangeId::East,
        ExchangeId::West,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub const fn clockwise(self) -> Self {
        Self::ALL[(self as usize + 1) % 5]
    }

    pub const fn counter_clockwise(self) -> Self {
        Self::ALL[(self as usize + 4) % 5]
    }

    pub const fn step(self, dir: RingDirection) -> Self {
        match dir {
            RingDirection::Clockwise => self.clockwise(),
            RingDirection::CounterClockwise => self.counter_clockwise(),
        }
    }

    /// The exchange serving router port `d` (`Local` is served by `Core`).
    pub const fn for_port(d: PortDirection) -> Self {
        match d {
            PortDirection::North => ExchangeId::North,
            PortDirection::South => ExchangeId::South,
            PortDirection::East => ExchangeId::East,
            PortDirection::West => ExchangeId::West,
            PortDirection::Local => ExchangeId::Core,
        }
    }

    pub const fn port(self) -> PortDirection {
        match self {
            ExchangeId::North => PortDirection::North,
            ExchangeId::South => PortDirection::South,
            ExchangeId::East => PortDirection::East,
            ExchangeId::West => PortDirection::West,
            ExchangeId::Core => PortDirection::Local,
        }
    }
}

impl fmt::Display for ExchangeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExchangeId::Core => "Core",
            ExchangeId::North => "North",
            ExchangeId::South => "South",
            ExchangeId::East => "East",
            ExchangeId::West => "West",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RingDirection {
    Clockwise = 0,
    CounterClockwise = 1,
}

impl RingDirection {
    /// Ring port an exchange uses to send in this direction.
    pub const fn exit_port(self) -> RingPort {
        match self {
            RingDirection::Clockwise => RingPort::B,
            RingDirection::CounterClockwise => RingPort::A,
        }
    }

    pub(crate) const fn from_u8(v: u8) -> Self {
        if v == 0 {
            RingDirection::Clockwise
        } else {
            RingDirection::CounterClockwise
        }
    }
}

/// The three ports of an exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RingPort {
    /// Toward the counter-clockwise neighbor.
    A = 0,
    /// Toward the clockwise neighbor.
    B = 1,
    /// External: link to a neighboring router, or the core.
    E = 2,
}

impl RingPort {
    pub const ALL: [RingPort; 3] = [RingPort::A, RingPort::B, RingPort::E];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    /// Position of a writer arriving on `self` among the two candidate
    /// writers of the exit buffer on `exit` (ports other than `exit`, in
    /// A, B, E order).
    pub const fn writer_slot(self, exit: RingPort) -> usize {
        debug_assert!(self as usize != exit as usize);
        if (self as usize) < (exit as usize) {
            self as usize
        } else {
            self as usize - 1
        }
    }
}

impl fmt::Display for RingPort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RingPort::A => "A",
            RingPort::B => "B",
            RingPort::E => "E",
        })
    }
}

use RingDirection::{Clockwise as Cw, CounterClockwise as Ccw};

/// Travel direction for every (entry, exit) pair; `None` where no route
/// exists (re-exit on the entry port of a non-core exchange).
///
/// Each entry is the shorter way round the ring unless that way passes
/// through Core, in which case it is the other way. Core -> Core goes
/// clockwise through all four other exchanges.
const ROUTE_DIR: [[Option<RingDirection>; 5]; 5] = [
    //  to: Core       North      South      East       West
    [Some(Cw), Some(Cw), Some(Cw), Some(Ccw), Some(Ccw)], // from Core
    [Some(Ccw), None, Some(Cw), Some(Cw), Some(Cw)],      // from North
    [Some(Ccw), Some(Ccw), None, Some(Cw), Some(Cw)],     // from South
    [Some(Cw), Some(Ccw), Some(Ccw), None, Some(Cw)],     // from East
    [Some(Cw), Some(Ccw), Some(Ccw), Some(Ccw), None],    // from West
];

/// Direction a flit entering on `entry` travels to reach `exit`.
pub const fn route_direction(entry: ExchangeId, exit: ExchangeId) -> Option<RingDirection> {
    ROUTE_DIR[entry as usize][exit as usize]
}

/// Ordered list of exchanges a flit visits inside one router.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingRoute {
    path: [ExchangeId; 6],
    len: u8,
}

impl RingRoute {
    pub fn exchanges(&self) -> &[ExchangeId] {
        &self.path[..self.len as usize]
    }

    /// One cycle per exchange visited.
    pub fn hop_count(&self) -> usize {
        self.len as usize
    }

    pub fn entry(&self) -> ExchangeId {
        self.path[0]
    }

    pub fn exit(&self) -> ExchangeId {
        self.path[self.len as usize - 1]
    }

    /// Intermediate exchanges, as listed in the routing table.
    pub fn stops(&self) -> &[ExchangeId] {
        &self.path[1..self.len as usize - 1]
    }
}

/// Route inside one router from the exchange a flit enters on to the
/// exchange it leaves from. `None` only for `entry == exit != Core`.
pub fn ring_route(entry: ExchangeId, exit: ExchangeId) -> Option<RingRoute> {
    let dir = route_direction(entry, exit)?;
    let mut path = [entry; 6];
    let mut len = 1;
    let mut cur = entry;
    loop {
        cur = cur.step(dir);
        path[len] = cur;
        len += 1;
        if cur == exit {
            break;
        }
    }
    Some(RingRoute { path, len: len as u8 })
}

/// Exit exchange at `this_router` for a packet headed to `dest`.
pub fn exit_exchange_for(dest: NodeCoord, this_router: NodeCoord) -> ExchangeId {
    ExchangeId::for_port(dor_output(this_router, dest))
}

/// Port a flit sitting at `current` leaves through on its way to `exit`.
/// Not meaningful for a freshly injected Core -> Core flit, which starts its
/// loop on the clockwise ring port.
pub fn next_port(current: ExchangeId, exit: ExchangeId) -> RingPort {
    if current == exit {
        return RingPort::E;
    }
    route_direction(current, exit)
        .expect("distinct exchanges always have a route")
        .exit_port()
}

/// True iff the route never passes through Core between its two ring ports.
/// Core may only be the first (injection) or last (ejection) exchange.
pub fn core_disjoint_check(route: &[ExchangeId]) -> bool {
    match route.len() {
        0..=2 => true,
        n => !route[1..n - 1].contains(&ExchangeId::Core),
    }
}

/// Grants one of the two writers of an exit buffer.
pub fn buffer_arbitrate(requests: [bool; 2], rr: RoundRobin) -> (Option<usize>, RoundRobin) {
    let mut rr = rr;
    let g = rr.arbitrate(|i| requests[i]);
    (g, rr)
}

/// Picks the VC that sends from an exit buffer this cycle. `eligible[v]`
/// means VC `v` has a head flit and its downstream write was granted.
pub fn output_arbitrate(eligible: &[bool], rr: RoundRobin) -> (Option<usize>, RoundRobin) {
    let mut rr = rr;
    let g = rr.arbitrate(|v| eligible[v]);
    (g, rr)
}
