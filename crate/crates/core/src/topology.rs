//! Mesh coordinates, dimension-order routing and per-VC credit counters.

use core::fmt;

/// Flat node index, `y * width + x`.
pub type NodeId = usize;

/// Column/row position of a router. East increases `x`, North increases `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeCoord {
    pub x: usize,
    pub y: usize,
}

impl NodeCoord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for NodeCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// One of the five router ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PortDirection {
    North,
    South,
    East,
    West,
    Local,
}

impl PortDirection {
    pub const ALL: [PortDirection; 5] = [
        PortDirection::North,
        PortDirection::South,
        PortDirection::East,
        PortDirection::West,
        PortDirection::Local,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    /// The port a flit leaving through `self` arrives on at the neighbor.
    pub const fn opposite(self) -> Self {
        match self {
            PortDirection::North => PortDirection::South,
            PortDirection::South => PortDirection::North,
            PortDirection::East => PortDirection::West,
            PortDirection::West => PortDirection::East,
            PortDirection::Local => PortDirection::Local,
        }
    }
}

impl fmt::Display for PortDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PortDirection::North => "north",
            PortDirection::South => "south",
            PortDirection::East => "east",
            PortDirection::West => "west",
            PortDirection::Local => "local",
        };
        f.write_str(s)
    }
}

/// A rectangular mesh. Simulation runs are square (`k x k`) but the
/// topology itself allows any `width x height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh {
    width: usize,
    height: usize,
}

impl Mesh {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mesh must have at least one node");
        Self { width, height }
    }

    pub fn square(k: usize) -> Self {
        Self::new(k, k)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn nodes(&self) -> usize {
        self.width * self.height
    }

    pub fn coord(&self, id: NodeId) -> NodeCoord {
        debug_assert!(id < self.nodes());
        NodeCoord::new(id % self.width, id / self.width)
    }

    pub fn id(&self, c: NodeCoord) -> NodeId {
        debug_assert!(self.contains(c));
        c.y * self.width + c.x
    }

    pub fn contains(&self, c: NodeCoord) -> bool {
        c.x < self.width && c.y < self.height
    }

    /// Neighbor in direction `d`, or `None` if the move leaves the grid.
    /// `Local` has no neighbor.
    pub fn neighbor(&self, c: NodeCoord, d: PortDirection) -> Option<NodeCoord> {
        match d {
            PortDirection::North if c.y + 1 < self.height => Some(NodeCoord::new(c.x, c.y + 1)),
            PortDirection::South if c.y > 0 => Some(NodeCoord::new(c.x, c.y - 1)),
            PortDirection::East if c.x + 1 < self.width => Some(NodeCoord::new(c.x + 1, c.y)),
            PortDirection::West if c.x > 0 => Some(NodeCoord::new(c.x - 1, c.y)),
            _ => None,
        }
    }

    pub fn neighbor_id(&self, id: NodeId, d: PortDirection) -> Option<NodeId> {
        self.neighbor(self.coord(id), d).map(|c| self.id(c))
    }

    /// Manhattan distance in links.
    pub fn hops(&self, a: NodeId, b: NodeId) -> usize {
        let (a, b) = (self.coord(a), self.coord(b));
        a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
    }
}

/// X-first dimension-order routing.
pub fn dor_output(current: NodeCoord, dest: NodeCoord) -> PortDirection {
    use core::cmp::Ordering::*;
    match (dest.x.cmp(&current.x), dest.y.cmp(&current.y)) {
        (Greater, _) => PortDirection::East,
        (Less, _) => PortDirection::West,
        (Equal, Greater) => PortDirection::North,
        (Equal, Less) => PortDirection::South,
        (Equal, Equal) => PortDirection::Local,
    }
}

/// Output port the packet will take at `next_router`, computed one hop early.
pub fn lookahead_next_output(next_router: NodeCoord, dest: NodeCoord) -> PortDirection {
    dor_output(next_router, dest)
}

/// Credit flow-control event on one VC of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CreditEvent {
    FlitSent,
    CreditReturned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CreditError {
    #[error("credit underflow: flit sent with no credit")]
    Underflow,
    #[error("credit overflow: more credits returned than buffer depth {0}")]
    Overflow(u32),
}

/// Upstream view of the free slots in one downstream VC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CreditCounter {
    credits: u32,
    depth: u32,
}

impl CreditCounter {
    pub fn full(depth: u32) -> Self {
        Self { credits: depth, depth }
    }

    pub fn credits(&self) -> u32 {
        self.credits
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn can_send(&self) -> bool {
        self.credits > 0
    }

    pub fn is_full(&self) -> bool {
        self.credits == self.depth
    }

    pub fn update(&mut self, event: CreditEvent) -> Result<(), CreditError> {
        match event {
            CreditEvent::FlitSent => {
                self.credits = self.credits.checked_sub(1).ok_or(CreditError::Underflow)?;
            }
            CreditEvent::CreditReturned => {
                if self.credits == self.depth {
                    return Err(CreditError::Overflow(self.depth));
                }
                self.credits += 1;
            }
        }
        Ok(())
    }
}

/// Applies a batch of credit events to one VC counter in order.
pub fn credit_update(
    counter: &mut CreditCounter,
    events: impl IntoIterator<Item = CreditEvent>,
) -> Result<(), CreditError> {
    events.into_iter().try_for_each(|e| counter.update(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dor_examples() {
        let c = NodeCoord::new;
        assert_eq!(dor_output(c(1, 1), c(3, 4)), PortDirection::East);
        assert_eq!(dor_output(c(3, 4), c(3, 1)), PortDirection::South);
        assert_eq!(dor_output(c(5, 5), c(5, 5)), PortDirection::Local);
        assert_eq!(dor_output(c(4, 0), c(1, 7)), PortDirection::West);
        assert_eq!(dor_output(c(2, 2), c(2, 6)), PortDirection::North);
    }

    #[test]
    fn lookahead_examples() {
        let c = NodeCoord::new;
        assert_eq!(lookahead_next_output(c(0, 0), c(0, 0)), PortDirection::Local);
        assert_eq!(lookahead_next_output(c(2, 0), c(7, 0)), PortDirection::East);
    }

    #[test]
    fn edge_neighbors() {
        let m = Mesh::square(8);
        let corner = NodeCoord::new(0, 0);
        assert_eq!(m.neighbor(corner, PortDirection::West), None);
        assert_eq!(m.neighbor(corner, PortDirection::South), None);
        assert_eq!(m.neighbor(corner, PortDirection::Local), None);
        assert_eq!(m.neighbor(corner, PortDirection::North), Some(NodeCoord::new(0, 1)));
        assert_eq!(m.neighbor_id(63, PortDirection::North), None);
        assert_eq!(m.neighbor_id(63, PortDirection::West), Some(62));
    }

    #[test]
    fn credit_examples() {
        let mut c = CreditCounter::full(8);
        credit_update(&mut c, [CreditEvent::FlitSent]).unwrap();
        assert_eq!(c.credits(), 7);

        let mut empty = CreditCounter::full(1);
        empty.update(CreditEvent::FlitSent).unwrap();
        assert!(!empty.can_send());
        assert_eq!(empty.update(CreditEvent::FlitSent), Err(CreditError::Underflow));

        let mut full = CreditCounter::full(8);
        assert_eq!(full.update(CreditEvent::CreditReturned), Err(CreditError::Overflow(8)));
    }

    #[test]
    fn credit_round_trip_over_eight_cycles() {
        // Link latency 1: a flit sent in cycle t is consumed downstream and its
        // credit is back upstream by t+2. Sending one flit per cycle for 8
        // cycles and returning each credit two cycles later ends full.
        let mut c = CreditCounter::full(8);
        let mut returns_at = [false; 16];
        for t in 0..16usize {
            if returns_at[t] {
                c.update(CreditEvent::CreditReturned).unwrap();
            }
            if t < 8 {
                c.update(CreditEvent::FlitSent).unwrap();
                returns_at[t + 2] = true;
            }
            assert!(c.credits() >= 6);
        }
        assert_eq!(c.credits(), 8);
    }

    proptest! {
        #[test]
        fn node_id_bijection(w in 1usize..12, h in 1usize..12) {
            let m = Mesh::new(w, h);
            for id in 0..m.nodes() {
                prop_assert_eq!(m.id(m.coord(id)), id);
            }
        }

        #[test]
        fn dor_walk_is_minimal_and_turns_once(k in 2usize..10, s in 0usize..100, d in 0usize..100) {
            let m = Mesh::square(k);
            let (s, d) = (s % m.nodes(), d % m.nodes());
            let dest = m.coord(d);
            let mut cur = m.coord(s);
            let mut steps = 0;
            let mut seen_y = false;
            loop {
                let out = dor_output(cur, dest);
                prop_assert_eq!(out, lookahead_next_output(cur, dest));
                if out == PortDirection::Local { break; }
                let is_y = matches!(out, PortDirection::North | PortDirection::South);
                prop_assert!(!(seen_y && !is_y), "x move after y move");
                seen_y |= is_y;
                cur = m.neighbor(cur, out).expect("DOR routed off-mesh");
                steps += 1;
            }
            prop_assert_eq!(cur, dest);
            prop_assert_eq!(steps, m.hops(s, d));
        }
    }
}
