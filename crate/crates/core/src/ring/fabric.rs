use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{exit_exchange_for, route_direction, ExchangeId, RingDirection, RingPort};
use crate::arbiter::RoundRobin;
use crate::error::SimError;
use crate::fabric::{BufferedHead, EventKind, Location, TickOutput};
use crate::flit::{Flit, PacketId};
use crate::topology::{Mesh, NodeId};
use crate::traffic::SourceQueue;

const NONE: u32 = u32::MAX;
const SINK: u32 = u32::MAX - 1;
const EDGE: u32 = u32::MAX - 2;
const NO_GRANT: u8 = u8::MAX;

const BUFS_PER_ROUTER: usize = 15;

#[inline]
fn buf_id(router: usize, ex: ExchangeId, port: RingPort) -> usize {
    router * BUFS_PER_ROUTER + ex.index() * 3 + port.index()
}

#[inline]
fn split(b: usize) -> (usize, ExchangeId, RingPort) {
    let r = b / BUFS_PER_ROUTER;
    let l = b % BUFS_PER_ROUTER;
    (r, ExchangeId::from_index(l / 3), RingPort::from_index(l % 3))
}

/// What sits on the far side of an exit buffer's port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Downstream {
    Exchange {
        router: u32,
        exchange: ExchangeId,
        in_port: RingPort,
    },
    /// Core ejection.
    Eject,
    /// External port on the mesh boundary.
    Edge,
}

#[derive(Debug, Clone)]
struct Vc {
    q: VecDeque<Flit>,
    /// Packet whose flits are still being written into this VC.
    owner: Option<PacketId>,
    /// Slots promised to flits still on a link.
    reserved: u16,
}

impl Vc {
    fn used(&self) -> usize {
        self.q.len() + self.reserved as usize
    }
}

#[derive(Debug, Clone)]
struct ExitBuffer {
    vcs: Vec<Vc>,
    out_rr: RoundRobin,
    arb_rr: RoundRobin,
    flits: u32,
}

#[derive(Debug, Clone, Copy)]
struct Move {
    target: u32,
    flit: Flit,
    /// Entering a router on its E port (from a link or the core).
    from_link: bool,
    /// Crossed an inter-router link.
    linked: bool,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    arrive: u64,
    target: u32,
    vc: u8,
    flit: Flit,
}

/// All ring routers of a mesh, advanced together one cycle at a time.
///
/// Within a cycle every exit buffer's arbiter sees the buffer state left by
/// the previous cycle. Flits granted this cycle are removed from their
/// source buffers and written into their destination buffers at the end of
/// the cycle, so a flit moves at most one exchange per cycle. Leaving an
/// exchange on port E drives the link; with a one-cycle link the flit lands
/// in the next router's entry exchange in the same cycle.
#[derive(Debug, Clone)]
pub struct RingFabric {
    mesh: Mesh,
    vcs: usize,
    depth: usize,
    link_latency: u64,
    bufs: Vec<ExitBuffer>,
    down: Vec<Downstream>,
    req: Vec<u8>,
    grant: Vec<u8>,
    touched: Vec<u32>,
    cand: Vec<u32>,
    writers: Vec<u32>,
    src_cand: Vec<u32>,
    moves: Vec<Move>,
    in_link: VecDeque<InFlight>,
    load: Vec<u32>,
    frozen: Vec<bool>,
    edge_sinks: bool,
    edge_exits: Vec<(NodeId, ExchangeId, u64, Flit)>,
    buffered: u64,
}

impl RingFabric {
    pub fn new(mesh: Mesh, vcs: usize, depth: usize, link_latency: u64) -> Self {
        assert!(vcs >= 1 && depth >= 1 && link_latency >= 1);
        assert!(vcs <= u8::MAX as usize && depth <= u16::MAX as usize);
        let n = mesh.nodes();
        let nb = n * BUFS_PER_ROUTER;
        let mut down = Vec::with_capacity(nb);
        for b in 0..nb {
            let (r, ex, port) = split(b);
            let d = match port {
                RingPort::A => Downstream::Exchange {
                    router: r as u32,
                    exchange: ex.counter_clockwise(),
                    in_port: RingPort::B,
                },
                RingPort::B => Downstream::Exchange {
                    router: r as u32,
                    exchange: ex.clockwise(),
                    in_port: RingPort::A,
                },
                RingPort::E if ex == ExchangeId::Core => Downstream::Eject,
                RingPort::E => match mesh.neighbor_id(r, ex.port()) {
                    Some(nr) => Downstream::Exchange {
                        router: nr as u32,
                        exchange: ExchangeId::for_port(ex.port().opposite()),
                        in_port: RingPort::E,
                    },
                    None => Downstream::Edge,
                },
            };
            down.push(d);
        }
        let vc = Vc {
            q: VecDeque::with_capacity(depth),
            owner: None,
            reserved: 0,
        };
        let buf = ExitBuffer {
            vcs: vec![vc; vcs],
            out_rr: RoundRobin::new(vcs),
            arb_rr: RoundRobin::new(2),
            flits: 0,
        };
        Self {
            mesh,
            vcs,
            depth,
            link_latency,
            bufs: vec![buf; nb],
            down,
            req: vec![0; nb],
            grant: vec![NO_GRANT; nb],
            touched: Vec::new(),
            cand: vec![NONE; nb * vcs],
            writers: Vec::new(),
            src_cand: vec![NONE; n],
            moves: Vec::new(),
            in_link: VecDeque::new(),
            load: vec![0; n],
            frozen: vec![false; n],
            edge_sinks: false,
            edge_exits: Vec::new(),
            buffered: 0,
        }
    }

    /// Flits leaving through an external port on the mesh boundary are
    /// collected instead of faulting. Used to time single routers in
    /// isolation.
    pub fn with_edge_sinks(mut self) -> Self {
        self.edge_sinks = true;
        self
    }

    /// Flits that left through boundary ports: `(router, exchange, cycle, flit)`.
    pub fn take_edge_exits(&mut self) -> Vec<(NodeId, ExchangeId, u64, Flit)> {
        core::mem::take(&mut self.edge_exits)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn buffered_flits(&self) -> u64 {
        self.buffered
    }

    pub fn link_flits(&self) -> u64 {
        self.in_link.len() as u64
    }

    /// Total VCs per router.
    pub fn vcs_per_router(&self) -> usize {
        BUFS_PER_ROUTER * self.vcs
    }

    pub fn freeze(&mut self, router: NodeId) {
        self.frozen[router] = true;
    }

    /// Flits held in one exit buffer.
    pub fn occupancy(&self, router: NodeId, ex: ExchangeId, port: RingPort) -> usize {
        self.bufs[buf_id(router, ex, port)].flits as usize
    }

    pub fn for_each_head(&self, visit: &mut dyn FnMut(BufferedHead)) {
        for (b, buf) in self.bufs.iter().enumerate() {
            if buf.flits == 0 {
                continue;
            }
            let (router, exchange, port) = split(b);
            for (vc, v) in buf.vcs.iter().enumerate() {
                if let Some(f) = v.q.front() {
                    visit(BufferedHead {
                        router,
                        location: Location::Exchange { exchange, port, vc },
                        packet: f.packet,
                        since: f.since,
                    });
                }
            }
        }
    }

    pub fn check_invariants(&self) -> Result<(), &'static str> {
        let mut total = 0u64;
        for buf in &self.bufs {
            let mut n = 0;
            for v in &buf.vcs {
                if v.used() > self.depth {
                    return Err("ring VC over capacity");
                }
                n += v.q.len() as u32;
                let mut prev: Option<&Flit> = None;
                for f in &v.q {
                    if let Some(p) = prev {
                        let next_of_same = p.packet == f.packet && p.seq + 1 == f.seq;
                        if !next_of_same && !(p.is_tail() && f.is_head()) {
                            return Err("packets interleaved in a ring VC");
                        }
                    }
                    prev = Some(f);
                }
            }
            if n != buf.flits {
                return Err("ring buffer flit count out of sync");
            }
            total += n as u64;
        }
        if total != self.buffered {
            return Err("ring buffered total out of sync");
        }
        let reserved: u64 = self
            .bufs
            .iter()
            .flat_map(|b| b.vcs.iter())
            .map(|v| v.reserved as u64)
            .sum();
        if reserved != self.in_link.len() as u64 {
            return Err("ring link reservations out of sync");
        }
        Ok(())
    }

    /// Writes `flit` into exchange `entry` of `router` as if it had arrived
    /// on that exchange's E port at the end of `cycle`, bound for `exit`.
    pub(crate) fn place(
        &mut self,
        router: NodeId,
        entry: ExchangeId,
        exit: ExchangeId,
        mut flit: Flit,
        cycle: u64,
        out: &mut TickOutput,
    ) -> Result<(), SimError> {
        let target = self.enter(&mut flit, router, entry, exit)?;
        self.write(target, flit, cycle, true, out)
    }

    /// Routes a flit arriving on the E port of `entry`; returns its target buffer.
    fn enter(&self, flit: &mut Flit, router: NodeId, entry: ExchangeId, exit: ExchangeId) -> Result<usize, SimError> {
        let dir = route_direction(entry, exit).ok_or(SimError::Misrouted {
            packet: flit.packet,
            at: router,
            dest: flit.dest(),
        })?;
        flit.route.exit = exit as u8;
        flit.route.dir = dir as u8;
        let port = dir.exit_port();
        flit.route.next_port = port as u8;
        Ok(buf_id(router, entry, port))
    }

    /// A head written straight into a VC must not overtake flits still on
    /// the link into it; delayed heads queue behind them on the link.
    #[inline]
    fn head_fits(v: &Vc, depth: usize, delayed: bool) -> bool {
        v.owner.is_none() && v.used() < depth && (delayed || v.reserved == 0)
    }

    #[inline]
    fn delayed(&self, linked: bool) -> bool {
        linked && self.link_latency > 1
    }

    #[inline]
    fn has_space(&self, t: usize, f: &Flit, linked: bool) -> bool {
        let depth = self.depth;
        let delayed = self.delayed(linked);
        let vcs = &self.bufs[t].vcs;
        if f.is_head() {
            vcs.iter().any(|v| Self::head_fits(v, depth, delayed))
        } else {
            vcs.iter().any(|v| v.owner == Some(f.packet) && v.used() < depth)
        }
    }

    fn pick_vc(&mut self, t: usize, f: &Flit, linked: bool) -> Option<usize> {
        let depth = self.depth;
        let delayed = self.delayed(linked);
        let buf = &mut self.bufs[t];
        let v = if f.is_head() {
            buf.vcs.iter().position(|v| Self::head_fits(v, depth, delayed))?
        } else {
            buf.vcs
                .iter()
                .position(|v| v.owner == Some(f.packet) && v.used() < depth)?
        };
        let vc = &mut buf.vcs[v];
        if f.is_tail() {
            vc.owner = None;
        } else {
            vc.owner = Some(f.packet);
        }
        Some(v)
    }

    /// Computes the exit port the flit will take at the exchange downstream
    /// of buffer `t` (lookahead), crossing into the next router if needed.
    fn route_downstream(&self, t: usize, flit: &mut Flit) -> Result<(), SimError> {
        match self.down[t] {
            Downstream::Exchange {
                router,
                exchange,
                in_port,
            } => {
                if in_port == RingPort::E {
                    let r = router as usize;
                    let exit = exit_exchange_for(self.mesh.coord(flit.dest()), self.mesh.coord(r));
                    let dir = route_direction(exchange, exit).ok_or(SimError::Misrouted {
                        packet: flit.packet,
                        at: r,
                        dest: flit.dest(),
                    })?;
                    flit.route.exit = exit as u8;
                    flit.route.dir = dir as u8;
                    flit.route.next_port = dir.exit_port() as u8;
                } else {
                    let exit = ExchangeId::from_index(flit.route.exit as usize);
                    let port = if exchange == exit {
                        RingPort::E
                    } else {
                        // Only Core-bound flits may reach Core on a ring port.
                        debug_assert!(exchange != ExchangeId::Core);
                        RingDirection::from_u8(flit.route.dir).exit_port()
                    };
                    debug_assert!(port != in_port, "loopback inside an exchange");
                    flit.route.next_port = port as u8;
                }
            }
            Downstream::Eject | Downstream::Edge => {}
        }
        Ok(())
    }

    fn commit(
        &mut self,
        t: usize,
        vc: usize,
        mut flit: Flit,
        cycle: u64,
        from_link: bool,
        out: &mut TickOutput,
    ) -> Result<(), SimError> {
        self.route_downstream(t, &mut flit)?;
        flit.since = cycle;
        let r = t / BUFS_PER_ROUTER;
        let buf = &mut self.bufs[t];
        buf.vcs[vc].q.push_back(flit);
        buf.flits += 1;
        self.load[r] += 1;
        self.buffered += 1;
        if from_link {
            out.event(cycle, &flit, EventKind::RouterIn { router: r });
        }
        Ok(())
    }

    fn overflow(&self, t: usize, cycle: u64) -> SimError {
        let (router, exchange, port) = split(t);
        SimError::BufferOverflow {
            cycle,
            router,
            location: Location::Exchange { exchange, port, vc: 0 },
        }
    }

    fn write(
        &mut self,
        t: usize,
        flit: Flit,
        cycle: u64,
        from_link: bool,
        out: &mut TickOutput,
    ) -> Result<(), SimError> {
        let vc = self.pick_vc(t, &flit, false).ok_or_else(|| self.overflow(t, cycle))?;
        self.commit(t, vc, flit, cycle, from_link, out)
    }

    /// Target buffer a source's head flit would be written into this cycle.
    fn injection_target(&self, node: NodeId, flit: &mut Flit) -> usize {
        let exit = exit_exchange_for(self.mesh.coord(flit.dest()), self.mesh.coord(node));
        self.enter(flit, node, ExchangeId::Core, exit)
            .expect("core has a route to every exchange")
    }

    pub(crate) fn tick(
        &mut self,
        cycle: u64,
        sources: &mut [SourceQueue],
        inject: bool,
        out: &mut TickOutput,
    ) -> Result<(), SimError> {
        let n = self.mesh.nodes();
        let vcs = self.vcs;

        // Requests: every head flit that has sat in its buffer since an
        // earlier cycle asks the downstream buffer arbiter for a write slot.
        for r in 0..n {
            let has_src = inject && !sources[r].is_empty();
            if (self.load[r] == 0 && !has_src) || self.frozen[r] {
                continue;
            }
            for lb in 0..BUFS_PER_ROUTER {
                let b = r * BUFS_PER_ROUTER + lb;
                if self.bufs[b].flits == 0 {
                    continue;
                }
                let mut any = false;
                for v in 0..vcs {
                    let Some(f) = self.bufs[b].vcs[v].q.front() else {
                        continue;
                    };
                    if f.since >= cycle {
                        continue;
                    }
                    let t = match self.down[b] {
                        Downstream::Eject => SINK,
                        Downstream::Edge if self.edge_sinks => EDGE,
                        Downstream::Edge => {
                            return Err(SimError::Misrouted {
                                packet: f.packet,
                                at: r,
                                dest: f.dest(),
                            })
                        }
                        Downstream::Exchange {
                            router,
                            exchange,
                            in_port,
                        } => {
                            let tp = RingPort::from_index(f.route.next_port as usize);
                            let t = buf_id(router as usize, exchange, tp);
                            if !self.has_space(t, f, in_port == RingPort::E) {
                                continue;
                            }
                            if self.req[t] == 0 {
                                self.touched.push(t as u32);
                            }
                            self.req[t] |= 1 << in_port.writer_slot(tp);
                            t as u32
                        }
                    };
                    self.cand[b * vcs + v] = t;
                    any = true;
                }
                if any {
                    self.writers.push(b as u32);
                }
            }
            if has_src {
                let mut f = sources[r].peek_flit().expect("non-empty source");
                let t = self.injection_target(r, &mut f);
                if self.has_space(t, &f, false) {
                    if self.req[t] == 0 {
                        self.touched.push(t as u32);
                    }
                    let tp = split(t).2;
                    self.req[t] |= 1 << RingPort::E.writer_slot(tp);
                    self.src_cand[r] = t as u32;
                }
            }
        }

        // Buffer arbiters: one writer per exit buffer per cycle.
        for &t in &self.touched {
            let t = t as usize;
            let mask = self.req[t];
            self.req[t] = 0;
            if self.frozen[t / BUFS_PER_ROUTER] {
                continue;
            }
            if let Some(g) = self.bufs[t].arb_rr.arbitrate(|s| mask & (1 << s) != 0) {
                self.grant[t] = g as u8;
            }
        }

        // Output arbiters: each buffer sends at most one granted VC.
        let writers = core::mem::take(&mut self.writers);
        for &b in &writers {
            let b = b as usize;
            let slot = match self.down[b] {
                Downstream::Exchange { in_port, .. } => Some(in_port),
                _ => None,
            };
            let cand = &self.cand[b * vcs..(b + 1) * vcs];
            let grant = &self.grant;
            let chosen = self.bufs[b].out_rr.arbitrate(|v| match cand[v] {
                NONE => false,
                SINK | EDGE => true,
                t => {
                    let tp = split(t as usize).2;
                    grant[t as usize] == slot.expect("exchange downstream").writer_slot(tp) as u8
                }
            });
            let target = chosen.map(|v| cand[v]);
            self.cand[b * vcs..(b + 1) * vcs].fill(NONE);
            let (Some(v), Some(target)) = (chosen, target) else {
                continue;
            };
            let r = b / BUFS_PER_ROUTER;
            let buf = &mut self.bufs[b];
            let flit = buf.vcs[v].q.pop_front().expect("candidate VC has a head flit");
            buf.flits -= 1;
            self.load[r] -= 1;
            self.buffered -= 1;
            match target {
                SINK => {
                    out.event(cycle, &flit, EventKind::RouterOut { router: r });
                    out.event(cycle, &flit, EventKind::Ejected { router: r });
                    out.delivered.push((r, flit));
                }
                EDGE => {
                    out.event(cycle, &flit, EventKind::RouterOut { router: r });
                    self.edge_exits.push((r, split(b).1, cycle, flit));
                }
                t => {
                    let from_link = slot == Some(RingPort::E);
                    if from_link {
                        out.event(cycle, &flit, EventKind::RouterOut { router: r });
                    }
                    self.moves.push(Move {
                        target: t,
                        flit,
                        from_link,
                        linked: from_link,
                    });
                }
            }
        }
        self.writers = writers;
        self.writers.clear();

        if inject {
            for r in 0..n {
                let t = self.src_cand[r];
                if t == NONE {
                    continue;
                }
                self.src_cand[r] = NONE;
                let tp = split(t as usize).2;
                if self.grant[t as usize] == RingPort::E.writer_slot(tp) as u8 {
                    let mut f = sources[r].pop_flit().expect("granted source has a flit");
                    self.injection_target(r, &mut f);
                    self.moves.push(Move {
                        target: t,
                        flit: f,
                        from_link: true,
                        linked: false,
                    });
                }
            }
        }

        for &t in &self.touched {
            self.grant[t as usize] = NO_GRANT;
        }
        self.touched.clear();

        // Commit: writes become visible next cycle.
        let moves = core::mem::take(&mut self.moves);
        for m in &moves {
            let t = m.target as usize;
            if m.linked && self.link_latency > 1 {
                let vc = self.pick_vc(t, &m.flit, true).ok_or_else(|| self.overflow(t, cycle))?;
                self.bufs[t].vcs[vc].reserved += 1;
                self.in_link.push_back(InFlight {
                    arrive: cycle + self.link_latency - 1,
                    target: m.target,
                    vc: vc as u8,
                    flit: m.flit,
                });
            } else {
                self.write(t, m.flit, cycle, m.from_link, out)?;
            }
        }
        self.moves = moves;
        self.moves.clear();

        while self.in_link.front().is_some_and(|f| f.arrive == cycle) {
            let f = self.in_link.pop_front().expect("front exists");
            let t = f.target as usize;
            self.bufs[t].vcs[f.vc as usize].reserved -= 1;
            self.commit(t, f.vc as usize, f.flit, cycle, true, out)?;
        }
        Ok(())
    }
}

/// Cycles an otherwise idle ring router needs to move one flit from the E
/// port of `entry` out of the E port of `exit`.
pub fn probe_transit(entry: ExchangeId, exit: ExchangeId, vcs: usize, depth: usize) -> Result<u64, SimError> {
    let mut fabric = RingFabric::new(Mesh::new(1, 1), vcs, depth, 1).with_edge_sinks();
    let packet = crate::flit::Packet {
        id: 0,
        src: 0,
        dest: 0,
        len: 1,
        gen_cycle: 0,
        measured: false,
    };
    let mut out = TickOutput::default();
    fabric.place(0, entry, exit, packet.flit(0), 0, &mut out)?;
    let mut sources = vec![SourceQueue::default()];
    for cycle in 1..64 {
        fabric.tick(cycle, &mut sources, false, &mut out)?;
        if !out.delivered.is_empty() {
            debug_assert_eq!(exit, ExchangeId::Core);
            return Ok(cycle);
        }
        if let Some(&(_, ex, c, _)) = fabric.edge_exits.first() {
            debug_assert_eq!(ex, exit);
            return Ok(c);
        }
    }
    Err(SimError::Misrouted {
        packet: 0,
        at: 0,
        dest: 0,
    })
}
