use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{PipelineModel, SwitchAllocator, SwitchGrant, SwitchRequest, VcAllocator, VcGrant, VcRequest, VcState};
use crate::error::SimError;
use crate::fabric::{BufferedHead, EventKind, Location, TickOutput};
use crate::flit::Flit;
use crate::topology::{dor_output, CreditCounter, CreditEvent, Mesh, NodeId, PortDirection};
use crate::traffic::SourceQueue;

const PORTS: usize = 5;
const LOCAL: usize = PortDirection::Local.index();

#[derive(Debug, Clone)]
struct InputVc {
    q: VecDeque<Flit>,
    state: VcState,
    ready_at: u64,
    out_port: u8,
    out_vc: u8,
    /// Claimed by the local source for the packet it is injecting.
    claimed: bool,
}

#[derive(Debug, Clone, Copy)]
struct OutVc {
    allocated: bool,
    credits: CreditCounter,
}

#[derive(Debug, Clone)]
struct Router {
    inputs: Vec<InputVc>,
    outputs: Vec<OutVc>,
    va: VcAllocator,
    sa: SwitchAllocator,
    /// Flits that won switch allocation last cycle, by output port.
    traversal: Vec<(u8, Flit)>,
    /// Flits held in input VCs plus those in switch traversal.
    load: u32,
    /// Local VC receiving the packet currently being injected.
    injecting: Option<u8>,
}

#[derive(Debug, Clone, Copy)]
struct LinkFlit {
    arrive: u64,
    router: u32,
    port: u8,
    vc: u8,
    flit: Flit,
}

#[derive(Debug, Clone, Copy)]
struct Credit {
    arrive: u64,
    router: u32,
    port: u8,
    vc: u8,
}

/// Input-queued VC routers of a mesh, each with a 5x5 crossbar.
///
/// Links carry flits and credits with `link_latency` cycles of delay. A flit
/// that traverses the switch in cycle `t` is written into the downstream
/// input VC at the end of cycle `t + link_latency`.
#[derive(Debug, Clone)]
pub struct ConventionalFabric {
    mesh: Mesh,
    model: PipelineModel,
    vcs: usize,
    depth: usize,
    link_latency: u64,
    routers: Vec<Router>,
    links: VecDeque<LinkFlit>,
    credits: VecDeque<Credit>,
    frozen: Vec<bool>,
    buffered: u64,
    injections: Vec<(u32, u8, Flit)>,
    va_req: Vec<VcRequest>,
    va_grant: Vec<VcGrant>,
    sa_req: Vec<SwitchRequest>,
    sa_grant: Vec<SwitchGrant>,
    routing: Vec<u8>,
}

impl ConventionalFabric {
    pub fn new(mesh: Mesh, model: PipelineModel, vcs: usize, depth: usize, link_latency: u64) -> Self {
        assert!((1..=64).contains(&vcs) && depth >= 1 && link_latency >= 1);
        let ivc = InputVc {
            q: VecDeque::with_capacity(depth),
            state: VcState::Idle,
            ready_at: 0,
            out_port: 0,
            out_vc: 0,
            claimed: false,
        };
        let ovc = OutVc {
            allocated: false,
            credits: CreditCounter::full(depth as u32),
        };
        let router = Router {
            inputs: vec![ivc; PORTS * vcs],
            outputs: vec![ovc; PORTS * vcs],
            va: VcAllocator::new(PORTS, vcs),
            sa: SwitchAllocator::new(PORTS, vcs),
            traversal: Vec::with_capacity(PORTS),
            load: 0,
            injecting: None,
        };
        let n = mesh.nodes();
        Self {
            mesh,
            model,
            vcs,
            depth,
            link_latency,
            routers: vec![router; n],
            links: VecDeque::new(),
            credits: VecDeque::new(),
            frozen: vec![false; n],
            buffered: 0,
            injections: Vec::new(),
            va_req: Vec::new(),
            va_grant: Vec::new(),
            sa_req: Vec::new(),
            sa_grant: Vec::new(),
            routing: Vec::new(),
        }
    }

    pub fn model(&self) -> PipelineModel {
        self.model
    }

    /// Total VCs per router.
    pub fn vcs_per_router(&self) -> usize {
        PORTS * self.vcs
    }

    /// Flits in input VCs and in switch traversal.
    pub fn buffered_flits(&self) -> u64 {
        self.buffered
    }

    pub fn link_flits(&self) -> u64 {
        self.links.len() as u64
    }

    pub fn freeze(&mut self, router: NodeId) {
        self.frozen[router] = true;
    }

    pub fn for_each_head(&self, visit: &mut dyn FnMut(BufferedHead)) {
        for (r, router) in self.routers.iter().enumerate() {
            if router.load == 0 {
                continue;
            }
            for (i, ivc) in router.inputs.iter().enumerate() {
                if let Some(f) = ivc.q.front() {
                    visit(BufferedHead {
                        router: r,
                        location: Location::Input {
                            port: PortDirection::from_index(i / self.vcs),
                            vc: i % self.vcs,
                        },
                        packet: f.packet,
                        since: f.since,
                    });
                }
            }
        }
    }

    /// Credit conservation on every inter-router VC, buffer bounds, and
    /// one packet per input VC.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        let v = self.vcs;
        let mut total = 0u64;
        for router in &self.routers {
            let mut load = router.traversal.len() as u64;
            for ivc in &router.inputs {
                if ivc.q.len() > self.depth {
                    return Err("input VC over capacity");
                }
                if let (Some(a), Some(b)) = (ivc.q.front(), ivc.q.back()) {
                    if a.packet != b.packet {
                        return Err("input VC holds two packets");
                    }
                }
                load += ivc.q.len() as u64;
            }
            if load != router.load as u64 {
                return Err("router load out of sync");
            }
            total += load;
        }
        if total != self.buffered {
            return Err("buffered total out of sync");
        }
        // Everything that holds a slot of a downstream input VC, indexed by
        // that VC: its own flits, flits in flight toward it, upstream credits,
        // and credits on their way back.
        let slot = |r: usize, port: usize, vc: usize| -> Option<usize> {
            let dir = PortDirection::from_index(port);
            let nr = self.mesh.neighbor_id(r, dir)?;
            Some((nr * PORTS + dir.opposite().index()) * v + vc)
        };
        let mut held = vec![0usize; self.routers.len() * PORTS * v];
        for l in &self.links {
            held[(l.router as usize * PORTS + l.port as usize) * v + l.vc as usize] += 1;
        }
        for c in &self.credits {
            let i = slot(c.router as usize, c.port as usize, c.vc as usize).ok_or("credit for a missing link")?;
            held[i] += 1;
        }
        for (r, router) in self.routers.iter().enumerate() {
            for (p, f) in &router.traversal {
                if let Some(i) = slot(r, *p as usize, f.route.vc as usize) {
                    held[i] += 1;
                }
            }
            for port in 0..LOCAL {
                for vc in 0..v {
                    if let Some(i) = slot(r, port, vc) {
                        held[i] += router.outputs[port * v + vc].credits.credits() as usize;
                    }
                }
            }
        }
        for (r, router) in self.routers.iter().enumerate() {
            for port in 0..LOCAL {
                if self.mesh.neighbor_id(r, PortDirection::from_index(port)).is_none() {
                    continue;
                }
                for vc in 0..v {
                    let i = (r * PORTS + port) * v + vc;
                    if held[i] + router.inputs[port * v + vc].q.len() != self.depth {
                        return Err("credit conservation violated");
                    }
                }
            }
        }
        Ok(())
    }

    fn overflow(&self, cycle: u64, router: usize, port: usize, vc: usize) -> SimError {
        SimError::BufferOverflow {
            cycle,
            router,
            location: Location::Input {
                port: PortDirection::from_index(port),
                vc,
            },
        }
    }

    /// Writes a flit into an input VC at the end of `cycle`.
    fn write_input(
        &mut self,
        cycle: u64,
        r: usize,
        port: usize,
        vc: usize,
        mut flit: Flit,
        out: &mut TickOutput,
    ) -> Result<(), SimError> {
        let lookahead = self.model.lookahead();
        let i = port * self.vcs + vc;
        let ivc = &mut self.routers[r].inputs[i];
        if ivc.q.len() >= self.depth {
            return Err(self.overflow(cycle, r, port, vc));
        }
        if flit.is_head() {
            if ivc.state != VcState::Idle || !ivc.q.is_empty() {
                return Err(self.overflow(cycle, r, port, vc));
            }
            if lookahead {
                ivc.state = VcState::RouteComputed;
                ivc.out_port = flit.route.exit;
            } else {
                ivc.state = VcState::Routing;
            }
            ivc.ready_at = cycle + 1;
            out.event(cycle, &flit, EventKind::RouterIn { router: r });
        }
        flit.since = cycle;
        ivc.q.push_back(flit);
        self.routers[r].load += 1;
        self.buffered += 1;
        Ok(())
    }

    pub(crate) fn tick(
        &mut self,
        cycle: u64,
        sources: &mut [SourceQueue],
        inject: bool,
        out: &mut TickOutput,
    ) -> Result<(), SimError> {
        let n = self.mesh.nodes();
        for r in 0..n {
            let has_src = inject && !sources[r].is_empty();
            if self.routers[r].load == 0 && !has_src {
                continue;
            }
            if has_src {
                self.plan_injection(r, &sources[r]);
                if let Some(vc) = self.routers[r].injecting {
                    let mut f = sources[r].pop_flit().expect("non-empty source");
                    if f.is_tail() {
                        self.routers[r].injecting = None;
                    }
                    f.route.exit = dor_output(self.mesh.coord(r), self.mesh.coord(f.dest())) as u8;
                    self.injections.push((r as u32, vc, f));
                }
            }
            self.traverse(cycle, r, out)?;
            if !self.frozen[r] {
                self.allocate(cycle, r)?;
            }
        }

        // End of cycle: writes and credits become visible next cycle.
        let injections = core::mem::take(&mut self.injections);
        for &(r, vc, f) in &injections {
            let r = r as usize;
            let ivc = &mut self.routers[r].inputs[LOCAL * self.vcs + vc as usize];
            if f.is_tail() {
                ivc.claimed = false;
            }
            self.write_input(cycle, r, LOCAL, vc as usize, f, out)?;
        }
        self.injections = injections;
        self.injections.clear();

        while self.links.front().is_some_and(|l| l.arrive == cycle) {
            let l = self.links.pop_front().expect("front exists");
            self.write_input(cycle, l.router as usize, l.port as usize, l.vc as usize, l.flit, out)?;
        }
        while self.credits.front().is_some_and(|c| c.arrive == cycle) {
            let c = self.credits.pop_front().expect("front exists");
            let (r, port) = (c.router as usize, c.port as usize);
            self.routers[r].outputs[port * self.vcs + c.vc as usize]
                .credits
                .update(CreditEvent::CreditReturned)
                .map_err(|source| SimError::Credit {
                    cycle,
                    router: r,
                    port,
                    source,
                })?;
        }
        Ok(())
    }

    /// Claims a free local VC for the next source packet, judged on the
    /// state left by the previous cycle.
    fn plan_injection(&mut self, r: usize, src: &SourceQueue) {
        let router = &mut self.routers[r];
        if router.injecting.is_some() || src.peek_flit().is_none_or(|f| !f.is_head()) {
            return;
        }
        let v = self.vcs;
        let free = (0..v).find(|&vc| {
            let ivc = &router.inputs[LOCAL * v + vc];
            ivc.state == VcState::Idle && ivc.q.is_empty() && !ivc.claimed
        });
        if let Some(vc) = free {
            router.inputs[LOCAL * v + vc].claimed = true;
            router.injecting = Some(vc as u8);
        }
    }

    /// Switch traversal for last cycle's winners; onto links or to the core.
    fn traverse(&mut self, cycle: u64, r: usize, out: &mut TickOutput) -> Result<(), SimError> {
        let lookahead = self.model.lookahead();
        let mut traversal = core::mem::take(&mut self.routers[r].traversal);
        for (port, mut flit) in traversal.drain(..) {
            self.routers[r].load -= 1;
            self.buffered -= 1;
            out.event(cycle, &flit, EventKind::RouterOut { router: r });
            let dir = PortDirection::from_index(port as usize);
            if dir == PortDirection::Local {
                if flit.dest() != r {
                    return Err(SimError::Misrouted {
                        packet: flit.packet,
                        at: r,
                        dest: flit.dest(),
                    });
                }
                out.event(cycle, &flit, EventKind::Ejected { router: r });
                out.delivered.push((r, flit));
                continue;
            }
            let nr = self.mesh.neighbor_id(r, dir).ok_or(SimError::Misrouted {
                packet: flit.packet,
                at: r,
                dest: flit.dest(),
            })?;
            if lookahead {
                flit.route.exit = dor_output(self.mesh.coord(nr), self.mesh.coord(flit.dest())) as u8;
            }
            self.links.push_back(LinkFlit {
                arrive: cycle + self.link_latency,
                router: nr as u32,
                port: dir.opposite().index() as u8,
                vc: flit.route.vc,
                flit,
            });
        }
        self.routers[r].traversal = traversal;
        Ok(())
    }

    fn allocate(&mut self, cycle: u64, r: usize) -> Result<(), SimError> {
        let v = self.vcs;
        let lookahead = self.model.lookahead();
        let coord = self.mesh.coord(r);
        self.va_req.clear();
        self.sa_req.clear();
        self.routing.clear();

        // Requests, all judged on the state at the start of the cycle.
        let router = &self.routers[r];
        for (i, ivc) in router.inputs.iter().enumerate() {
            if ivc.state == VcState::Idle || ivc.ready_at > cycle {
                continue;
            }
            let (input, vc) = (i / v, i % v);
            match ivc.state {
                VcState::Routing => self.routing.push(i as u8),
                VcState::RouteComputed => {
                    let output = ivc.out_port as usize;
                    self.va_req.push(VcRequest { input, vc, output });
                    if lookahead && ivc.q.front().is_some_and(|f| f.since < cycle) {
                        self.sa_req.push(SwitchRequest {
                            input,
                            vc,
                            output,
                            speculative: true,
                        });
                    }
                }
                VcState::VcAllocated | VcState::Active => {
                    let output = ivc.out_port as usize;
                    let ready = ivc.q.front().is_some_and(|f| f.since < cycle);
                    let credit = output == LOCAL || router.outputs[output * v + ivc.out_vc as usize].credits.can_send();
                    if ready && credit {
                        self.sa_req.push(SwitchRequest {
                            input,
                            vc,
                            output,
                            speculative: false,
                        });
                    }
                }
                VcState::Idle => unreachable!(),
            }
        }

        let router = &mut self.routers[r];
        self.va_grant.clear();
        if !self.va_req.is_empty() {
            // The ejection port has no VC contention.
            let mut k = 0;
            while k < self.va_req.len() {
                let q = self.va_req[k];
                if q.output == LOCAL {
                    self.va_grant.push(VcGrant {
                        input: q.input,
                        vc: q.vc,
                        output: LOCAL,
                        out_vc: q.vc,
                    });
                    self.va_req.swap_remove(k);
                } else {
                    k += 1;
                }
            }
            let outputs = &router.outputs;
            router.va.allocate(
                &self.va_req,
                |o, ov| {
                    let s = outputs[o * v + ov];
                    !s.allocated && s.credits.is_full()
                },
                &mut self.va_grant,
            );
        }
        self.sa_grant.clear();
        if !self.sa_req.is_empty() {
            router.sa.allocate(&self.sa_req, &mut self.sa_grant);
        }

        for g in &self.va_grant {
            let ivc = &mut router.inputs[g.input * v + g.vc];
            ivc.state = VcState::VcAllocated;
            ivc.ready_at = cycle + 1;
            ivc.out_vc = g.out_vc as u8;
            if g.output != LOCAL {
                router.outputs[g.output * v + g.out_vc].allocated = true;
            }
        }

        for g in &self.sa_grant {
            if g.speculative && !self.va_grant.iter().any(|x| x.input == g.input && x.vc == g.vc) {
                // Speculation failed: the crossbar slot goes unused.
                continue;
            }
            let i = g.input * v + g.vc;
            let ivc = &mut router.inputs[i];
            let mut flit = ivc.q.pop_front().expect("switch grant without a flit");
            let out_vc = ivc.out_vc;
            if flit.is_tail() {
                debug_assert!(ivc.q.is_empty());
                ivc.state = VcState::Idle;
            } else {
                ivc.state = VcState::Active;
            }
            if g.output != LOCAL {
                let o = &mut router.outputs[g.output * v + out_vc as usize];
                o.credits
                    .update(CreditEvent::FlitSent)
                    .map_err(|source| SimError::Credit {
                        cycle,
                        router: r,
                        port: g.output,
                        source,
                    })?;
                if flit.is_tail() {
                    o.allocated = false;
                }
            }
            flit.route.vc = out_vc;
            router.traversal.push((g.output as u8, flit));
            if g.input != LOCAL {
                let dir = PortDirection::from_index(g.input);
                let up = self.mesh.neighbor_id(r, dir).expect("flit arrived from a neighbor");
                self.credits.push_back(Credit {
                    arrive: cycle + self.link_latency,
                    router: up as u32,
                    port: dir.opposite().index() as u8,
                    vc: g.vc as u8,
                });
            }
        }

        for &i in &self.routing {
            let ivc = &mut router.inputs[i as usize];
            let dest = ivc.q.front().expect("routing VC has a head").dest();
            ivc.out_port = dor_output(coord, self.mesh.coord(dest)) as u8;
            ivc.state = VcState::RouteComputed;
            ivc.ready_at = cycle + 1;
        }
        Ok(())
    }
}
