//! Global clock, run phases and the top-level run loop.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conventional::{ConventionalFabric, PipelineModel};
use crate::error::{ConfigError, SimError};
use crate::fabric::{Event, EventKind, Fabric, TickOutput};
use crate::flit::Packet;
use crate::ring::RingFabric;
use crate::stats::{DeliveryLedger, LatencyStats, ProgressMonitor, StatsReport, SweepPoint, SweepResult};
use crate::topology::{Mesh, NodeId};
use crate::traffic::{maybe_inject, PatternParams, SourceQueue, TraceError, TraceEvent, Traffic, TrafficPattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RouterDesign {
    Base1,
    Base2,
    Ring,
}

impl RouterDesign {
    pub const ALL: [RouterDesign; 3] = [RouterDesign::Base1, RouterDesign::Base2, RouterDesign::Ring];

    pub fn name(self) -> &'static str {
        match self {
            RouterDesign::Base1 => "base1",
            RouterDesign::Base2 => "base2",
            RouterDesign::Ring => "ring",
        }
    }

    pub fn pipeline(self) -> Option<PipelineModel> {
        match self {
            RouterDesign::Base1 => Some(PipelineModel::FourStage),
            RouterDesign::Base2 => Some(PipelineModel::LookaheadSpeculative),
            RouterDesign::Ring => None,
        }
    }

    /// VCs per buffer: 8 per input port, or 2 per exit buffer of the ring.
    pub fn default_vcs(self) -> usize {
        match self {
            RouterDesign::Ring => 2,
            _ => 8,
        }
    }

    /// Number of buffers each router has.
    pub fn buffers_per_router(self) -> usize {
        match self {
            RouterDesign::Ring => 15,
            _ => 5,
        }
    }
}

impl fmt::Display for RouterDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown router design `{0}` (expected base1, base2 or ring)")]
pub struct UnknownDesign(pub String);

impl FromStr for RouterDesign {
    type Err = UnknownDesign;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "base1" | "base-1" => RouterDesign::Base1,
            "base2" | "base-2" => RouterDesign::Base2,
            "ring" => RouterDesign::Ring,
            other => return Err(UnknownDesign(other.into())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub k: usize,
    pub design: RouterDesign,
    pub flit_width_bits: u32,
    pub vc_depth: usize,
    /// `None` picks the design's default.
    pub vcs_per_buffer: Option<usize>,
    pub packet_len: usize,
    /// Offered load in flits per cycle per node.
    pub rate: f64,
    pub pattern: TrafficPattern,
    pub pattern_params: PatternParams,
    pub warmup: u64,
    pub measure: u64,
    pub max_drain: u64,
    pub seed: u64,
    pub link_latency: u64,
    /// Cycles a head flit may sit still before the run is declared stalled.
    pub progress_window: u64,
    /// Check flit conservation and buffer bookkeeping every cycle.
    pub check_invariants: bool,
    pub record_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            k: 8,
            design: RouterDesign::Ring,
            flit_width_bits: 128,
            vc_depth: 8,
            vcs_per_buffer: None,
            packet_len: 1,
            rate: 0.01,
            pattern: TrafficPattern::Uniform,
            pattern_params: PatternParams::default(),
            warmup: 10_000,
            measure: 50_000,
            max_drain: 100_000,
            seed: 1,
            link_latency: 1,
            progress_window: 10_000,
            check_invariants: false,
            record_events: false,
        }
    }
}

impl SimConfig {
    pub fn vcs(&self) -> usize {
        self.vcs_per_buffer.unwrap_or(self.design.default_vcs())
    }

    /// VCs in one router: 40 for the crossbar routers and 30 for the ring
    /// at default geometry.
    pub fn total_vcs(&self) -> usize {
        self.design.buffers_per_router() * self.vcs()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < 2 {
            return Err(ConfigError::MeshTooSmall(self.k));
        }
        if self.k > 256 {
            return Err(ConfigError::TooLarge("k", 256));
        }
        for (name, v) in [
            ("vc_depth", self.vc_depth as u64),
            ("packet_len", self.packet_len as u64),
            ("vcs_per_buffer", self.vcs() as u64),
            ("flit_width_bits", self.flit_width_bits as u64),
            ("link_latency", self.link_latency),
            ("progress_window", self.progress_window),
        ] {
            if v == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.vc_depth < self.packet_len {
            return Err(ConfigError::VcTooShallow {
                depth: self.vc_depth,
                packet: self.packet_len,
            });
        }
        if self.vc_depth > u16::MAX as usize {
            return Err(ConfigError::TooLarge("vc_depth", u16::MAX as usize));
        }
        let max_vcs = if self.design == RouterDesign::Ring { 255 } else { 64 };
        if self.vcs() > max_vcs {
            return Err(ConfigError::TooLarge("vcs_per_buffer", max_vcs));
        }
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(ConfigError::RateOutOfRange(self.rate));
        }
        Traffic::new(self.pattern, self.k, &self.pattern_params)?;
        Ok(())
    }

    fn packet_probability(&self) -> f64 {
        self.rate / self.packet_len as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimPhase {
    Warmup,
    Measure,
    Drain,
    Done,
}

/// Controls how new traffic reaches the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InjectionGate {
    Open,
    /// No new packets; queued packets still enter the network.
    Stopped,
    /// No new packets and source queues are held back.
    Closed,
}

enum Source {
    Synthetic(Traffic),
    Trace { events: Vec<TraceEvent>, next: usize },
}

/// One network under simulation, advanced a cycle at a time.
pub struct Simulation {
    config: SimConfig,
    mesh: Mesh,
    fabric: Fabric,
    source: Source,
    rng: ChaCha8Rng,
    sources: Vec<SourceQueue>,
    cycle: u64,
    gate: InjectionGate,
    done: bool,
    next_id: u64,
    generated_flits: u64,
    delivered_flits: u64,
    delivered_packets: u64,
    measured_generated: u64,
    measured_delivered: u64,
    measured_flits: u64,
    latency: LatencyStats,
    ledger: DeliveryLedger,
    monitor: ProgressMonitor,
    out: TickOutput,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let traffic = Traffic::new(config.pattern, config.k, &config.pattern_params)?;
        Ok(Self::build(config, Source::Synthetic(traffic), Mesh::square))
    }

    /// Replays `events` instead of generating synthetic traffic.
    pub fn with_trace(config: SimConfig, events: Vec<TraceEvent>) -> Result<Self, ConfigError> {
        config.validate()?;
        let nodes = config.k * config.k;
        let mut previous = 0;
        for (i, e) in events.iter().enumerate() {
            let line = i + 1;
            for node in [e.src, e.dest] {
                if node >= nodes {
                    return Err(TraceError::NodeOutOfRange { line, node, nodes }.into());
                }
            }
            if e.size_flits == 0 {
                return Err(TraceError::ZeroSize { line }.into());
            }
            if e.cycle < previous {
                return Err(TraceError::NonMonotone {
                    line,
                    cycle: e.cycle,
                    previous,
                }
                .into());
            }
            previous = e.cycle;
        }
        Ok(Self::build(config, Source::Trace { events, next: 0 }, Mesh::square))
    }

    /// A network on an arbitrary `width x height` mesh driven only through
    /// [`Simulation::inject`].
    pub fn on_mesh(config: SimConfig, width: usize, height: usize) -> Result<Self, ConfigError> {
        config.validate()?;
        if width == 0 || height == 0 {
            return Err(ConfigError::NotPositive("mesh dimension"));
        }
        let source = Source::Trace {
            events: Vec::new(),
            next: 0,
        };
        Ok(Self::build(config, source, |_| Mesh::new(width, height)))
    }

    fn build(config: SimConfig, source: Source, mesh: impl FnOnce(usize) -> Mesh) -> Self {
        let mesh = mesh(config.k);
        let vcs = config.vcs();
        let fabric = match config.design.pipeline() {
            None => Fabric::Ring(RingFabric::new(mesh, vcs, config.vc_depth, config.link_latency)),
            Some(model) => Fabric::Conventional(ConventionalFabric::new(
                mesh,
                model,
                vcs,
                config.vc_depth,
                config.link_latency,
            )),
        };
        let out = TickOutput {
            delivered: Vec::new(),
            events: config.record_events.then(Vec::new),
        };
        Simulation {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            sources: alloc::vec![SourceQueue::default(); mesh.nodes()],
            monitor: ProgressMonitor::new(config.progress_window),
            config,
            mesh,
            fabric,
            source,
            cycle: 0,
            gate: InjectionGate::Open,
            done: false,
            next_id: 0,
            generated_flits: 0,
            delivered_flits: 0,
            delivered_packets: 0,
            measured_generated: 0,
            measured_delivered: 0,
            measured_flits: 0,
            latency: LatencyStats::default(),
            ledger: DeliveryLedger::default(),
            out,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// The cycle the next [`step`](Self::step) will simulate.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn phase(&self) -> SimPhase {
        let measure_end = self.config.warmup + self.config.measure;
        if self.done {
            SimPhase::Done
        } else if self.cycle < self.config.warmup {
            SimPhase::Warmup
        } else if self.cycle < measure_end {
            SimPhase::Measure
        } else {
            SimPhase::Drain
        }
    }

    pub fn gate(&self) -> InjectionGate {
        self.gate
    }

    pub fn set_gate(&mut self, gate: InjectionGate) {
        self.gate = gate;
    }

    /// Test hook: the router stops arbitrating.
    pub fn freeze(&mut self, router: NodeId) {
        self.fabric.freeze(router);
    }

    pub fn generated_flits(&self) -> u64 {
        self.generated_flits
    }

    pub fn delivered_flits(&self) -> u64 {
        self.delivered_flits
    }

    pub fn delivered_packets(&self) -> u64 {
        self.delivered_packets
    }

    /// Flits inside routers or on links.
    pub fn in_network_flits(&self) -> u64 {
        self.fabric.buffered_flits() + self.fabric.link_flits()
    }

    pub fn queued_flits(&self) -> u64 {
        self.sources.iter().map(SourceQueue::flits).sum()
    }

    pub fn conservation_holds(&self) -> bool {
        self.generated_flits == self.delivered_flits + self.in_network_flits() + self.queued_flits()
    }

    /// Cycles the oldest packet at the front of any source queue has waited.
    pub fn oldest_queued_age(&self) -> Option<u64> {
        self.sources
            .iter()
            .filter_map(|q| q.front())
            .map(|p| self.cycle - p.gen_cycle)
            .max()
    }

    /// Measured packets not yet delivered.
    pub fn outstanding_measured(&self) -> u64 {
        self.measured_generated - self.measured_delivered
    }

    /// Events recorded so far, if recording is enabled.
    pub fn events(&self) -> Option<&[Event]> {
        self.out.events.as_deref()
    }

    /// Enqueues a packet at `src` generated in the current cycle.
    pub fn inject(&mut self, src: NodeId, dest: NodeId, len: u16) {
        assert!(src < self.mesh.nodes() && dest < self.mesh.nodes() && len >= 1);
        let measured = self.phase() == SimPhase::Measure;
        let p = Packet {
            id: self.next_id,
            src,
            dest,
            len,
            gen_cycle: self.cycle,
            measured,
        };
        self.next_id += 1;
        self.generated_flits += len as u64;
        if measured {
            self.measured_generated += 1;
        }
        if let Some(ev) = self.out.events.as_mut() {
            ev.push(Event {
                cycle: self.cycle,
                packet: p.id,
                kind: EventKind::Generated { node: src },
            });
        }
        self.sources[src].push(p);
    }

    fn generate(&mut self) {
        let cycle = self.cycle;
        let mut source = core::mem::replace(
            &mut self.source,
            Source::Trace {
                events: Vec::new(),
                next: 0,
            },
        );
        match &mut source {
            Source::Synthetic(traffic) => {
                let prob = self.config.packet_probability();
                let len = self.config.packet_len as u16;
                if prob > 0.0 {
                    for src in 0..self.mesh.nodes() {
                        if maybe_inject(prob, &mut self.rng) {
                            let dest = traffic.dest_for(src, &mut self.rng);
                            self.inject(src, dest, len);
                        }
                    }
                }
            }
            Source::Trace { events, next } => {
                while *next < events.len() && events[*next].cycle <= cycle {
                    let e = events[*next];
                    *next += 1;
                    self.inject(e.src, e.dest, e.size_flits);
                }
            }
        }
        self.source = source;
    }

    /// Advances one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let cycle = self.cycle;
        if self.gate == InjectionGate::Open {
            self.generate();
        }
        let inject = self.gate != InjectionGate::Closed;
        self.fabric.tick(cycle, &mut self.sources, inject, &mut self.out)?;
        for i in 0..self.out.delivered.len() {
            let (_, flit) = self.out.delivered[i];
            self.delivered_flits += 1;
            if self.ledger.record(&flit)? {
                self.delivered_packets += 1;
                if flit.measured {
                    self.measured_delivered += 1;
                    self.measured_flits += flit.len as u64;
                    self.latency.record(cycle - flit.gen_cycle);
                }
            }
        }
        self.out.delivered.clear();
        if self.config.check_invariants {
            if !self.conservation_holds() {
                return Err(SimError::Invariant {
                    cycle,
                    what: "flit conservation",
                });
            }
            self.fabric
                .check_invariants()
                .map_err(|what| SimError::Invariant { cycle, what })?;
        }
        self.monitor
            .check(&self.fabric, cycle)
            .map_err(|r| SimError::Stall(alloc::boxed::Box::new(r)))?;
        self.cycle += 1;
        Ok(())
    }

    /// Steps until the clock reaches `cycle`.
    pub fn run_until(&mut self, cycle: u64) -> Result<(), SimError> {
        while self.cycle < cycle {
            self.step()?;
        }
        Ok(())
    }

    /// Steps until nothing is left in routers or on links, at most
    /// `max_cycles` times. Returns whether the network emptied.
    pub fn drain_network(&mut self, max_cycles: u64) -> Result<bool, SimError> {
        for _ in 0..max_cycles {
            if self.in_network_flits() == 0 {
                return Ok(true);
            }
            self.step()?;
        }
        Ok(self.in_network_flits() == 0)
    }

    /// Runs Warmup and Measure, then keeps going until every measured
    /// packet is delivered or `max_drain` cycles pass.
    pub fn run(&mut self) -> Result<StatsReport, SimError> {
        let measure_end = self.config.warmup + self.config.measure;
        self.run_until(measure_end)?;
        let deadline = measure_end + self.config.max_drain;
        while self.outstanding_measured() > 0 && self.cycle < deadline {
            self.step()?;
        }
        self.done = true;
        Ok(self.report())
    }

    pub fn report(&self) -> StatsReport {
        let nodes = self.mesh.nodes() as f64;
        let window = self.config.measure.max(1) as f64;
        StatsReport {
            design: self.config.design,
            pattern: match self.source {
                Source::Synthetic(_) => Some(self.config.pattern),
                Source::Trace { .. } => None,
            },
            k: self.config.k,
            rate: self.config.rate,
            seed: self.config.seed,
            packets_generated: self.measured_generated,
            packets_delivered: self.measured_delivered,
            flits_delivered: self.measured_flits,
            avg_latency: self.latency.mean(),
            min_latency: self.latency.min,
            max_latency: self.latency.max,
            throughput: self.measured_flits as f64 / (nodes * window),
            undrained: self.outstanding_measured() > 0,
            stranded_packets: self.outstanding_measured(),
            cycles: self.cycle,
        }
    }
}

/// Runs one synthetic-traffic simulation to completion.
pub fn run_simulation(config: SimConfig) -> Result<StatsReport, SimError> {
    Simulation::new(config)?.run()
}

/// Runs `config` at each rate in order. With `stop_after_saturation` the
/// sweep ends at the first saturated point.
pub fn sweep(
    config: &SimConfig,
    rates: &[f64],
    stop_after_saturation: bool,
) -> Result<(Vec<StatsReport>, SweepResult), SimError> {
    let mut reports = Vec::with_capacity(rates.len());
    let mut points: Vec<SweepPoint> = Vec::with_capacity(rates.len());
    for &rate in rates {
        let report = run_simulation(SimConfig { rate, ..config.clone() })?;
        points.push((&report).into());
        reports.push(report);
        if stop_after_saturation && crate::stats::find_saturation(&points).is_some() {
            break;
        }
    }
    Ok((reports, SweepResult::new(points)))
}
