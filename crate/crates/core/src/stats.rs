//! Latency accounting, saturation detection, the zero-load oracle and the
//! progress monitor.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{ConfigError, SimError};
use crate::fabric::{BufferedHead, Fabric};
use crate::flit::{Flit, PacketId};
use crate::ring::{exit_exchange_for, ring_route, ExchangeId};
use crate::sim::{RouterDesign, SimConfig};
use crate::topology::{dor_output, Mesh, NodeId};
use crate::traffic::{PatternParams, Traffic, TrafficPattern};

/// Aggregates of one run. Latencies are in cycles from packet generation to
/// tail ejection and cover only packets generated during Measure.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub design: RouterDesign,
    /// `None` for trace-driven runs.
    pub pattern: Option<TrafficPattern>,
    pub k: usize,
    pub rate: f64,
    pub seed: u64,
    pub packets_generated: u64,
    pub packets_delivered: u64,
    pub flits_delivered: u64,
    /// NaN when nothing was delivered.
    pub avg_latency: f64,
    pub min_latency: Option<u64>,
    pub max_latency: Option<u64>,
    /// Accepted flits per cycle per node over the measurement window.
    pub throughput: f64,
    pub undrained: bool,
    /// Measured packets still undelivered when the run ended.
    pub stranded_packets: u64,
    pub cycles: u64,
}

impl StatsReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "design",
        "pattern",
        "k",
        "rate",
        "seed",
        "packets_delivered",
        "avg_latency",
        "min_latency",
        "max_latency",
        "throughput",
        "undrained",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LatencyStats {
    pub count: u64,
    pub sum: u64,
    pub min: Option<u64>,
    pub max: Option<u64>,
}

impl LatencyStats {
    pub fn record(&mut self, latency: u64) {
        self.count += 1;
        self.sum += latency;
        self.min = Some(self.min.map_or(latency, |m| m.min(latency)));
        self.max = Some(self.max.map_or(latency, |m| m.max(latency)));
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum as f64 / self.count as f64
        }
    }
}

/// Checks every delivered flit against what was already delivered.
/// Packet ids are assumed to be handed out densely from zero.
#[derive(Debug, Clone, Default)]
pub struct DeliveryLedger {
    done: Vec<u64>,
    partial: BTreeMap<PacketId, u16>,
}

impl DeliveryLedger {
    pub fn is_delivered(&self, id: PacketId) -> bool {
        let (w, b) = ((id / 64) as usize, id % 64);
        self.done.get(w).is_some_and(|x| x & (1 << b) != 0)
    }

    /// Returns true when `flit` completes its packet.
    pub fn record(&mut self, flit: &Flit) -> Result<bool, SimError> {
        let id = flit.packet;
        if self.is_delivered(id) {
            return Err(SimError::DuplicateDelivery(id));
        }
        let expected = self.partial.get(&id).copied().unwrap_or(0);
        if flit.seq != expected {
            return Err(SimError::OutOfOrder {
                packet: id,
                seq: flit.seq,
            });
        }
        if !flit.is_tail() {
            self.partial.insert(id, expected + 1);
            return Ok(false);
        }
        if expected != 0 {
            self.partial.remove(&id);
        }
        let w = (id / 64) as usize;
        if self.done.len() <= w {
            self.done.resize(w + 1, 0);
        }
        self.done[w] |= 1 << (id % 64);
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub rate: f64,
    pub avg_latency: f64,
    pub undrained: bool,
}

impl From<&StatsReport> for SweepPoint {
    fn from(r: &StatsReport) -> Self {
        SweepPoint {
            rate: r.rate,
            avg_latency: r.avg_latency,
            undrained: r.undrained,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub no_load_latency: f64,
    pub saturation_rate: Option<f64>,
}

impl SweepResult {
    pub fn new(points: Vec<SweepPoint>) -> Self {
        let no_load_latency = points.first().map_or(f64::NAN, |p| p.avg_latency);
        let saturation_rate = find_saturation(&points);
        SweepResult {
            points,
            no_load_latency,
            saturation_rate,
        }
    }
}

/// Smallest rate whose latency is at least twice that of the first point.
/// Undrained points count as saturated.
pub fn find_saturation(points: &[SweepPoint]) -> Option<f64> {
    let base = points.first()?.avg_latency;
    points
        .iter()
        .find(|p| p.undrained || p.avg_latency.is_nan() || p.avg_latency >= 2.0 * base)
        .map(|p| p.rate)
}

/// Uncontended latency of one packet from `src` to `dest`.
pub fn zero_load_pair_latency(
    design: RouterDesign,
    mesh: &Mesh,
    src: NodeId,
    dest: NodeId,
    packet_len: u16,
    link_latency: u64,
) -> u64 {
    let links = mesh.hops(src, dest) as u64;
    let serial = packet_len as u64 - 1;
    match design {
        RouterDesign::Base1 | RouterDesign::Base2 => {
            let stages = design.pipeline().expect("conventional design").depth();
            (links + 1) * stages + links * link_latency + serial
        }
        RouterDesign::Ring => {
            let target = mesh.coord(dest);
            let mut here = src;
            let mut entry = ExchangeId::Core;
            let mut hops = 0u64;
            loop {
                let exit = exit_exchange_for(target, mesh.coord(here));
                hops += ring_route(entry, exit).expect("DOR never turns back").hop_count() as u64;
                if exit == ExchangeId::Core {
                    break;
                }
                let d = dor_output(mesh.coord(here), target);
                here = mesh.neighbor_id(here, d).expect("DOR stays in the mesh");
                entry = ExchangeId::for_port(d.opposite());
            }
            hops + links * (link_latency - 1) + serial
        }
    }
}

/// Expected uncontended latency under `config`'s traffic pattern, averaged
/// over all sources and their destination distributions.
pub fn zero_load_latency(config: &SimConfig) -> Result<f64, ConfigError> {
    let mesh = Mesh::square(config.k);
    let traffic = Traffic::new(config.pattern, config.k, &config.pattern_params)?;
    let mut total = 0.0;
    for src in 0..mesh.nodes() {
        for (dest, w) in traffic.dest_weights(src) {
            let lat = zero_load_pair_latency(
                config.design,
                &mesh,
                src,
                dest,
                config.packet_len as u16,
                config.link_latency,
            );
            total += w * lat as f64;
        }
    }
    Ok(total / mesh.nodes() as f64)
}

/// [`zero_load_latency`] at default geometry.
pub fn zero_load_latency_oracle(design: RouterDesign, pattern: TrafficPattern, k: usize) -> Result<f64, ConfigError> {
    let config = SimConfig {
        design,
        pattern,
        k,
        pattern_params: PatternParams::default(),
        ..SimConfig::default()
    };
    zero_load_latency(&config)
}

/// A network that stopped moving.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StallReport {
    pub cycle: u64,
    pub window: u64,
    /// Heads that have waited longer than the window, oldest first.
    pub stuck: Vec<BufferedHead>,
    pub buffered_flits: u64,
    /// Buffered head flits per router.
    pub occupancy: Vec<(NodeId, u32)>,
}

impl fmt::Display for StallReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cycle {}: {} flit(s) stuck longer than {} cycles, {} buffered",
            self.cycle,
            self.stuck.len(),
            self.window,
            self.buffered_flits
        )?;
        if let Some(h) = self.stuck.first() {
            write!(
                f,
                "; oldest is packet {} at router {} {} since cycle {}",
                h.packet, h.router, h.location, h.since
            )?;
        }
        Ok(())
    }
}

/// Flags any head flit that has not moved for `window` cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgressMonitor {
    pub window: u64,
    pub interval: u64,
}

impl ProgressMonitor {
    pub fn new(window: u64) -> Self {
        ProgressMonitor {
            window,
            interval: (window / 100).clamp(1, 100),
        }
    }

    pub(crate) fn check(&self, fabric: &Fabric, cycle: u64) -> Result<(), StallReport> {
        if !cycle.is_multiple_of(self.interval) || fabric.buffered_flits() == 0 {
            return Ok(());
        }
        let mut stalled = false;
        fabric.for_each_head(&mut |h| stalled |= cycle - h.since > self.window);
        if !stalled {
            return Ok(());
        }
        let mut stuck = Vec::new();
        let mut occupancy: Vec<(NodeId, u32)> = Vec::new();
        fabric.for_each_head(&mut |h| {
            if cycle - h.since > self.window {
                stuck.push(h);
            }
            match occupancy.last_mut() {
                Some((r, n)) if *r == h.router => *n += 1,
                _ => occupancy.push((h.router, 1)),
            }
        });
        stuck.sort_by_key(|h| (h.since, h.router));
        Err(StallReport {
            cycle,
            window: self.window,
            stuck,
            buffered_flits: fabric.buffered_flits(),
            occupancy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flit::Packet;

    fn pt(rate: f64, lat: f64) -> SweepPoint {
        SweepPoint {
            rate,
            avg_latency: lat,
            undrained: false,
        }
    }

    #[test]
    fn saturation_examples() {
        let pts = [pt(0.01, 20.0), pt(0.1, 21.0), pt(0.2, 25.0), pt(0.3, 45.0)];
        assert_eq!(find_saturation(&pts), Some(0.3));
        assert_eq!(find_saturation(&pts[..3]), None);
        let mut pts = [pt(0.01, 20.0), pt(0.3, 30.0), pt(0.4, 31.0), pt(0.5, 80.0)];
        pts[2].undrained = true;
        assert_eq!(find_saturation(&pts), Some(0.4));
        assert_eq!(find_saturation(&[]), None);
    }

    #[test]
    fn latency_stats() {
        let mut s = LatencyStats::default();
        assert!(s.mean().is_nan());
        s.record(23);
        s.record(10);
        s.record(30);
        assert_eq!((s.min, s.max, s.count), (Some(10), Some(30), 3));
        assert!((s.mean() - 21.0).abs() < 1e-12);
    }

    fn packet(id: u64, len: u16) -> Packet {
        Packet {
            id,
            src: 0,
            dest: 1,
            len,
            gen_cycle: 100,
            measured: true,
        }
    }

    #[test]
    fn ledger_detects_duplicates_and_reordering() {
        let mut l = DeliveryLedger::default();
        assert_eq!(l.record(&packet(3, 1).flit(0)), Ok(true));
        assert_eq!(l.record(&packet(3, 1).flit(0)), Err(SimError::DuplicateDelivery(3)));
        let p = packet(130, 3);
        assert_eq!(l.record(&p.flit(0)), Ok(false));
        assert_eq!(l.record(&p.flit(2)), Err(SimError::OutOfOrder { packet: 130, seq: 2 }));
        assert_eq!(l.record(&p.flit(1)), Ok(false));
        assert_eq!(l.record(&p.flit(2)), Ok(true));
        assert!(l.is_delivered(130) && !l.is_delivered(129));
    }

    #[test]
    fn pair_latency_neighbors() {
        let mesh = Mesh::new(2, 1);
        assert_eq!(zero_load_pair_latency(RouterDesign::Base1, &mesh, 0, 1, 1, 1), 9);
        assert_eq!(zero_load_pair_latency(RouterDesign::Base2, &mesh, 0, 1, 1, 1), 5);
        // Core->East (3) then West->Core (2).
        assert_eq!(zero_load_pair_latency(RouterDesign::Ring, &mesh, 0, 1, 1, 1), 5);
        assert_eq!(zero_load_pair_latency(RouterDesign::Ring, &mesh, 0, 0, 1, 1), 6);
        assert_eq!(
            zero_load_pair_latency(RouterDesign::Base1, &mesh, 0, 1, 4, 3),
            4 * 2 + 3 + 3
        );
    }

    #[test]
    fn oracle_uniform_by_hand() {
        // On a 2x2 mesh every source sees one neighbor on each axis and one
        // diagonal node; base-1 costs 4 per router and 1 per link.
        let got = zero_load_latency_oracle(RouterDesign::Base1, TrafficPattern::Uniform, 2).unwrap();
        let want = (9.0 + 9.0 + 14.0) / 3.0;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}
