//! Synthetic destination patterns, Bernoulli injection, source queues and
//! the text trace format.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::flit::{Flit, Packet};
use crate::topology::{Mesh, NodeCoord, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrafficPattern {
    Uniform,
    BitComplement,
    Shuffle,
    Transpose,
    Hotspot,
    Asymmetric,
}

impl TrafficPattern {
    pub const ALL: [TrafficPattern; 6] = [
        TrafficPattern::Asymmetric,
        TrafficPattern::BitComplement,
        TrafficPattern::Hotspot,
        TrafficPattern::Shuffle,
        TrafficPattern::Transpose,
        TrafficPattern::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrafficPattern::Uniform => "uniform",
            TrafficPattern::BitComplement => "bitcomp",
            TrafficPattern::Shuffle => "shuffle",
            TrafficPattern::Transpose => "transpose",
            TrafficPattern::Hotspot => "hotspot",
            TrafficPattern::Asymmetric => "asymmetric",
        }
    }

    /// Destination depends on the source only.
    pub fn is_permutation(self) -> bool {
        matches!(
            self,
            TrafficPattern::BitComplement | TrafficPattern::Shuffle | TrafficPattern::Transpose
        )
    }

    fn needs_power_of_two(self) -> bool {
        matches!(self, TrafficPattern::BitComplement | TrafficPattern::Shuffle)
    }
}

impl fmt::Display for TrafficPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown traffic pattern `{0}`")]
pub struct UnknownPattern(pub alloc::string::String);

impl FromStr for TrafficPattern {
    type Err = UnknownPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "uniform" => TrafficPattern::Uniform,
            "bitcomp" | "bitcomplement" => TrafficPattern::BitComplement,
            "shuffle" => TrafficPattern::Shuffle,
            "transpose" => TrafficPattern::Transpose,
            "hotspot" => TrafficPattern::Hotspot,
            "asymmetric" => TrafficPattern::Asymmetric,
            other => return Err(UnknownPattern(other.into())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PatternError {
    #[error("pattern {pattern} needs a power-of-two node count, got {nodes}")]
    NotPowerOfTwo { pattern: TrafficPattern, nodes: usize },
    #[error("hotspot node {0} outside the mesh")]
    HotspotOutOfRange(NodeId),
    #[error("hotspot fraction {0} outside [0, 1]")]
    HotspotFraction(f64),
    #[error("hotspot pattern needs at least one hotspot node")]
    NoHotspots,
}

/// Tunables for the stochastic patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternParams {
    /// Hotspot nodes; empty means the four center nodes.
    pub hotspot_nodes: Vec<NodeId>,
    /// Probability that a hotspot source picks a hotspot node.
    pub hotspot_fraction: f64,
}

impl Default for PatternParams {
    fn default() -> Self {
        Self {
            hotspot_nodes: Vec::new(),
            hotspot_fraction: 0.1,
        }
    }
}

/// The 2x2 block at the mesh center, e.g. (3,3),(4,3),(3,4),(4,4) for k=8.
pub fn center_nodes(k: usize) -> Vec<NodeId> {
    let m = Mesh::square(k);
    let lo = (k / 2).saturating_sub(1);
    let hi = k / 2;
    let mut v = Vec::new();
    for (x, y) in [(lo, lo), (hi, lo), (lo, hi), (hi, hi)] {
        let id = m.id(NodeCoord::new(x, y));
        if !v.contains(&id) {
            v.push(id);
        }
    }
    v
}

/// A destination generator bound to one mesh size.
#[derive(Debug, Clone, PartialEq)]
pub struct Traffic {
    pattern: TrafficPattern,
    k: usize,
    bits: u32,
    hotspots: Vec<NodeId>,
    hotspot_fraction: f64,
}

impl Traffic {
    pub fn new(pattern: TrafficPattern, k: usize, params: &PatternParams) -> Result<Self, PatternError> {
        let n = k * k;
        if pattern.needs_power_of_two() && !n.is_power_of_two() {
            return Err(PatternError::NotPowerOfTwo { pattern, nodes: n });
        }
        if !(0.0..=1.0).contains(&params.hotspot_fraction) {
            return Err(PatternError::HotspotFraction(params.hotspot_fraction));
        }
        let hotspots = if params.hotspot_nodes.is_empty() {
            center_nodes(k)
        } else {
            params.hotspot_nodes.clone()
        };
        if let Some(&bad) = hotspots.iter().find(|&&h| h >= n) {
            return Err(PatternError::HotspotOutOfRange(bad));
        }
        if pattern == TrafficPattern::Hotspot && hotspots.is_empty() {
            return Err(PatternError::NoHotspots);
        }
        Ok(Self {
            pattern,
            k,
            bits: n.trailing_zeros(),
            hotspots,
            hotspot_fraction: params.hotspot_fraction,
        })
    }

    pub fn pattern(&self) -> TrafficPattern {
        self.pattern
    }

    fn nodes(&self) -> usize {
        self.k * self.k
    }

    fn mask(&self) -> usize {
        self.nodes() - 1
    }

    fn transpose(&self, src: NodeId) -> NodeId {
        let (x, y) = (src % self.k, src / self.k);
        x * self.k + y
    }

    /// Uniform over all nodes except `src`.
    fn uniform_other<R: Rng + ?Sized>(&self, src: NodeId, rng: &mut R) -> NodeId {
        let n = self.nodes();
        let d = rng.gen_range(0..n - 1);
        if d >= src {
            d + 1
        } else {
            d
        }
    }

    fn in_west_half(&self, node: NodeId) -> bool {
        node % self.k < self.k / 2
    }

    /// Draws a destination for a packet generated at `src`.
    pub fn dest_for<R: Rng + ?Sized>(&self, src: NodeId, rng: &mut R) -> NodeId {
        match self.pattern {
            TrafficPattern::Uniform => self.uniform_other(src, rng),
            TrafficPattern::BitComplement => !src & self.mask(),
            TrafficPattern::Shuffle => {
                let b = self.bits;
                ((src << 1) | (src >> (b - 1))) & self.mask()
            }
            TrafficPattern::Transpose => self.transpose(src),
            TrafficPattern::Hotspot => {
                if rng.gen_bool(self.hotspot_fraction) {
                    self.hotspots[rng.gen_range(0..self.hotspots.len())]
                } else {
                    self.uniform_other(src, rng)
                }
            }
            TrafficPattern::Asymmetric => {
                // Uniform over the opposite half (split on x).
                let half = self.k / 2;
                let (lo, width) = if self.in_west_half(src) {
                    (half, self.k - half)
                } else {
                    (0, half)
                };
                let x = lo + rng.gen_range(0..width);
                let y = rng.gen_range(0..self.k);
                y * self.k + x
            }
        }
    }

    /// Exact destination distribution of `src`, as `(dest, probability)` pairs.
    pub fn dest_weights(&self, src: NodeId) -> Vec<(NodeId, f64)> {
        let n = self.nodes();
        let uniform = |scale: f64| -> Vec<(NodeId, f64)> {
            (0..n)
                .filter(|&d| d != src)
                .map(|d| (d, scale / (n - 1) as f64))
                .collect()
        };
        match self.pattern {
            TrafficPattern::Uniform => uniform(1.0),
            TrafficPattern::BitComplement | TrafficPattern::Shuffle | TrafficPattern::Transpose => {
                let mut rng = NoRng;
                alloc::vec![(self.dest_for(src, &mut rng), 1.0)]
            }
            TrafficPattern::Hotspot => {
                let mut w = uniform(1.0 - self.hotspot_fraction);
                let each = self.hotspot_fraction / self.hotspots.len() as f64;
                for &h in &self.hotspots {
                    w.push((h, each));
                }
                w
            }
            TrafficPattern::Asymmetric => {
                let west = self.in_west_half(src);
                let targets: Vec<NodeId> = (0..n).filter(|&d| self.in_west_half(d) != west).collect();
                let p = 1.0 / targets.len() as f64;
                targets.into_iter().map(|d| (d, p)).collect()
            }
        }
    }
}

/// Draws a destination with the default pattern parameters.
pub fn dest_for<R: Rng + ?Sized>(
    pattern: TrafficPattern,
    src: NodeId,
    k: usize,
    rng: &mut R,
) -> Result<NodeId, PatternError> {
    Ok(Traffic::new(pattern, k, &PatternParams::default())?.dest_for(src, rng))
}

// Permutation patterns never touch the generator.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("permutation pattern drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("permutation pattern drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("permutation pattern drew a random number")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
        unreachable!("permutation pattern drew a random number")
    }
}

/// Bernoulli packet generation for one node in one cycle.
pub fn maybe_inject<R: Rng + ?Sized>(probability: f64, rng: &mut R) -> bool {
    if probability <= 0.0 {
        false
    } else if probability >= 1.0 {
        true
    } else {
        rng.gen_bool(probability)
    }
}

/// Unbounded per-node FIFO of generated packets waiting to enter the router.
#[derive(Debug, Clone, Default)]
pub struct SourceQueue {
    packets: VecDeque<Packet>,
    // Flits of the front packet already handed to the router.
    sent: u16,
    flits: u64,
}

impl SourceQueue {
    pub fn push(&mut self, p: Packet) {
        self.flits += p.len as u64;
        self.packets.push_back(p);
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn packets(&self) -> usize {
        self.packets.len()
    }

    /// Flits not yet handed to the router.
    pub fn flits(&self) -> u64 {
        self.flits
    }

    pub fn front(&self) -> Option<&Packet> {
        self.packets.front()
    }

    /// Next flit to inject, if any.
    pub fn peek_flit(&self) -> Option<Flit> {
        self.packets.front().map(|p| p.flit(self.sent))
    }

    pub fn pop_flit(&mut self) -> Option<Flit> {
        let p = *self.packets.front()?;
        let f = p.flit(self.sent);
        self.sent += 1;
        self.flits -= 1;
        if self.sent == p.len {
            self.sent = 0;
            self.packets.pop_front();
        }
        Some(f)
    }
}

/// One line of a trace: a packet of `size_flits` generated at `cycle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub src: NodeId,
    pub dest: NodeId,
    pub size_flits: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: expected `cycle,src,dest,size_flits`")]
    Malformed { line: usize },
    #[error("line {line}: node {node} out of range for {nodes} nodes")]
    NodeOutOfRange { line: usize, node: usize, nodes: usize },
    #[error("line {line}: size must be positive")]
    ZeroSize { line: usize },
    #[error("line {line}: cycle {cycle} precedes previous event at cycle {previous}")]
    NonMonotone { line: usize, cycle: u64, previous: u64 },
}

/// Parses `cycle,src,dest,size_flits` lines. Blank lines and lines starting
/// with `#` are skipped. Line numbers in errors are 1-based.
pub fn load_trace(text: &str, nodes: usize) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    let mut previous = 0u64;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let mut fields = s.split(',').map(str::trim);
        let mut next = || fields.next().ok_or(TraceError::Malformed { line });
        let cycle: u64 = next()?.parse().map_err(|_| TraceError::Malformed { line })?;
        let src: usize = next()?.parse().map_err(|_| TraceError::Malformed { line })?;
        let dest: usize = next()?.parse().map_err(|_| TraceError::Malformed { line })?;
        let size: u16 = next()?.parse().map_err(|_| TraceError::Malformed { line })?;
        if fields.next().is_some() {
            return Err(TraceError::Malformed { line });
        }
        for node in [src, dest] {
            if node >= nodes {
                return Err(TraceError::NodeOutOfRange { line, node, nodes });
            }
        }
        if size == 0 {
            return Err(TraceError::ZeroSize { line });
        }
        if cycle < previous {
            return Err(TraceError::NonMonotone { line, cycle, previous });
        }
        previous = cycle;
        events.push(TraceEvent {
            cycle,
            src,
            dest,
            size_flits: size,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traffic(p: TrafficPattern) -> Traffic {
        Traffic::new(p, 8, &PatternParams::default()).unwrap()
    }

    #[test]
    fn permutation_examples() {
        let mut rng = NoRng;
        assert_eq!(traffic(TrafficPattern::BitComplement).dest_for(5, &mut rng), 58);
        assert_eq!(traffic(TrafficPattern::Shuffle).dest_for(40, &mut rng), 17);
        assert_eq!(traffic(TrafficPattern::Transpose).dest_for(10, &mut rng), 17);
        assert_eq!(traffic(TrafficPattern::Transpose).dest_for(27, &mut rng), 27);
    }

    #[test]
    fn bit_patterns_need_power_of_two() {
        let err = Traffic::new(TrafficPattern::BitComplement, 6, &PatternParams::default());
        assert!(matches!(err, Err(PatternError::NotPowerOfTwo { nodes: 36, .. })));
        assert!(Traffic::new(TrafficPattern::Transpose, 6, &PatternParams::default()).is_ok());
        assert!(Traffic::new(TrafficPattern::Uniform, 3, &PatternParams::default()).is_ok());
    }

    #[test]
    fn hotspot_center_for_k8() {
        let mut c = center_nodes(8);
        c.sort();
        assert_eq!(c, [27, 28, 35, 36]);
    }

    #[test]
    fn stochastic_patterns_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [
            TrafficPattern::Uniform,
            TrafficPattern::Hotspot,
            TrafficPattern::Asymmetric,
        ] {
            let t = traffic(p);
            for src in 0..64 {
                for _ in 0..50 {
                    let d = t.dest_for(src, &mut rng);
                    assert!(d < 64);
                    if p != TrafficPattern::Hotspot {
                        assert_ne!(d, src);
                    }
                    if p == TrafficPattern::Asymmetric {
                        assert_ne!(src % 8 < 4, d % 8 < 4);
                    }
                }
            }
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for p in TrafficPattern::ALL {
            let t = traffic(p);
            for src in 0..64 {
                let s: f64 = t.dest_weights(src).iter().map(|w| w.1).sum();
                assert!((s - 1.0).abs() < 1e-12, "{p} src {src}: {s}");
            }
        }
    }

    #[test]
    fn uniform_histogram_is_flat() {
        // 63 bins, 126 000 draws from node 0: each bin ~ Binomial(n, 1/63).
        let t = traffic(TrafficPattern::Uniform);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 126_000usize;
        let mut hist = [0usize; 64];
        for _ in 0..draws {
            hist[t.dest_for(0, &mut rng)] += 1;
        }
        assert_eq!(hist[0], 0);
        let p = 1.0 / 63.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (d, &h) in hist.iter().enumerate().skip(1) {
            assert!((h as f64 - mean).abs() < 4.0 * sigma, "bin {d}: {h} vs {mean}");
        }
    }

    #[test]
    fn bernoulli_rate_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50_000;
        let hits = (0..n).filter(|_| maybe_inject(0.3, &mut rng)).count() as f64;
        let sigma = (n as f64 * 0.3 * 0.7).sqrt();
        assert!((hits - 0.3 * n as f64).abs() < 3.0 * sigma, "{hits}");
        assert!(!(0..1000).any(|_| maybe_inject(0.0, &mut rng)));
        assert!((0..1000).all(|_| maybe_inject(1.0, &mut rng)));
    }

    #[test]
    fn source_queue_hands_out_flits_in_order() {
        let mut q = SourceQueue::default();
        let p = Packet {
            id: 4,
            src: 1,
            dest: 2,
            len: 3,
            gen_cycle: 10,
            measured: true,
        };
        q.push(p);
        q.push(Packet { id: 5, len: 1, ..p });
        assert_eq!(q.flits(), 4);
        let seqs: Vec<_> = core::iter::from_fn(|| q.pop_flit())
            .map(|f| (f.packet, f.seq))
            .collect();
        assert_eq!(seqs, [(4, 0), (4, 1), (4, 2), (5, 0)]);
        assert!(q.is_empty());
        assert_eq!(q.flits(), 0);
    }

    #[test]
    fn trace_examples() {
        let ev = load_trace("0,0,63,1", 64).unwrap();
        assert_eq!(
            ev,
            [TraceEvent {
                cycle: 0,
                src: 0,
                dest: 63,
                size_flits: 1
            }]
        );
        let ev = load_trace("# comment\n\n5,9,9,4\n", 64).unwrap();
        assert_eq!(ev[0].src, ev[0].dest);
        assert_eq!(ev[0].size_flits, 4);
        assert_eq!(
            load_trace("3,0,64,1", 64),
            Err(TraceError::NodeOutOfRange {
                line: 1,
                node: 64,
                nodes: 64
            })
        );
    }

    #[test]
    fn trace_errors_carry_line_numbers() {
        assert_eq!(
            load_trace("0,0,1,1\n1,2,x,1", 64),
            Err(TraceError::Malformed { line: 2 })
        );
        assert_eq!(load_trace("0,0,1", 64), Err(TraceError::Malformed { line: 1 }));
        assert_eq!(load_trace("0,0,1,1,9", 64), Err(TraceError::Malformed { line: 1 }));
        assert_eq!(load_trace("#\n0,0,1,0", 64), Err(TraceError::ZeroSize { line: 2 }));
        assert_eq!(
            load_trace("5,0,1,1\n4,0,1,1", 64),
            Err(TraceError::NonMonotone {
                line: 2,
                cycle: 4,
                previous: 5
            })
        );
        assert!(load_trace("4,0,1,1\n4,1,0,1", 64).is_ok());
    }
}
