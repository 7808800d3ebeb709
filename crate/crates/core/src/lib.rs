//! Cycle-accurate model of a `k x k` mesh network-on-chip with three router
//! microarchitectures: a canonical four-stage virtual-channel router
//! (`base1`), the same router with lookahead routing and speculative switch
//! allocation (`base2`), and a ring router built from five exchanges joined
//! by two directed rings (`ring`).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel sweeps live in the `ringnoc` crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod arbiter;
pub mod conventional;
mod error;
mod fabric;
pub mod flit;
pub mod ring;
pub mod sim;
pub mod stats;
pub mod topology;
pub mod traffic;

pub use error::{ConfigError, SimError};
pub use fabric::{Event, EventKind, Location};
pub use flit::{Flit, Packet, PacketId};
pub use sim::{run_simulation, sweep, InjectionGate, RouterDesign, SimConfig, SimPhase, Simulation};
pub use stats::{find_saturation, zero_load_latency_oracle, StallReport, StatsReport, SweepPoint, SweepResult};
pub use topology::{dor_output, lookahead_next_output, Mesh, NodeCoord, NodeId, PortDirection};
pub use traffic::{load_trace, PatternParams, TraceEvent, TrafficPattern};
