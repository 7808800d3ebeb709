//! Input-buffered virtual-channel routers with a 5x5 crossbar.
//!
//! `base1` runs the canonical four-stage pipeline (route computation, VC
//! allocation, switch allocation, switch traversal). `base2` receives its
//! output port from the upstream router (lookahead routing) and performs VC
//! and switch allocation in the same cycle, speculatively, so an
//! uncontended head flit spends two cycles in the router.

mod fabric;

pub use fabric::ConventionalFabric;

use alloc::vec::Vec;

use crate::arbiter::RoundRobin;
use crate::topology::{dor_output, NodeCoord, PortDirection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    RouteCompute,
    VcAlloc,
    SwitchAlloc,
    /// VC and switch allocation in one cycle, switch grant voided if VC
    /// allocation fails.
    SpeculativeAlloc,
    SwitchTraversal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineModel {
    FourStage,
    LookaheadSpeculative,
}

impl PipelineModel {
    pub fn stages(self) -> &'static [Stage] {
        match self {
            PipelineModel::FourStage => &[
                Stage::RouteCompute,
                Stage::VcAlloc,
                Stage::SwitchAlloc,
                Stage::SwitchTraversal,
            ],
            PipelineModel::LookaheadSpeculative => &[Stage::SpeculativeAlloc, Stage::SwitchTraversal],
        }
    }

    /// Cycles from head-flit arrival to switch traversal when uncontended.
    pub fn depth(self) -> u64 {
        self.stages().len() as u64
    }

    pub fn lookahead(self) -> bool {
        matches!(self, PipelineModel::LookaheadSpeculative)
    }
}

/// Per-VC state of an input unit. A VC holds at most one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VcState {
    Idle,
    /// Head buffered, waiting for route computation.
    Routing,
    /// Output port known, waiting for a downstream VC.
    RouteComputed,
    /// Downstream VC held, head not yet sent.
    VcAllocated,
    /// Head sent, body flits still to follow.
    Active,
}

/// Route computation: the DOR output port.
pub fn rc_stage(dest: NodeCoord, router: NodeCoord) -> PortDirection {
    dor_output(router, dest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VcRequest {
    pub input: usize,
    pub vc: usize,
    pub output: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VcGrant {
    pub input: usize,
    pub vc: usize,
    pub output: usize,
    pub out_vc: usize,
}

/// Separable input-first VC allocator with round-robin arbiters.
///
/// Each requesting input VC first picks one free downstream VC on its
/// output port; each downstream VC then grants one of the input VCs that
/// picked it. Losers retry next cycle.
#[derive(Debug, Clone)]
pub struct VcAllocator {
    vcs: usize,
    input_rr: Vec<RoundRobin>,
    output_rr: Vec<RoundRobin>,
    picks: Vec<(usize, usize)>,
}

impl VcAllocator {
    pub fn new(ports: usize, vcs: usize) -> Self {
        Self {
            vcs,
            input_rr: alloc::vec![RoundRobin::new(vcs); ports * vcs],
            output_rr: alloc::vec![RoundRobin::new(ports * vcs); ports * vcs],
            picks: Vec::new(),
        }
    }

    pub fn allocate(
        &mut self,
        requests: &[VcRequest],
        mut free: impl FnMut(usize, usize) -> bool,
        grants: &mut Vec<VcGrant>,
    ) {
        let v = self.vcs;
        self.picks.clear();
        for (i, r) in requests.iter().enumerate() {
            if let Some(ov) = self.input_rr[r.input * v + r.vc].peek(|ov| free(r.output, ov)) {
                self.picks.push((r.output * v + ov, i));
            }
        }
        // Downstream VCs picked by at least one requester, in index order.
        self.picks.sort_unstable();
        let mut k = 0;
        while k < self.picks.len() {
            let ovc = self.picks[k].0;
            let end = k + self.picks[k..].iter().take_while(|p| p.0 == ovc).count();
            let group = &self.picks[k..end];
            let winner = self.output_rr[ovc].arbitrate(|who| {
                group
                    .iter()
                    .any(|&(_, i)| requests[i].input * v + requests[i].vc == who)
            });
            if let Some(who) = winner {
                let r = requests[group
                    .iter()
                    .find(|&&(_, i)| requests[i].input * v + requests[i].vc == who)
                    .unwrap()
                    .1];
                self.input_rr[r.input * v + r.vc].advance_past(ovc % v);
                grants.push(VcGrant {
                    input: r.input,
                    vc: r.vc,
                    output: r.output,
                    out_vc: ovc % v,
                });
            }
            k = end;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchRequest {
    pub input: usize,
    pub vc: usize,
    pub output: usize,
    pub speculative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchGrant {
    pub input: usize,
    pub vc: usize,
    pub output: usize,
    pub speculative: bool,
}

/// Separable input-first switch allocator. Non-speculative requests have
/// priority over speculative ones at both stages. Grants always form a
/// partial permutation of inputs onto outputs.
#[derive(Debug, Clone)]
pub struct SwitchAllocator {
    vcs: usize,
    input_rr: Vec<RoundRobin>,
    output_rr: Vec<RoundRobin>,
    chosen: Vec<Option<usize>>,
    // Request index per (input, vc, speculative); usize::MAX when absent.
    index: Vec<usize>,
    masks: Vec<[u64; 2]>,
}

impl SwitchAllocator {
    pub fn new(ports: usize, vcs: usize) -> Self {
        assert!(vcs <= 64);
        Self {
            vcs,
            input_rr: alloc::vec![RoundRobin::new(vcs); ports],
            output_rr: alloc::vec![RoundRobin::new(ports); ports],
            chosen: alloc::vec![None; ports],
            index: alloc::vec![usize::MAX; ports * vcs * 2],
            masks: alloc::vec![[0; 2]; ports],
        }
    }

    pub fn allocate(&mut self, requests: &[SwitchRequest], grants: &mut Vec<SwitchGrant>) {
        let ports = self.input_rr.len();
        let v = self.vcs;
        for (i, r) in requests.iter().enumerate() {
            let s = r.speculative as usize;
            self.masks[r.input][s] |= 1 << r.vc;
            self.index[(r.input * v + r.vc) * 2 + s] = i;
        }
        // Input stage: one VC per input, non-speculative first.
        for input in 0..ports {
            let [plain, spec] = self.masks[input];
            let rr = &self.input_rr[input];
            self.chosen[input] = rr
                .peek(|vc| plain & (1 << vc) != 0)
                .map(|vc| (vc, 0))
                .or_else(|| rr.peek(|vc| spec & (1 << vc) != 0).map(|vc| (vc, 1)))
                .map(|(vc, s)| self.index[(input * v + vc) * 2 + s]);
        }
        // Output stage: one input per output.
        for output in 0..ports {
            let chosen = &self.chosen;
            let wants = |input: usize, spec: bool| {
                chosen[input].is_some_and(|i| requests[i].output == output && requests[i].speculative == spec)
            };
            let rr = &mut self.output_rr[output];
            let winner = rr
                .peek(|input| wants(input, false))
                .or_else(|| rr.peek(|input| wants(input, true)));
            if let Some(input) = winner {
                rr.advance_past(input);
                let r = requests[self.chosen[input].expect("winner had a request")];
                self.input_rr[input].advance_past(r.vc);
                grants.push(SwitchGrant {
                    input,
                    vc: r.vc,
                    output,
                    speculative: r.speculative,
                });
            }
        }
        for r in requests {
            self.masks[r.input] = [0; 2];
            self.index[(r.input * v + r.vc) * 2 + r.speculative as usize] = usize::MAX;
        }
    }
}

/// One VC-allocation round over `requests` with the given downstream
/// availability.
pub fn va_stage(
    alloc: &mut VcAllocator,
    requests: &[VcRequest],
    free: impl FnMut(usize, usize) -> bool,
) -> Vec<VcGrant> {
    let mut g = Vec::new();
    alloc.allocate(requests, free, &mut g);
    g
}

/// One switch-allocation round. Requests without downstream credit must be
/// filtered out by the caller.
pub fn sa_stage(alloc: &mut SwitchAllocator, requests: &[SwitchRequest]) -> Vec<SwitchGrant> {
    let mut g = Vec::new();
    alloc.allocate(requests, &mut g);
    g
}

/// Speculative allocation for the lookahead router: VC and switch
/// allocation run together and a speculative switch grant only stands if
/// the same VC also won VC allocation. Returns `(vc_grants, switch_grants)`
/// with voided speculative grants removed.
pub fn speculative_alloc(
    va: &mut VcAllocator,
    sa: &mut SwitchAllocator,
    vc_requests: &[VcRequest],
    free: impl FnMut(usize, usize) -> bool,
    switch_requests: &[SwitchRequest],
) -> (Vec<VcGrant>, Vec<SwitchGrant>) {
    let vg = va_stage(va, vc_requests, free);
    let mut sg = sa_stage(sa, switch_requests);
    sg.retain(|g| !g.speculative || vg.iter().any(|v| v.input == g.input && v.vc == g.vc));
    (vg, sg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rc_examples() {
        let c = NodeCoord::new;
        assert_eq!(rc_stage(c(3, 4), c(1, 1)), PortDirection::East);
        assert_eq!(rc_stage(c(3, 7), c(3, 2)), PortDirection::North);
        assert_eq!(rc_stage(c(3, 1), c(3, 2)), PortDirection::South);
        assert_eq!(rc_stage(c(6, 6), c(6, 6)), PortDirection::Local);
    }

    #[test]
    fn pipeline_depths() {
        assert_eq!(PipelineModel::FourStage.depth(), 4);
        assert_eq!(PipelineModel::LookaheadSpeculative.depth(), 2);
    }

    #[test]
    fn va_single_requester_granted() {
        let mut va = VcAllocator::new(5, 8);
        let g = va_stage(
            &mut va,
            &[VcRequest {
                input: 0,
                vc: 3,
                output: 2,
            }],
            |_, _| true,
        );
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].output, 2);
    }

    #[test]
    fn va_contended_single_free_vc_alternates() {
        let mut va = VcAllocator::new(5, 8);
        let reqs = [
            VcRequest {
                input: 0,
                vc: 0,
                output: 2,
            },
            VcRequest {
                input: 1,
                vc: 0,
                output: 2,
            },
        ];
        let mut winners = vec![];
        for _ in 0..6 {
            let g = va_stage(&mut va, &reqs, |o, ov| o == 2 && ov == 5);
            assert_eq!(g.len(), 1);
            assert_eq!(g[0].out_vc, 5);
            winners.push(g[0].input);
        }
        assert_eq!(winners, [0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn va_no_free_vc() {
        let mut va = VcAllocator::new(5, 8);
        let g = va_stage(
            &mut va,
            &[VcRequest {
                input: 0,
                vc: 0,
                output: 1,
            }],
            |_, _| false,
        );
        assert!(g.is_empty());
    }

    #[test]
    fn sa_examples() {
        let mut sa = SwitchAllocator::new(5, 8);
        let one = [SwitchRequest {
            input: 3,
            vc: 1,
            output: 0,
            speculative: false,
        }];
        assert_eq!(sa_stage(&mut sa, &one).len(), 1);

        let two = [
            SwitchRequest {
                input: 0,
                vc: 0,
                output: 4,
                speculative: false,
            },
            SwitchRequest {
                input: 1,
                vc: 0,
                output: 4,
                speculative: false,
            },
        ];
        let winners: Vec<_> = (0..4).map(|_| sa_stage(&mut sa, &two)[0].input).collect();
        assert_eq!(winners, [0, 1, 0, 1]);
    }

    #[test]
    fn nonspeculative_beats_speculative() {
        let mut sa = SwitchAllocator::new(5, 8);
        let reqs = [
            SwitchRequest {
                input: 0,
                vc: 0,
                output: 2,
                speculative: true,
            },
            SwitchRequest {
                input: 1,
                vc: 0,
                output: 2,
                speculative: false,
            },
        ];
        for _ in 0..3 {
            let g = sa_stage(&mut sa, &reqs);
            assert_eq!(g.len(), 1);
            assert_eq!(g[0].input, 1);
        }
    }

    #[test]
    fn failed_vc_allocation_voids_speculative_grant() {
        let mut va = VcAllocator::new(5, 2);
        let mut sa = SwitchAllocator::new(5, 2);
        let vreq = [VcRequest {
            input: 0,
            vc: 0,
            output: 1,
        }];
        let sreq = [SwitchRequest {
            input: 0,
            vc: 0,
            output: 1,
            speculative: true,
        }];
        let (vg, sg) = speculative_alloc(&mut va, &mut sa, &vreq, |_, _| false, &sreq);
        assert!(vg.is_empty());
        assert!(sg.is_empty());
        let (vg, sg) = speculative_alloc(&mut va, &mut sa, &vreq, |_, _| true, &sreq);
        assert_eq!((vg.len(), sg.len()), (1, 1));
    }

    proptest::proptest! {
        #[test]
        fn switch_grants_are_partial_permutation(
            reqs in proptest::collection::vec((0usize..5, 0usize..4, 0usize..5, proptest::bool::ANY), 0..30)
        ) {
            let mut sa = SwitchAllocator::new(5, 4);
            let reqs: Vec<_> = reqs.into_iter()
                .map(|(input, vc, output, speculative)| SwitchRequest { input, vc, output, speculative })
                .collect();
            for _ in 0..3 {
                let g = sa_stage(&mut sa, &reqs);
                let mut ins = [false; 5];
                let mut outs = [false; 5];
                for x in &g {
                    proptest::prop_assert!(!ins[x.input] && !outs[x.output]);
                    ins[x.input] = true;
                    outs[x.output] = true;
                    proptest::prop_assert!(reqs.iter().any(|r| r.input == x.input && r.vc == x.vc && r.output == x.output));
                }
                // Some grant whenever there is any request.
                proptest::prop_assert_eq!(g.is_empty(), reqs.is_empty());
            }
        }

        #[test]
        fn vc_grants_are_exclusive(
            reqs in proptest::collection::vec((0usize..5, 0usize..4, 0usize..5), 0..30),
            freemask in 0u32..(1 << 20),
        ) {
            let mut seen = [[false; 4]; 5];
            let mut dedup = Vec::new();
            for (input, vc, output) in reqs {
                if !seen[input][vc] {
                    seen[input][vc] = true;
                    dedup.push(VcRequest { input, vc, output });
                }
            }
            let mut va = VcAllocator::new(5, 4);
            let free = |o: usize, ov: usize| freemask & (1 << (o * 4 + ov)) != 0;
            let g = va_stage(&mut va, &dedup, free);
            let mut taken = [[false; 4]; 5];
            for x in &g {
                proptest::prop_assert!(free(x.output, x.out_vc));
                proptest::prop_assert!(!taken[x.output][x.out_vc]);
                taken[x.output][x.out_vc] = true;
            }
        }
    }
}
