//! Round-robin arbitration shared by every allocator in the crate.

/// Rotating-priority arbiter over `n` requesters.
///
/// `next` holds the requester with highest priority in the coming round;
/// after a grant it moves to the requester just past the winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRobin {
    next: usize,
    n: usize,
}

impl RoundRobin {
    pub fn new(n: usize) -> Self {
        assert!(n > 0);
        Self { next: 0, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn priority(&self) -> usize {
        self.next
    }

    /// Winner for this round without updating priority.
    #[inline]
    pub fn peek(&self, mut requesting: impl FnMut(usize) -> bool) -> Option<usize> {
        let mut i = self.next;
        for _ in 0..self.n {
            if requesting(i) {
                return Some(i);
            }
            i += 1;
            if i == self.n {
                i = 0;
            }
        }
        None
    }

    #[inline]
    pub fn advance_past(&mut self, granted: usize) {
        debug_assert!(granted < self.n);
        self.next = if granted + 1 == self.n { 0 } else { granted + 1 };
    }

    /// Picks a winner and moves priority past it. No request leaves state unchanged.
    #[inline]
    pub fn arbitrate(&mut self, requesting: impl FnMut(usize) -> bool) -> Option<usize> {
        let g = self.peek(requesting)?;
        self.advance_past(g);
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alternates_under_full_load() {
        let mut rr = RoundRobin::new(2);
        let grants: alloc::vec::Vec<_> = (0..6).map(|_| rr.arbitrate(|_| true).unwrap()).collect();
        assert_eq!(grants, [0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn empty_request_keeps_state() {
        let mut rr = RoundRobin::new(3);
        rr.advance_past(1);
        assert_eq!(rr.arbitrate(|_| false), None);
        assert_eq!(rr.priority(), 2);
    }

    proptest! {
        #[test]
        fn every_persistent_requester_served_within_n_rounds(
            n in 1usize..9,
            mask in 1u32..512,
            start in 0usize..9,
        ) {
            let mask = mask & ((1 << n) - 1);
            prop_assume!(mask != 0);
            let mut rr = RoundRobin::new(n);
            rr.advance_past(start % n);
            let mut last = alloc::vec![None; n];
            for round in 0..(4 * n) {
                let g = rr.arbitrate(|i| mask & (1 << i) != 0).unwrap();
                prop_assert!(mask & (1 << g) != 0);
                last[g] = Some(round);
            }
            let active = mask.count_ones() as usize;
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    prop_assert!(last[i].unwrap() + active >= 4 * n);
                }
            }
        }
    }
}
