//! Per-communicator, per-peer message counters.

use crate::vid::{ObjectKind, VirtualId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PeerCount {
    pub sent: u64,
    pub received: u64,
}

/// Counters indexed by communicator slot, then by peer comm rank. Counters of
/// freed communicators are folded into per-world-rank retired totals so that
/// world-level sums stay monotone.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CounterTable {
    by_slot: Vec<Option<Vec<PeerCount>>>,
    retired: Vec<PeerCount>,
}

impl CounterTable {
    pub fn new(world_size: u32) -> Self {
        CounterTable { by_slot: Vec::new(), retired: vec![PeerCount::default(); world_size as usize] }
    }

    pub fn open(&mut self, comm: VirtualId, size: usize) {
        let slot = comm.slot() as usize;
        if self.by_slot.len() <= slot {
            self.by_slot.resize(slot + 1, None);
        }
        self.by_slot[slot] = Some(vec![PeerCount::default(); size]);
    }

    #[inline]
    fn peer(&mut self, comm: VirtualId, peer: u32) -> Option<&mut PeerCount> {
        self.by_slot.get_mut(comm.slot() as usize)?.as_mut()?.get_mut(peer as usize)
    }

    #[inline]
    pub fn count_sent(&mut self, comm: VirtualId, peer: u32) {
        if let Some(p) = self.peer(comm, peer) {
            p.sent += 1;
        }
    }

    #[inline]
    pub fn count_received(&mut self, comm: VirtualId, peer: u32) {
        if let Some(p) = self.peer(comm, peer) {
            p.received += 1;
        }
    }

    pub fn get(&self, comm: VirtualId) -> Option<&[PeerCount]> {
        self.by_slot.get(comm.slot() as usize)?.as_deref()
    }

    /// Fold a freed communicator's counters into the retired totals.
    pub fn retire(&mut self, comm: VirtualId, members: &[u32]) {
        if let Some(Some(counts)) = self.by_slot.get_mut(comm.slot() as usize).map(Option::take) {
            for (c, &w) in counts.iter().zip(members) {
                self.retired[w as usize].sent += c.sent;
                self.retired[w as usize].received += c.received;
            }
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (VirtualId, &[PeerCount])> {
        self.by_slot.iter().enumerate().filter_map(|(slot, c)| {
            c.as_deref().map(|c| (VirtualId::new(ObjectKind::Comm, slot as u32).expect("slot in range"), c))
        })
    }

    pub fn retired(&self) -> &[PeerCount] {
        &self.retired
    }

    /// Totals per world rank across live and retired communicators.
    pub fn world_totals<'a>(&'a self, members: impl Fn(VirtualId) -> Option<&'a [u32]>) -> Vec<PeerCount> {
        let mut out = self.retired.clone();
        for (v, counts) in self.entries() {
            if let Some(m) = members(v) {
                for (c, &w) in counts.iter().zip(m) {
                    out[w as usize].sent += c.sent;
                    out[w as usize].received += c.received;
                }
            }
        }
        out
    }

    pub fn restore(entries: Vec<(VirtualId, Vec<PeerCount>)>, retired: Vec<PeerCount>) -> Self {
        let mut t = CounterTable { by_slot: Vec::new(), retired };
        for (v, counts) in entries {
            t.open(v, 0);
            t.by_slot[v.slot() as usize] = Some(counts);
        }
        t
    }

    /// Componentwise `self >= other`: retired totals, and every live
    /// communicator that both tables hold.
    pub fn dominates(&self, other: &CounterTable) -> bool {
        let ge = |a: &PeerCount, b: &PeerCount| a.sent >= b.sent && a.received >= b.received;
        self.retired.len() == other.retired.len()
            && self.retired.iter().zip(&other.retired).all(|(a, b)| ge(a, b))
            && other.entries().all(|(v, counts)| match self.get(v) {
                Some(m) => m.len() == counts.len() && m.iter().zip(counts).all(|(a, b)| ge(a, b)),
                None => true,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retire_folds_into_world_ranks() {
        let mut t = CounterTable::new(4);
        let c = VirtualId::new(ObjectKind::Comm, 16).unwrap();
        t.open(c, 2);
        t.count_sent(c, 1);
        t.count_sent(c, 1);
        t.count_received(c, 0);
        t.retire(c, &[3, 1]);
        assert!(t.get(c).is_none());
        assert_eq!(t.retired()[1], PeerCount { sent: 2, received: 0 });
        assert_eq!(t.retired()[3], PeerCount { sent: 0, received: 1 });
    }
}
