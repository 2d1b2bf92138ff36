//! Drained messages waiting to be delivered to the application.

use crate::backends::{Source, TagSel};
use crate::vid::VirtualId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShadowEntry {
    pub comm: VirtualId,
    /// Sender's rank within `comm`.
    pub source: u32,
    pub tag: i32,
    pub payload: Vec<u8>,
    pub arrival_index: u64,
}

/// Entries kept in arrival order; a lookup returns the oldest match.
#[derive(Clone, Debug, Default)]
pub struct ShadowQueue {
    entries: Vec<ShadowEntry>,
}

impl ShadowQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: ShadowEntry) {
        let at = self.entries.partition_point(|x| x.arrival_index <= e.arrival_index);
        self.entries.insert(at, e);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Remove and return the lowest-arrival entry matching the selectors.
    #[inline]
    pub fn take(&mut self, comm: VirtualId, source: Source, tag: TagSel) -> Option<ShadowEntry> {
        if self.entries.is_empty() {
            return None;
        }
        let i = self
            .entries
            .iter()
            .position(|e| e.comm == comm && source.matches(e.source) && tag.matches(e.tag))?;
        Some(self.entries.remove(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ShadowEntry> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vid::ObjectKind;

    fn entry(comm: VirtualId, source: u32, tag: i32, idx: u64) -> ShadowEntry {
        ShadowEntry { comm, source, tag, payload: vec![idx as u8], arrival_index: idx }
    }

    #[test]
    fn single_message_delivered_once() {
        let c = VirtualId::new(ObjectKind::Comm, 0).unwrap();
        let mut q = ShadowQueue::new();
        q.push(entry(c, 2, 7, 0));
        assert_eq!(q.take(c, Source::Any, TagSel::Any).unwrap().source, 2);
        assert!(q.take(c, Source::Any, TagSel::Any).is_none());
    }

    #[test]
    fn delivery_follows_arrival_index() {
        let c = VirtualId::new(ObjectKind::Comm, 0).unwrap();
        let mut q = ShadowQueue::new();
        q.push(entry(c, 1, 0, 9));
        q.push(entry(c, 1, 0, 5));
        assert_eq!(q.take(c, Source::Rank(1), TagSel::Tag(0)).unwrap().arrival_index, 5);
        assert_eq!(q.take(c, Source::Rank(1), TagSel::Tag(0)).unwrap().arrival_index, 9);
    }

    #[test]
    fn non_matching_tag_falls_through() {
        let c = VirtualId::new(ObjectKind::Comm, 0).unwrap();
        let mut q = ShadowQueue::new();
        q.push(entry(c, 2, 7, 0));
        assert!(q.take(c, Source::Any, TagSel::Tag(3)).is_none());
        assert_eq!(q.len(), 1);
    }
}
