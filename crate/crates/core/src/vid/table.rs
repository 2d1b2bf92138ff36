use std::cell::Cell;

use super::{Body, Descriptor, ObjectKind, VidError, VirtualId, MAX_SLOT, RESERVED_SLOTS};
use crate::backends::BackendHandle;

pub const BLOCK_SIZE: usize = 1024;
const BLOCK_BITS: u32 = 10;
const OFFSET_MASK: u32 = (1 << BLOCK_BITS) - 1;

type Block = Box<[Option<Descriptor>]>;

fn empty_block() -> Block {
    (0..BLOCK_SIZE).map(|_| None).collect()
}

/// Allocation state of one kind, as saved in an image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KindState {
    pub next_free: u32,
    pub free_list: Vec<u32>,
}

impl Default for KindState {
    fn default() -> Self {
        KindState { next_free: RESERVED_SLOTS, free_list: Vec::new() }
    }
}

#[derive(Default)]
struct KindTable {
    directory: Vec<Block>,
    state: KindState,
    live: usize,
}

impl KindTable {
    fn slot_mut(&mut self, slot: u32) -> &mut Option<Descriptor> {
        let block = (slot >> BLOCK_BITS) as usize;
        while self.directory.len() <= block {
            self.directory.push(empty_block());
        }
        &mut self.directory[block][(slot & OFFSET_MASK) as usize]
    }
}

/// Per-kind two-level descriptor storage.
///
/// Lookups touch the directory once and one block once; the probe counter
/// records both touches.
pub struct DescriptorTable {
    kinds: [KindTable; 5],
    next_seq: u64,
    probes: Cell<u64>,
}

impl Default for DescriptorTable {
    fn default() -> Self {
        Self::new()
    }
}

impl DescriptorTable {
    pub fn new() -> Self {
        DescriptorTable { kinds: Default::default(), next_seq: 0, probes: Cell::new(0) }
    }

    fn probe(&self) {
        self.probes.set(self.probes.get() + 1);
    }

    /// Table accesses made by lookups since creation or the last reset.
    pub fn probes(&self) -> u64 {
        self.probes.get()
    }

    pub fn reset_probes(&self) {
        self.probes.set(0);
    }

    /// Creation sequence number the next allocation will receive.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    fn stamp(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    fn lookup(&self, v: VirtualId) -> Result<&Descriptor, VidError> {
        let kind = v.kind().ok_or(VidError::InvalidId(v))?;
        let slot = v.slot();
        self.probe();
        let block = self.kinds[kind.index()].directory.get((slot >> BLOCK_BITS) as usize).ok_or(VidError::InvalidId(v))?;
        self.probe();
        block[(slot & OFFSET_MASK) as usize].as_ref().ok_or(VidError::InvalidId(v))
    }

    pub fn get(&self, v: VirtualId) -> Result<&Descriptor, VidError> {
        self.lookup(v)
    }

    pub fn get_mut(&mut self, v: VirtualId) -> Result<&mut Descriptor, VidError> {
        let kind = v.kind().ok_or(VidError::InvalidId(v))?;
        let slot = v.slot();
        let block = self.kinds[kind.index()]
            .directory
            .get_mut((slot >> BLOCK_BITS) as usize)
            .ok_or(VidError::InvalidId(v))?;
        block[(slot & OFFSET_MASK) as usize].as_mut().ok_or(VidError::InvalidId(v))
    }

    pub fn contains(&self, v: VirtualId) -> bool {
        let saved = self.probes.get();
        let ok = self.lookup(v).is_ok();
        self.probes.set(saved);
        ok
    }

    /// The backend handle bound to `v`.
    #[inline]
    pub fn vid_to_real(&self, v: VirtualId) -> Result<BackendHandle, VidError> {
        self.lookup(v)?.real.ok_or(VidError::Unbound(v))
    }

    pub fn set_real(&mut self, v: VirtualId, real: Option<BackendHandle>) -> Result<(), VidError> {
        self.get_mut(v)?.real = real;
        Ok(())
    }

    /// Linear scan for the descriptor of `kind` holding `real`.
    pub fn real_to_vid(&self, kind: ObjectKind, real: BackendHandle) -> Result<VirtualId, VidError> {
        self.iter(kind)
            .find(|(_, d)| d.real == Some(real))
            .map(|(v, _)| v)
            .ok_or(VidError::NotFound(kind))
    }

    /// Allocate a slot of `body`'s kind, reusing the most recently freed slot
    /// first.
    pub fn alloc(&mut self, real: Option<BackendHandle>, body: Body) -> Result<VirtualId, VidError> {
        let kind = body.kind();
        let t = &mut self.kinds[kind.index()];
        let slot = match t.state.free_list.pop() {
            Some(s) => s,
            None => {
                if t.state.next_free > MAX_SLOT {
                    return Err(VidError::TableFull(kind));
                }
                t.state.next_free += 1;
                t.state.next_free - 1
            }
        };
        let creation_seq = self.stamp();
        let t = &mut self.kinds[kind.index()];
        *t.slot_mut(slot) = Some(Descriptor { real, creation_seq, body });
        t.live += 1;
        VirtualId::new(kind, slot)
    }

    /// Bind one of the reserved constant slots.
    pub fn bind_reserved(&mut self, slot: u32, real: Option<BackendHandle>, body: Body) -> Result<VirtualId, VidError> {
        let kind = body.kind();
        let v = VirtualId::new(kind, slot)?;
        if slot >= RESERVED_SLOTS {
            return Err(VidError::InvalidId(v));
        }
        let creation_seq = self.next_seq;
        let t = &mut self.kinds[kind.index()];
        let entry = t.slot_mut(slot);
        if entry.is_some() {
            return Err(VidError::SlotTaken { kind, slot });
        }
        *entry = Some(Descriptor { real, creation_seq, body });
        t.live += 1;
        self.next_seq += 1;
        Ok(v)
    }

    pub fn free(&mut self, v: VirtualId) -> Result<Descriptor, VidError> {
        let kind = v.kind().ok_or(VidError::InvalidId(v))?;
        if !self.contains(v) {
            return Err(VidError::InvalidId(v));
        }
        if v.slot() < RESERVED_SLOTS {
            return Err(VidError::FreeingPredefined(v));
        }
        let t = &mut self.kinds[kind.index()];
        let d = t.slot_mut(v.slot()).take().expect("checked above");
        t.live -= 1;
        t.state.free_list.push(v.slot());
        Ok(d)
    }

    pub fn live(&self, kind: ObjectKind) -> usize {
        self.kinds[kind.index()].live
    }

    pub fn len(&self) -> usize {
        self.kinds.iter().map(|t| t.live).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Live descriptors of `kind` in slot order.
    pub fn iter(&self, kind: ObjectKind) -> impl Iterator<Item = (VirtualId, &Descriptor)> + '_ {
        self.kinds[kind.index()].directory.iter().enumerate().flat_map(move |(b, block)| {
            block.iter().enumerate().filter_map(move |(o, d)| {
                d.as_ref().map(|d| {
                    let slot = ((b as u32) << BLOCK_BITS) | o as u32;
                    (VirtualId::new(kind, slot).expect("slot in range"), d)
                })
            })
        })
    }

    /// Every live descriptor in raw vid order.
    pub fn iter_all(&self) -> impl Iterator<Item = (VirtualId, &Descriptor)> + '_ {
        ObjectKind::ALL.into_iter().flat_map(move |k| self.iter(k))
    }

    pub fn state(&self, kind: ObjectKind) -> &KindState {
        &self.kinds[kind.index()].state
    }

    /// Drop every backend handle (used before binding to a fresh backend).
    pub fn clear_handles(&mut self) {
        for t in &mut self.kinds {
            for block in &mut t.directory {
                for d in block.iter_mut().flatten() {
                    d.real = None;
                }
            }
        }
    }

    /// Rebuild a table from saved parts. Handles are left unbound.
    pub fn restore(
        entries: impl IntoIterator<Item = (VirtualId, Descriptor)>,
        states: Vec<(ObjectKind, KindState)>,
        next_seq: u64,
    ) -> Result<DescriptorTable, VidError> {
        let mut table = DescriptorTable::new();
        table.next_seq = next_seq;
        for (kind, state) in states {
            table.kinds[kind.index()].state = state;
        }
        for (v, mut d) in entries {
            let kind = v.kind().ok_or(VidError::InvalidId(v))?;
            if d.kind() != kind {
                return Err(VidError::KindMismatch(kind));
            }
            d.real = None;
            let t = &mut table.kinds[kind.index()];
            if v.slot() >= RESERVED_SLOTS
                && (v.slot() >= t.state.next_free || t.state.free_list.contains(&v.slot()))
            {
                return Err(VidError::InvalidId(v));
            }
            let entry = t.slot_mut(v.slot());
            if entry.is_some() {
                return Err(VidError::SlotTaken { kind, slot: v.slot() });
            }
            *entry = Some(d);
            t.live += 1;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typemap::NamedType;
    use crate::vid::{OpDesc, TypeDesc, TypeRecipe};

    fn dtype() -> Body {
        Body::Datatype(TypeDesc { recipe: TypeRecipe::Named(NamedType::Int), committed: true })
    }

    fn op(name: &str) -> Body {
        Body::Op(OpDesc { fn_name: name.into(), commutative: true })
    }

    #[test]
    fn free_then_alloc_recycles_slot() {
        let mut t = DescriptorTable::new();
        let a = t.alloc(Some(BackendHandle::w32(1)), dtype()).unwrap();
        t.free(a).unwrap();
        assert_eq!(t.vid_to_real(a), Err(VidError::InvalidId(a)));
        let b = t.alloc(Some(BackendHandle::w32(2)), dtype()).unwrap();
        assert_eq!(a, b);
        assert_eq!(t.vid_to_real(b).unwrap(), BackendHandle::w32(2));
    }

    #[test]
    fn slot_1040_lives_in_second_block() {
        let mut t = DescriptorTable::new();
        let mut last = VirtualId::NULL;
        for i in 0..1025 {
            last = t.alloc(Some(BackendHandle::w32(i)), dtype()).unwrap();
        }
        assert_eq!(last.slot(), 1040);
        assert_eq!(last.slot() >> BLOCK_BITS, 1);
        assert_eq!(t.kinds[ObjectKind::Datatype.index()].directory.len(), 2);
    }

    #[test]
    fn freeing_reserved_slot_is_refused() {
        let mut t = DescriptorTable::new();
        let v = t.bind_reserved(2, None, op("MAX")).unwrap();
        assert_eq!(t.free(v), Err(VidError::FreeingPredefined(v)));
        assert_eq!(t.vid_to_real(v), Err(VidError::Unbound(v)));
    }

    #[test]
    fn real_to_vid_scans_past_first_entry() {
        let mut t = DescriptorTable::new();
        let _a = t.alloc(Some(BackendHandle::w64(10)), op("x")).unwrap();
        let b = t.alloc(Some(BackendHandle::w64(11)), op("y")).unwrap();
        assert_eq!(t.real_to_vid(ObjectKind::Op, BackendHandle::w64(11)).unwrap(), b);
        assert_eq!(t.real_to_vid(ObjectKind::Op, BackendHandle::w64(12)), Err(VidError::NotFound(ObjectKind::Op)));
    }

    #[test]
    fn creation_seq_increases() {
        let mut t = DescriptorTable::new();
        let a = t.alloc(None, op("a")).unwrap();
        let b = t.alloc(None, dtype()).unwrap();
        assert!(t.get(a).unwrap().creation_seq < t.get(b).unwrap().creation_seq);
    }
}
