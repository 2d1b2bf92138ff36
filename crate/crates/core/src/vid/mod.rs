//! Virtual ids: the only handle form the application ever sees.
//!
//! A [`VirtualId`] packs a 3-bit kind tag into bits 31..29 and a slot index
//! into bits 28..0. Raw value 0 is the NULL id. Slots 0..15 of each kind hold
//! predefined constants; objects the application creates start at slot 16.

mod descriptor;
mod ggid;
mod table;

use std::fmt;

pub use descriptor::{
    Body, CommDesc, CommRecipe, Descriptor, GroupDesc, GroupRecipe, OpDesc, RequestDesc, RequestKind, SavedCompletion,
    TypeDesc, TypeRecipe,
};
pub use ggid::{fnv1a32, ggid_compute, FNV_OFFSET_BASIS, FNV_PRIME};
pub use table::{DescriptorTable, KindState, BLOCK_SIZE};

pub const TAG_SHIFT: u32 = 29;
pub const SLOT_MASK: u32 = (1 << TAG_SHIFT) - 1;
pub const MAX_SLOT: u32 = SLOT_MASK;
/// Slots `0..RESERVED_SLOTS` of every kind belong to predefined constants.
pub const RESERVED_SLOTS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectKind {
    Comm = 1,
    Group = 2,
    Request = 3,
    Op = 4,
    Datatype = 5,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 5] =
        [ObjectKind::Comm, ObjectKind::Group, ObjectKind::Request, ObjectKind::Op, ObjectKind::Datatype];

    pub fn tag(self) -> u32 {
        self as u32
    }

    pub fn from_tag(tag: u32) -> Option<ObjectKind> {
        ObjectKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Position in dense per-kind arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn label(self) -> &'static str {
        match self {
            ObjectKind::Comm => "communicator",
            ObjectKind::Group => "group",
            ObjectKind::Request => "request",
            ObjectKind::Op => "operation",
            ObjectKind::Datatype => "datatype",
        }
    }
}

/// A 32-bit virtual id.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct VirtualId(u32);

impl VirtualId {
    pub const NULL: VirtualId = VirtualId(0);

    pub fn new(kind: ObjectKind, slot: u32) -> Result<VirtualId, VidError> {
        if slot > MAX_SLOT {
            return Err(VidError::TableFull(kind));
        }
        Ok(VirtualId((kind.tag() << TAG_SHIFT) | slot))
    }

    pub const fn from_raw(raw: u32) -> VirtualId {
        VirtualId(raw)
    }

    pub const fn raw(self) -> u32 {
        self.0
    }

    /// The kind named by the tag, or `None` for NULL and the reserved tags.
    pub fn kind(self) -> Option<ObjectKind> {
        ObjectKind::from_tag(self.0 >> TAG_SHIFT)
    }

    pub const fn slot(self) -> u32 {
        self.0 & SLOT_MASK
    }

    pub fn is_null(self) -> bool {
        self.0 == 0
    }

    pub fn is_predefined(self) -> bool {
        self.kind().is_some() && self.slot() < RESERVED_SLOTS
    }
}

impl fmt::Debug for VirtualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Some(k) => write!(f, "vid({}:{})", k.label(), self.slot()),
            None => write!(f, "vid(raw {:#010x})", self.0),
        }
    }
}

impl fmt::Display for VirtualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VidError {
    #[error("invalid virtual id {0:?}")]
    InvalidId(VirtualId),
    #[error("{} table is full", .0.label())]
    TableFull(ObjectKind),
    #[error("no {} descriptor holds that handle", .0.label())]
    NotFound(ObjectKind),
    #[error("cannot free predefined id {0:?}")]
    FreeingPredefined(VirtualId),
    #[error("member list is empty")]
    EmptyMembers,
    #[error("descriptor kind does not match {} id", .0.label())]
    KindMismatch(ObjectKind),
    #[error("{0:?} is not bound to a backend handle yet")]
    Unbound(VirtualId),
    #[error("reserved slot {slot} of {} already bound", .kind.label())]
    SlotTaken { kind: ObjectKind, slot: u32 },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_app_comm_has_expected_raw() {
        assert_eq!(VirtualId::new(ObjectKind::Comm, 16).unwrap().raw(), (1 << 29) | 16);
    }

    #[test]
    fn null_and_reserved_tags_have_no_kind() {
        assert_eq!(VirtualId::NULL.kind(), None);
        assert_eq!(VirtualId::from_raw(6 << 29).kind(), None);
        assert_eq!(VirtualId::from_raw(7 << 29 | 5).kind(), None);
    }

    #[test]
    fn slot_past_limit_is_rejected() {
        assert_eq!(VirtualId::new(ObjectKind::Op, MAX_SLOT + 1), Err(VidError::TableFull(ObjectKind::Op)));
    }
}
