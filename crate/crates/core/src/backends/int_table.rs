//! 32-bit integer handles in the style of the MPICH family.
//!
//! Bit layout:
//!
//! ```text
//!  31 30 | 29    26 | 25          12 | 11         0
//!  class |   kind   |  level-1 index | level-2 index
//! ```
//!
//! `class` is `01` for builtin objects and `11` for objects living in the
//! two-level handle table. Builtin datatypes additionally carry their byte
//! size in bits 15..8. Builtin values are compile-time constants, identical
//! in every session.

use std::collections::HashMap;

use super::engine::{ObjKind, ObjRef, SELF_ID, WORLD_ID};
use super::model::{HandleCodec, ModelBackend};
use super::{BResult, BackendError, BackendHandle, FuncSet, HandleWidth};
use crate::reduce::BuiltinOp;
use crate::typemap::NamedType;

pub const CLASS_SHIFT: u32 = 30;
pub const CLASS_BUILTIN: u32 = 0b01;
pub const CLASS_INDIRECT: u32 = 0b11;
pub const KIND_SHIFT: u32 = 26;
pub const KIND_MASK: u32 = 0xf;
pub const L1_SHIFT: u32 = 12;
pub const L1_MASK: u32 = (1 << 14) - 1;
pub const L2_MASK: u32 = (1 << 12) - 1;
const BLOCK: usize = 1 << 12;

fn code(kind: ObjKind) -> u32 {
    match kind {
        ObjKind::Comm => 0x1,
        ObjKind::Group => 0x2,
        ObjKind::Datatype => 0x3,
        ObjKind::Op => 0x6,
        ObjKind::Request => 0xb,
    }
}

fn builtin(kind: ObjKind, low: u32) -> u32 {
    (CLASS_BUILTIN << CLASS_SHIFT) | (code(kind) << KIND_SHIFT) | low
}

/// The fixed handle value of a predefined object, if `obj` is one.
fn builtin_handle(obj: ObjRef) -> Option<u32> {
    match obj.kind {
        ObjKind::Comm if obj.id == WORLD_ID || obj.id == SELF_ID => Some(builtin(obj.kind, obj.id)),
        ObjKind::Datatype if (obj.id as usize) < NamedType::ALL.len() => {
            let t = NamedType::ALL[obj.id as usize];
            Some(builtin(obj.kind, ((t.size() as u32) << 8) | obj.id))
        }
        ObjKind::Op if (obj.id as usize) < BuiltinOp::ALL.len() => Some(builtin(obj.kind, obj.id)),
        _ => None,
    }
}

#[derive(Default)]
pub(crate) struct IntTableCodec {
    directory: Vec<Box<[Option<ObjRef>]>>,
    next: u32,
    reverse: HashMap<ObjRef, u32>,
}

impl HandleCodec for IntTableCodec {
    fn name(&self) -> &'static str {
        "int_table"
    }

    fn surface(&self) -> FuncSet {
        FuncSet::all()
    }

    fn register(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        let index = self.next;
        let (l1, l2) = (index as usize / BLOCK, index as usize % BLOCK);
        if l1 > L1_MASK as usize {
            return Err(BackendError::Exhausted);
        }
        self.next += 1;
        if self.directory.len() == l1 {
            self.directory.push(vec![None; BLOCK].into_boxed_slice());
        }
        self.directory[l1][l2] = Some(obj);
        let raw = (CLASS_INDIRECT << CLASS_SHIFT) | (code(obj.kind) << KIND_SHIFT) | ((l1 as u32) << L1_SHIFT) | l2 as u32;
        self.reverse.insert(obj, raw);
        Ok(BackendHandle::w32(raw))
    }

    fn handle_of(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        if let Some(raw) = builtin_handle(obj) {
            return Ok(BackendHandle::w32(raw));
        }
        match self.reverse.get(&obj) {
            Some(&raw) => Ok(BackendHandle::w32(raw)),
            None => self.register(obj),
        }
    }

    fn decode(&self, h: BackendHandle, kind: ObjKind) -> BResult<u32> {
        if h.width() != HandleWidth::W32 {
            return Err(BackendError::ForeignHandle(h));
        }
        let raw = h.value() as u32;
        if (raw >> KIND_SHIFT) & KIND_MASK != code(kind) {
            return Err(BackendError::BadHandle(h, kind.label()));
        }
        match raw >> CLASS_SHIFT {
            CLASS_BUILTIN => {
                let id = match kind {
                    ObjKind::Datatype => raw & 0xff,
                    _ => raw & L2_MASK,
                };
                let obj = ObjRef::new(kind, id);
                if builtin_handle(obj) == Some(raw) {
                    Ok(id)
                } else {
                    Err(BackendError::BadHandle(h, kind.label()))
                }
            }
            CLASS_INDIRECT => {
                let l1 = ((raw >> L1_SHIFT) & L1_MASK) as usize;
                let l2 = (raw & L2_MASK) as usize;
                match self.directory.get(l1).and_then(|b| b[l2]) {
                    Some(obj) if obj.kind == kind => Ok(obj.id),
                    _ => Err(BackendError::BadHandle(h, kind.label())),
                }
            }
            _ => Err(BackendError::BadHandle(h, kind.label())),
        }
    }

    fn release(&mut self, h: BackendHandle) {
        let raw = h.value() as u32;
        if raw >> CLASS_SHIFT == CLASS_INDIRECT {
            let l1 = ((raw >> L1_SHIFT) & L1_MASK) as usize;
            let l2 = (raw & L2_MASK) as usize;
            if let Some(obj) = self.directory.get_mut(l1).and_then(|b| b[l2].take()) {
                self.reverse.remove(&obj);
            }
        }
    }

    fn constant(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        builtin_handle(obj)
            .map(BackendHandle::w32)
            .ok_or(BackendError::InvalidArgument("not a predefined object".into()))
    }
}

/// Backend with MPICH-style 32-bit integer handles.
pub struct IntTableBackend(ModelBackend<IntTableCodec>);

impl IntTableBackend {
    pub fn new() -> Self {
        IntTableBackend(ModelBackend::with_codec(IntTableCodec::default()))
    }
}

impl Default for IntTableBackend {
    fn default() -> Self {
        Self::new()
    }
}

super::delegate_backend!(IntTableBackend);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_constant_matches_layout() {
        let h = builtin_handle(ObjRef::new(ObjKind::Comm, WORLD_ID)).unwrap();
        assert_eq!(h, 0x4400_0000);
        let int = builtin_handle(ObjRef::new(ObjKind::Datatype, NamedType::Int.index() as u32)).unwrap();
        assert_eq!(int, 0x4c00_0403);
    }

    #[test]
    fn indirect_handles_spill_into_second_block() {
        let mut c = IntTableCodec::default();
        let mut last = 0;
        for i in 0..=BLOCK as u32 {
            last = c.register(ObjRef::new(ObjKind::Group, i + 10)).unwrap().value() as u32;
        }
        assert_eq!((last >> L1_SHIFT) & L1_MASK, 1);
        assert_eq!(last & L2_MASK, 0);
        assert_eq!(c.decode(BackendHandle::w32(last), ObjKind::Group).unwrap(), BLOCK as u32 + 10);
        assert!(c.decode(BackendHandle::w32(last), ObjKind::Comm).is_err());
    }
}
