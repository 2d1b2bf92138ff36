//! A deliberately small backend in the style of ExaMPI: primitive datatypes
//! are enum-like code values, `INT8` and `CHAR` share one value, and the
//! predefined objects only come into existence the first time any constant
//! is resolved. Calls outside its declared surface fail with
//! `SubsetViolation`.

use std::collections::HashMap;

use super::engine::{constant_names, constant_object, ObjKind, ObjRef};
use super::model::{HandleCodec, ModelBackend};
use super::{BResult, BackendError, BackendHandle, Func, FuncSet, HandleWidth};
use crate::typemap::NamedType;

/// Pointer-like base for object handles; primitive datatype codes stay below 16.
const OBJECT_BASE: u64 = 0x0000_7f00_0000_0000;
const LOW_MASK: u64 = (1 << 40) - 1;

/// Code value of a primitive datatype.
pub fn datatype_code(t: NamedType) -> u64 {
    match t {
        NamedType::Byte => 1,
        NamedType::Char | NamedType::Int8 => 2,
        NamedType::Int => 3,
        NamedType::Int64 => 4,
        NamedType::Double => 5,
    }
}

fn datatype_of_code(code: u64) -> Option<NamedType> {
    Some(match code {
        1 => NamedType::Byte,
        2 => NamedType::Char,
        3 => NamedType::Int,
        4 => NamedType::Int64,
        5 => NamedType::Double,
        _ => return None,
    })
}

fn kind_bits(kind: ObjKind) -> u64 {
    match kind {
        ObjKind::Comm => 1,
        ObjKind::Group => 2,
        ObjKind::Datatype => 3,
        ObjKind::Op => 4,
        ObjKind::Request => 5,
    }
}

pub const SURFACE: FuncSet = FuncSet::of(&[
    Func::ResolveConstant,
    Func::CommSplit,
    Func::CommDup,
    Func::CommCreate,
    Func::CommRank,
    Func::CommSize,
    Func::CommFree,
    Func::CommGroup,
    Func::GroupTranslateRanks,
    Func::GroupIncl,
    Func::GroupFree,
    Func::Send,
    Func::Recv,
    Func::Isend,
    Func::Irecv,
    Func::Test,
    Func::Wait,
    Func::Iprobe,
    Func::Barrier,
    Func::Alltoall,
    Func::Allreduce,
    Func::Bcast,
    Func::TypeContiguous,
    Func::TypeVector,
    Func::TypeCommit,
    Func::TypeFree,
    Func::TypeGetEnvelope,
    Func::TypeGetContents,
    Func::OpCreate,
    Func::OpFree,
]);

#[derive(Default)]
pub(crate) struct LazyConstCodec {
    materialized: bool,
    records: Vec<Option<ObjRef>>,
    reverse: HashMap<ObjRef, u64>,
}

impl LazyConstCodec {
    /// Allocate records for every predefined non-datatype object.
    fn materialize(&mut self) -> BResult<()> {
        if self.materialized {
            return Ok(());
        }
        self.materialized = true;
        for name in constant_names() {
            let obj = constant_object(name).expect("constant table is closed");
            if obj.kind != ObjKind::Datatype {
                self.register(obj)?;
            }
        }
        Ok(())
    }
}

impl HandleCodec for LazyConstCodec {
    fn name(&self) -> &'static str {
        "lazy_const"
    }

    fn surface(&self) -> FuncSet {
        SURFACE
    }

    fn register(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        let index = self.records.len() as u64;
        if index >= 1 << 36 {
            return Err(BackendError::Exhausted);
        }
        self.records.push(Some(obj));
        let value = OBJECT_BASE | (index << 4) | kind_bits(obj.kind);
        self.reverse.insert(obj, value);
        Ok(BackendHandle::w64(value))
    }

    fn handle_of(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        if obj.kind == ObjKind::Datatype && (obj.id as usize) < NamedType::ALL.len() {
            return Ok(BackendHandle::w64(datatype_code(NamedType::ALL[obj.id as usize])));
        }
        match self.reverse.get(&obj) {
            Some(&v) => Ok(BackendHandle::w64(v)),
            None => self.register(obj),
        }
    }

    fn decode(&self, h: BackendHandle, kind: ObjKind) -> BResult<u32> {
        if h.width() != HandleWidth::W64 {
            return Err(BackendError::ForeignHandle(h));
        }
        let v = h.value();
        if v < 16 {
            return match (kind, datatype_of_code(v)) {
                (ObjKind::Datatype, Some(t)) => Ok(t.index() as u32),
                _ => Err(BackendError::BadHandle(h, kind.label())),
            };
        }
        if v & !LOW_MASK == OBJECT_BASE && v & 0xf == kind_bits(kind) {
            if let Some(Some(obj)) = self.records.get(((v & LOW_MASK) >> 4) as usize) {
                if obj.kind == kind {
                    return Ok(obj.id);
                }
            }
        }
        Err(BackendError::BadHandle(h, kind.label()))
    }

    fn release(&mut self, h: BackendHandle) {
        let v = h.value();
        if v >= 16 {
            if let Some(obj) = self.records.get_mut(((v & LOW_MASK) >> 4) as usize).and_then(Option::take) {
                self.reverse.remove(&obj);
            }
        }
    }

    fn lazy_constants(&self) -> bool {
        true
    }

    fn constant(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        self.materialize()?;
        self.handle_of(obj)
    }
}

/// Backend with enum-coded primitive datatypes and lazily bound constants.
pub struct LazyConstBackend(ModelBackend<LazyConstCodec>);

impl LazyConstBackend {
    pub fn new() -> Self {
        LazyConstBackend(ModelBackend::with_codec(LazyConstCodec::default()))
    }
}

impl Default for LazyConstBackend {
    fn default() -> Self {
        Self::new()
    }
}

super::delegate_backend!(LazyConstBackend);
