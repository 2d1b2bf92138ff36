//! Machine-word handles in the style of Open MPI, where a handle is a pointer
//! to a library-private object record and named constants are obtained by
//! calling resolver functions at run time.
//!
//! A handle is `nonce << 32 | index << 4 | kind`. The nonce is drawn at
//! random per session, so every handle (constants included) differs from one
//! session to the next, and handles minted by another session are rejected.

use std::collections::HashMap;

use super::engine::{ObjKind, ObjRef};
use super::model::{HandleCodec, ModelBackend};
use super::{BResult, BackendError, BackendHandle, FuncSet, HandleWidth};

fn code(kind: ObjKind) -> u64 {
    match kind {
        ObjKind::Comm => 1,
        ObjKind::Group => 2,
        ObjKind::Datatype => 3,
        ObjKind::Op => 4,
        ObjKind::Request => 5,
    }
}

pub(crate) struct WordHandleCodec {
    nonce: u32,
    records: Vec<Option<ObjRef>>,
    reverse: HashMap<ObjRef, u64>,
}

impl WordHandleCodec {
    fn new() -> Self {
        let mut nonce: u32 = rand::random();
        while nonce == 0 {
            nonce = rand::random();
        }
        WordHandleCodec { nonce, records: Vec::new(), reverse: HashMap::new() }
    }

    fn split(&self, h: BackendHandle) -> BResult<(usize, u64)> {
        if h.width() != HandleWidth::W64 || (h.value() >> 32) as u32 != self.nonce {
            return Err(BackendError::ForeignHandle(h));
        }
        let low = h.value() & 0xffff_ffff;
        Ok(((low >> 4) as usize, low & 0xf))
    }
}

impl HandleCodec for WordHandleCodec {
    fn name(&self) -> &'static str {
        "word_handle"
    }

    fn surface(&self) -> FuncSet {
        FuncSet::all()
    }

    fn register(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        let index = self.records.len() as u64;
        if index >= 1 << 28 {
            return Err(BackendError::Exhausted);
        }
        self.records.push(Some(obj));
        let value = ((self.nonce as u64) << 32) | (index << 4) | code(obj.kind);
        self.reverse.insert(obj, value);
        Ok(BackendHandle::w64(value))
    }

    fn handle_of(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        match self.reverse.get(&obj) {
            Some(&v) => Ok(BackendHandle::w64(v)),
            None => self.register(obj),
        }
    }

    fn decode(&self, h: BackendHandle, kind: ObjKind) -> BResult<u32> {
        let (index, k) = self.split(h)?;
        match self.records.get(index).copied().flatten() {
            Some(obj) if obj.kind == kind && k == code(kind) => Ok(obj.id),
            _ => Err(BackendError::BadHandle(h, kind.label())),
        }
    }

    fn release(&mut self, h: BackendHandle) {
        if let Ok((index, _)) = self.split(h) {
            if let Some(obj) = self.records.get_mut(index).and_then(Option::take) {
                self.reverse.remove(&obj);
            }
        }
    }

    /// The resolver "function" for a constant: the first call in a session
    /// allocates the object record, later calls return the same handle.
    fn constant(&mut self, obj: ObjRef) -> BResult<BackendHandle> {
        self.handle_of(obj)
    }
}

/// Backend with nonce-mixed 64-bit handles and per-session constants.
pub struct WordHandleBackend(ModelBackend<WordHandleCodec>);

impl WordHandleBackend {
    pub fn new() -> Self {
        WordHandleBackend(ModelBackend::with_codec(WordHandleCodec::new()))
    }
}

impl Default for WordHandleBackend {
    fn default() -> Self {
        Self::new()
    }
}

super::delegate_backend!(WordHandleBackend);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn foreign_session_handles_are_rejected() {
        let mut a = WordHandleCodec::new();
        let mut b = WordHandleCodec::new();
        while b.nonce == a.nonce {
            b = WordHandleCodec::new();
        }
        let h = a.register(ObjRef::new(ObjKind::Comm, 7)).unwrap();
        assert_eq!(a.decode(h, ObjKind::Comm).unwrap(), 7);
        assert!(matches!(b.decode(h, ObjKind::Comm), Err(BackendError::ForeignHandle(_))));
        assert!(matches!(a.decode(BackendHandle::w32(1), ObjKind::Comm), Err(BackendError::ForeignHandle(_))));
    }

    #[test]
    fn constant_is_stable_within_a_session() {
        let mut a = WordHandleCodec::new();
        let obj = ObjRef::new(ObjKind::Comm, 0);
        assert_eq!(a.constant(obj).unwrap(), a.constant(obj).unwrap());
    }
}
