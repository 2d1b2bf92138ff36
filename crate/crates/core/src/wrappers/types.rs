//! Datatype and reduction-operation wrappers.

use crate::backends::{Func, TypeEnvelope};
use crate::error::{Error, Result};
use crate::vid::{Body, ObjectKind, OpDesc, TypeDesc, TypeRecipe, VidError, VirtualId};

use super::Runtime;

/// Decoded datatype contents with children as vids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contents {
    pub integers: Vec<i32>,
    pub datatypes: Vec<VirtualId>,
}

impl Runtime {
    fn type_desc(&self, dtype: VirtualId) -> Result<&TypeDesc> {
        self.table.get(dtype)?.as_type().ok_or(Error::Vid(VidError::InvalidId(dtype)))
    }

    pub fn type_contiguous(&mut self, count: i32, child: VirtualId) -> Result<VirtualId> {
        self.tick(Func::TypeContiguous);
        let c = self.real(child, ObjectKind::Datatype)?;
        let h = self.backend.type_contiguous(count, c)?;
        let recipe = TypeRecipe::Contiguous { count, child };
        Ok(self.table.alloc(Some(h), Body::Datatype(TypeDesc { recipe, committed: false }))?)
    }

    pub fn type_vector(&mut self, count: i32, blocklen: i32, stride: i32, child: VirtualId) -> Result<VirtualId> {
        self.tick(Func::TypeVector);
        let c = self.real(child, ObjectKind::Datatype)?;
        let h = self.backend.type_vector(count, blocklen, stride, c)?;
        let recipe = TypeRecipe::Vector { count, blocklen, stride, child };
        Ok(self.table.alloc(Some(h), Body::Datatype(TypeDesc { recipe, committed: false }))?)
    }

    pub fn type_commit(&mut self, dtype: VirtualId) -> Result<()> {
        self.tick(Func::TypeCommit);
        let h = self.real(dtype, ObjectKind::Datatype)?;
        if self.type_desc(dtype)?.committed {
            return Err(Error::CommitTwice(dtype));
        }
        self.backend.type_commit(h)?;
        if let Body::Datatype(t) = &mut self.table.get_mut(dtype)?.body {
            t.committed = true;
        }
        Ok(())
    }

    pub fn type_free(&mut self, dtype: VirtualId) -> Result<()> {
        self.tick(Func::TypeFree);
        let h = self.real(dtype, ObjectKind::Datatype)?;
        if dtype.is_predefined() {
            return Err(VidError::FreeingPredefined(dtype).into());
        }
        self.ensure_unreferenced(dtype)?;
        self.backend.type_free(h)?;
        self.table.free(dtype)?;
        Ok(())
    }

    pub fn type_get_envelope(&mut self, dtype: VirtualId) -> Result<TypeEnvelope> {
        self.tick(Func::TypeGetEnvelope);
        let h = self.real(dtype, ObjectKind::Datatype)?;
        Ok(self.backend.type_get_envelope(h)?)
    }

    /// Child handles are mapped back to vids. Where several vids share one
    /// handle (aliased constants), the recorded child wins.
    pub fn type_get_contents(&mut self, dtype: VirtualId) -> Result<Contents> {
        self.tick(Func::TypeGetContents);
        let h = self.real(dtype, ObjectKind::Datatype)?;
        let raw = self.backend.type_get_contents(h)?;
        let recorded = self.type_desc(dtype)?.recipe.child();
        let mut datatypes = Vec::with_capacity(raw.datatypes.len());
        for ch in raw.datatypes {
            let v = match recorded {
                Some(r) if self.table.get(r).ok().and_then(|d| d.real) == Some(ch) => r,
                _ => self.table.real_to_vid(ObjectKind::Datatype, ch)?,
            };
            datatypes.push(v);
        }
        Ok(Contents { integers: raw.integers, datatypes })
    }

    /// `fn_name` must be registered with the reduction registry.
    pub fn op_create(&mut self, fn_name: &str, commutative: bool) -> Result<VirtualId> {
        self.tick(Func::OpCreate);
        if !self.reductions.contains(fn_name) {
            return Err(Error::UnknownFunction(fn_name.to_owned()));
        }
        let h = self.backend.op_create(fn_name, commutative)?;
        Ok(self.table.alloc(Some(h), Body::Op(OpDesc { fn_name: fn_name.to_owned(), commutative }))?)
    }

    pub fn op_free(&mut self, op: VirtualId) -> Result<()> {
        self.tick(Func::OpFree);
        let h = self.real(op, ObjectKind::Op)?;
        if op.is_predefined() {
            return Err(VidError::FreeingPredefined(op).into());
        }
        self.backend.op_free(h)?;
        self.table.free(op)?;
        Ok(())
    }
}
