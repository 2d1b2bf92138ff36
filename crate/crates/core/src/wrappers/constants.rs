//! Named constants. Each name owns a reserved vid for the whole run; the
//! backend handle behind it is looked up per session.

use crate::backends::BackendHandle;
use crate::reduce::BuiltinOp;
use crate::typemap::NamedType;
use crate::vid::{Body, CommDesc, CommRecipe, ObjectKind, OpDesc, TypeDesc, TypeRecipe, VirtualId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstState {
    Unresolved,
    Bound(BackendHandle),
}

#[derive(Clone, Debug)]
pub struct ConstEntry {
    pub name: &'static str,
    pub vid: VirtualId,
    pub state: ConstState,
}

/// Reserved slot of every known constant name.
pub fn reserved_slot(name: &str) -> Option<(ObjectKind, u32)> {
    match name {
        "COMM_WORLD" => Some((ObjectKind::Comm, 0)),
        "COMM_SELF" => Some((ObjectKind::Comm, 1)),
        _ => NamedType::from_name(name)
            .map(|t| (ObjectKind::Datatype, t.index() as u32))
            .or_else(|| BuiltinOp::from_name(name).map(|o| (ObjectKind::Op, o.index() as u32))),
    }
}

pub fn constant_names() -> impl Iterator<Item = &'static str> {
    ["COMM_WORLD", "COMM_SELF"]
        .into_iter()
        .chain(NamedType::ALL.iter().map(|t| t.name()))
        .chain(BuiltinOp::ALL.iter().map(|o| o.name()))
}

/// Descriptor body of a predefined object as seen from `rank`.
pub(crate) fn constant_body(name: &str, world_members: &[u32], rank: u32) -> Body {
    match name {
        "COMM_WORLD" => Body::Comm(CommDesc {
            ggid: 0,
            ggid_seq: 0,
            members: world_members.to_vec(),
            recipe: CommRecipe::World,
        }),
        "COMM_SELF" => Body::Comm(CommDesc { ggid: 0, ggid_seq: 0, members: vec![rank], recipe: CommRecipe::SelfComm }),
        _ => match NamedType::from_name(name) {
            Some(t) => Body::Datatype(TypeDesc { recipe: TypeRecipe::Named(t), committed: true }),
            None => Body::Op(OpDesc { fn_name: name.to_owned(), commutative: true }),
        },
    }
}

/// The table of lower-half constant values for the current session.
#[derive(Clone, Debug)]
pub struct ConstantMap {
    entries: Vec<ConstEntry>,
}

impl Default for ConstantMap {
    fn default() -> Self {
        Self::standard()
    }
}

impl ConstantMap {
    /// Every known name, all unresolved.
    pub fn standard() -> Self {
        let entries = constant_names()
            .map(|name| {
                let (kind, slot) = reserved_slot(name).expect("closed name set");
                ConstEntry {
                    name,
                    vid: VirtualId::new(kind, slot).expect("reserved slot"),
                    state: ConstState::Unresolved,
                }
            })
            .collect();
        ConstantMap { entries }
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConstEntry> {
        self.entries.iter()
    }

    pub fn vid_of(&self, name: &str) -> Option<VirtualId> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.vid)
    }

    pub fn name_of(&self, vid: VirtualId) -> Option<&'static str> {
        self.entries.iter().find(|e| e.vid == vid).map(|e| e.name)
    }

    pub fn state(&self, name: &str) -> Option<ConstState> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.state)
    }

    pub(crate) fn bind(&mut self, name: &str, h: BackendHandle) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.name == name) {
            e.state = ConstState::Bound(h);
        }
    }

    pub fn unresolved(&self) -> usize {
        self.entries.iter().filter(|e| e.state == ConstState::Unresolved).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int8_and_char_have_distinct_slots() {
        let m = ConstantMap::standard();
        assert_ne!(m.vid_of("INT8"), m.vid_of("CHAR"));
        assert_eq!(m.vid_of("COMM_WORLD").unwrap().slot(), 0);
        assert_eq!(m.name_of(m.vid_of("SUM").unwrap()), Some("SUM"));
    }
}
