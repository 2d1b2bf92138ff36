use super::{ObjectKind, VirtualId};
use crate::backends::{BackendHandle, Status};
use crate::typemap::NamedType;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CommRecipe {
    World,
    SelfComm,
    Split { parent: VirtualId, color: i32, key: i32 },
    Dup { parent: VirtualId },
    Create { parent: VirtualId, group: VirtualId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommDesc {
    pub ggid: u32,
    pub ggid_seq: u32,
    /// World ranks in communicator-rank order.
    pub members: Vec<u32>,
    pub recipe: CommRecipe,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupRecipe {
    FromComm { comm: VirtualId },
    Incl { parent: VirtualId, ranks: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupDesc {
    pub members: Vec<u32>,
    pub recipe: GroupRecipe,
}

/// One node of a datatype construction tree; children are referenced by vid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeRecipe {
    Named(NamedType),
    Contiguous { count: i32, child: VirtualId },
    Vector { count: i32, blocklen: i32, stride: i32, child: VirtualId },
}

impl TypeRecipe {
    pub fn child(&self) -> Option<VirtualId> {
        match self {
            TypeRecipe::Named(_) => None,
            TypeRecipe::Contiguous { child, .. } | TypeRecipe::Vector { child, .. } => Some(*child),
        }
    }

    /// Integer arguments in envelope/contents order.
    pub fn integers(&self) -> Vec<i32> {
        match *self {
            TypeRecipe::Named(_) => vec![],
            TypeRecipe::Contiguous { count, .. } => vec![count],
            TypeRecipe::Vector { count, blocklen, stride, .. } => vec![count, blocklen, stride],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDesc {
    pub recipe: TypeRecipe,
    pub committed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpDesc {
    pub fn_name: String,
    pub commutative: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestKind {
    Isend,
    Irecv,
}

/// Completion of a request that the application has not collected yet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SavedCompletion {
    pub status: Status,
    pub data: Option<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestDesc {
    pub kind: RequestKind,
    /// Destination for sends; source selector for receives (`None` = any).
    pub peer: Option<u32>,
    /// `None` = any tag (receives only).
    pub tag: Option<i32>,
    pub comm: VirtualId,
    pub count: u32,
    pub datatype: VirtualId,
    /// Application buffer token; opaque to the runtime.
    pub buffer: u64,
    pub completion: Option<SavedCompletion>,
    /// Set when the receive was posted again after a restart.
    pub reposted: bool,
}

impl RequestDesc {
    pub fn completed(&self) -> bool {
        self.completion.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    Comm(CommDesc),
    Group(GroupDesc),
    Request(RequestDesc),
    Op(OpDesc),
    Datatype(TypeDesc),
}

impl Body {
    pub fn kind(&self) -> ObjectKind {
        match self {
            Body::Comm(_) => ObjectKind::Comm,
            Body::Group(_) => ObjectKind::Group,
            Body::Request(_) => ObjectKind::Request,
            Body::Op(_) => ObjectKind::Op,
            Body::Datatype(_) => ObjectKind::Datatype,
        }
    }

    /// Every vid this body's recipe refers to.
    pub fn references(&self) -> Vec<VirtualId> {
        match self {
            Body::Comm(c) => match c.recipe {
                CommRecipe::World | CommRecipe::SelfComm => vec![],
                CommRecipe::Split { parent, .. } | CommRecipe::Dup { parent } => vec![parent],
                CommRecipe::Create { parent, group } => vec![parent, group],
            },
            Body::Group(g) => match &g.recipe {
                GroupRecipe::FromComm { comm } => vec![*comm],
                GroupRecipe::Incl { parent, .. } => vec![*parent],
            },
            Body::Request(r) => vec![r.comm, r.datatype],
            Body::Op(_) => vec![],
            Body::Datatype(t) => t.recipe.child().into_iter().collect(),
        }
    }
}

/// A table entry: the session-local backend handle plus everything needed to
/// rebuild the object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Descriptor {
    /// Never serialized. `None` until bound (lazy constants, restored images).
    pub real: Option<BackendHandle>,
    pub creation_seq: u64,
    pub body: Body,
}

impl Descriptor {
    pub fn kind(&self) -> ObjectKind {
        self.body.kind()
    }

    /// Equality of everything except the backend handle.
    pub fn same_record(&self, other: &Descriptor) -> bool {
        self.creation_seq == other.creation_seq && self.body == other.body
    }

    pub fn as_comm(&self) -> Option<&CommDesc> {
        match &self.body {
            Body::Comm(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_group(&self) -> Option<&GroupDesc> {
        match &self.body {
            Body::Group(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_type(&self) -> Option<&TypeDesc> {
        match &self.body {
            Body::Datatype(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_op(&self) -> Option<&OpDesc> {
        match &self.body {
            Body::Op(o) => Some(o),
            _ => None,
        }
    }

    pub fn as_request(&self) -> Option<&RequestDesc> {
        match &self.body {
            Body::Request(r) => Some(r),
            _ => None,
        }
    }
}
