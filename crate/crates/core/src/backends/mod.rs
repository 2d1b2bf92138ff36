//! The lower half: a message-passing library interface and three model
//! implementations whose native handles follow very different disciplines.
//!
//! * `int_table`: 32-bit integer handles carrying kind bits and a two-level
//!   table index; named constants are fixed integers shared by every session.
//! * `word_handle`: 64-bit opaque references mixed with a per-session nonce;
//!   constants are produced by resolver functions and change across sessions.
//! * `lazy_const`: small enum codes for primitive datatypes, materialized on
//!   first use, with `INT8` and `CHAR` aliased to one value. It implements
//!   only the required subset plus a few declared extensions.
//!
//! All three share the in-process [`Transport`] and the same message-matching
//! engine, so program semantics are identical while handle values are not.

mod engine;
pub mod int_table;
pub mod lazy_const;
mod model;
mod recording;
mod subset;
mod transport;
mod word_handle;

use std::fmt;
use std::sync::Arc;

pub use int_table::IntTableBackend;
pub use lazy_const::LazyConstBackend;
pub use recording::{CallLog, RecordingBackend};
pub use subset::{drain_primitives_check, Category, CategoryResult, SubsetReport};
pub use transport::{Message, Transport};
pub use word_handle::WordHandleBackend;

use crate::reduce::ReductionRegistry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HandleWidth {
    W32,
    W64,
}

/// A backend-native object handle. Its interpretation is private to the
/// backend instance that produced it.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BackendHandle {
    width: HandleWidth,
    value: u64,
}

impl BackendHandle {
    pub const fn w32(value: u32) -> Self {
        BackendHandle { width: HandleWidth::W32, value: value as u64 }
    }

    pub const fn w64(value: u64) -> Self {
        BackendHandle { width: HandleWidth::W64, value }
    }

    pub fn width(self) -> HandleWidth {
        self.width
    }

    pub fn value(self) -> u64 {
        self.value
    }
}

impl fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.width {
            HandleWidth::W32 => write!(f, "h32:{:#010x}", self.value),
            HandleWidth::W64 => write!(f, "h64:{:#018x}", self.value),
        }
    }
}

/// Every entry point of the backend interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Func {
    ResolveConstant,
    CommSplit,
    CommDup,
    CommCreate,
    CommRank,
    CommSize,
    CommFree,
    CommGroup,
    GroupTranslateRanks,
    GroupIncl,
    GroupFree,
    Send,
    Recv,
    Isend,
    Irecv,
    Test,
    Wait,
    Iprobe,
    Barrier,
    Alltoall,
    Allreduce,
    Bcast,
    Allgather,
    TypeContiguous,
    TypeVector,
    TypeCommit,
    TypeFree,
    TypeGetEnvelope,
    TypeGetContents,
    OpCreate,
    OpFree,
}

impl Func {
    pub const ALL: [Func; 31] = [
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
        Func::Allgather,
        Func::TypeContiguous,
        Func::TypeVector,
        Func::TypeCommit,
        Func::TypeFree,
        Func::TypeGetEnvelope,
        Func::TypeGetContents,
        Func::OpCreate,
        Func::OpFree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::ResolveConstant => "resolve_constant",
            Func::CommSplit => "comm_split",
            Func::CommDup => "comm_dup",
            Func::CommCreate => "comm_create",
            Func::CommRank => "comm_rank",
            Func::CommSize => "comm_size",
            Func::CommFree => "comm_free",
            Func::CommGroup => "comm_group",
            Func::GroupTranslateRanks => "group_translate_ranks",
            Func::GroupIncl => "group_incl",
            Func::GroupFree => "group_free",
            Func::Send => "send",
            Func::Recv => "recv",
            Func::Isend => "isend",
            Func::Irecv => "irecv",
            Func::Test => "test",
            Func::Wait => "wait",
            Func::Iprobe => "iprobe",
            Func::Barrier => "barrier",
            Func::Alltoall => "alltoall",
            Func::Allreduce => "allreduce",
            Func::Bcast => "bcast",
            Func::Allgather => "allgather",
            Func::TypeContiguous => "type_contiguous",
            Func::TypeVector => "type_vector",
            Func::TypeCommit => "type_commit",
            Func::TypeFree => "type_free",
            Func::TypeGetEnvelope => "type_get_envelope",
            Func::TypeGetContents => "type_get_contents",
            Func::OpCreate => "op_create",
            Func::OpFree => "op_free",
        }
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of [`Func`]s as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct FuncSet(u64);

impl FuncSet {
    pub const EMPTY: FuncSet = FuncSet(0);

    pub const fn of(funcs: &[Func]) -> FuncSet {
        let mut bits = 0u64;
        let mut i = 0;
        while i < funcs.len() {
            bits |= 1 << funcs[i] as u8;
            i += 1;
        }
        FuncSet(bits)
    }

    pub fn all() -> FuncSet {
        FuncSet::of(&Func::ALL)
    }

    pub fn contains(self, f: Func) -> bool {
        self.0 & (1 << f as u8) != 0
    }

    pub fn insert(&mut self, f: Func) {
        self.0 |= 1 << f as u8;
    }

    pub fn remove(&mut self, f: Func) {
        self.0 &= !(1 << f as u8);
    }

    pub fn iter(self) -> impl Iterator<Item = Func> {
        Func::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    /// Members of `other` missing from `self`.
    pub fn missing(self, other: FuncSet) -> Vec<Func> {
        other.iter().filter(|f| !self.contains(*f)).collect()
    }
}

impl fmt::Debug for FuncSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(Func::name)).finish()
    }
}

/// Probe/receive/test: detect and complete pending point-to-point traffic.
pub const CATEGORY_PENDING: FuncSet = FuncSet::of(&[Func::Iprobe, Func::Recv, Func::Test]);
/// Object decoding used to reconstruct objects at restart.
pub const CATEGORY_DECODE: FuncSet = FuncSet::of(&[
    Func::CommGroup,
    Func::GroupTranslateRanks,
    Func::TypeGetEnvelope,
    Func::TypeGetContents,
]);
/// Communication used by the runtime itself to share messages.
pub const CATEGORY_SHARE: FuncSet = FuncSet::of(&[Func::Send, Func::Recv, Func::Alltoall]);

/// Everything a backend must provide to be checkpointable.
pub const REQUIRED: FuncSet = FuncSet(CATEGORY_PENDING.0 | CATEGORY_DECODE.0 | CATEGORY_SHARE.0);

/// Calls the drain protocol is allowed to make.
pub const DRAIN_ALLOWED: FuncSet = FuncSet::of(&[
    Func::Iprobe,
    Func::Recv,
    Func::Test,
    Func::Send,
    Func::Alltoall,
    Func::Barrier,
]);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Any,
    Rank(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TagSel {
    Any,
    Tag(i32),
}

impl Source {
    pub fn matches(self, r: u32) -> bool {
        match self {
            Source::Any => true,
            Source::Rank(s) => s == r,
        }
    }
}

impl TagSel {
    pub fn matches(self, t: i32) -> bool {
        match self {
            TagSel::Any => true,
            TagSel::Tag(x) => x == t,
        }
    }
}

/// Receive status: source rank within the communicator, tag and byte count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Status {
    pub source: u32,
    pub tag: i32,
    pub bytes: usize,
}

/// A completed request. `data` is the packed payload for receives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub status: Status,
    pub data: Option<Vec<u8>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Combiner {
    Named,
    Contiguous,
    Vector,
}

/// Result of envelope decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TypeEnvelope {
    pub combiner: Combiner,
    pub num_integers: usize,
    pub num_datatypes: usize,
}

/// Result of contents decoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeContents {
    pub integers: Vec<i32>,
    pub datatypes: Vec<BackendHandle>,
}

/// Result entry of `group_translate_ranks` for ranks absent from the target.
pub const UNDEFINED_RANK: Option<u32> = None;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend does not provide `{0}`")]
    SubsetViolation(Func),
    #[error("handle {0:?} is not a live {1}")]
    BadHandle(BackendHandle, &'static str),
    #[error("handle {0:?} belongs to another backend session")]
    ForeignHandle(BackendHandle),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("unknown reduction function `{0}`")]
    UnknownFunction(String),
    #[error("rank {rank} out of range for size {size}")]
    RankOutOfRange { rank: u32, size: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("datatype is not committed")]
    NotCommitted,
    #[error("layout error: {0}")]
    Layout(#[from] crate::typemap::LayoutError),
    #[error("timed out waiting for a message")]
    Timeout,
    #[error("backend not initialized")]
    NotInitialized,
    #[error("handle table exhausted")]
    Exhausted,
}

pub type BResult<T> = Result<T, BackendError>;

/// Everything a backend needs at initialization.
#[derive(Clone)]
pub struct BackendEnv {
    pub world_size: u32,
    pub rank: u32,
    pub transport: Arc<Transport>,
    pub reductions: Arc<ReductionRegistry>,
}

/// Which part of the runtime is currently driving the backend. Only
/// instrumentation cares; model backends ignore it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Normal,
    Drain,
    Replay,
    SelfCheck,
}

/// The lower-half interface.
///
/// Handles passed in must have been produced by the same instance. Blocking
/// calls (`recv`, `wait`, collectives) block the calling rank's thread.
pub trait Backend: Send {
    fn name(&self) -> &str;

    /// Functions this backend implements. Calls outside the surface fail with
    /// [`BackendError::SubsetViolation`].
    fn surface(&self) -> FuncSet;

    fn init(&mut self, env: BackendEnv) -> BResult<()>;
    fn finalize(&mut self) -> BResult<()>;

    /// Resolve a named constant (`COMM_WORLD`, `INT`, `SUM`, ...) to this
    /// session's handle.
    fn resolve_constant(&mut self, name: &str) -> BResult<BackendHandle>;

    fn comm_world(&mut self) -> BResult<BackendHandle> {
        self.resolve_constant("COMM_WORLD")
    }
    fn comm_self(&mut self) -> BResult<BackendHandle> {
        self.resolve_constant("COMM_SELF")
    }

    fn comm_split(&mut self, comm: BackendHandle, color: i32, key: i32) -> BResult<BackendHandle>;
    fn comm_dup(&mut self, comm: BackendHandle) -> BResult<BackendHandle>;
    /// Collective over `comm`; returns `None` on ranks outside `group`.
    fn comm_create(&mut self, comm: BackendHandle, group: BackendHandle) -> BResult<Option<BackendHandle>>;
    fn comm_rank(&mut self, comm: BackendHandle) -> BResult<u32>;
    fn comm_size(&mut self, comm: BackendHandle) -> BResult<u32>;
    fn comm_free(&mut self, comm: BackendHandle) -> BResult<()>;
    fn comm_group(&mut self, comm: BackendHandle) -> BResult<BackendHandle>;

    /// Ranks outside `group` or absent from `target` map to
    /// [`UNDEFINED_RANK`].
    fn group_translate_ranks(
        &mut self,
        group: BackendHandle,
        ranks: &[u32],
        target: BackendHandle,
    ) -> BResult<Vec<Option<u32>>>;
    fn group_incl(&mut self, group: BackendHandle, ranks: &[u32]) -> BResult<BackendHandle>;
    fn group_free(&mut self, group: BackendHandle) -> BResult<()>;

    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        buf: &[u8],
        count: usize,
        datatype: BackendHandle,
        dest: u32,
        tag: i32,
        comm: BackendHandle,
    ) -> BResult<()>;
    #[allow(clippy::too_many_arguments)]
    fn recv(
        &mut self,
        buf: &mut [u8],
        count: usize,
        datatype: BackendHandle,
        source: Source,
        tag: TagSel,
        comm: BackendHandle,
    ) -> BResult<Status>;
    #[allow(clippy::too_many_arguments)]
    fn isend(
        &mut self,
        buf: &[u8],
        count: usize,
        datatype: BackendHandle,
        dest: u32,
        tag: i32,
        comm: BackendHandle,
    ) -> BResult<BackendHandle>;
    /// The payload is returned packed by `test`/`wait` on completion.
    fn irecv(
        &mut self,
        count: usize,
        datatype: BackendHandle,
        source: Source,
        tag: TagSel,
        comm: BackendHandle,
    ) -> BResult<BackendHandle>;
    /// Completed requests are released.
    fn test(&mut self, request: BackendHandle) -> BResult<Option<Completion>>;
    fn wait(&mut self, request: BackendHandle) -> BResult<Completion>;
    fn iprobe(&mut self, source: Source, tag: TagSel, comm: BackendHandle) -> BResult<Option<Status>>;

    fn barrier(&mut self, comm: BackendHandle) -> BResult<()>;
    /// `send` holds `size` equal blocks; block `i` goes to rank `i`.
    fn alltoall(&mut self, send: &[u8], recv: &mut [u8], comm: BackendHandle) -> BResult<()>;
    fn allreduce(
        &mut self,
        buf: &mut [u8],
        count: usize,
        datatype: BackendHandle,
        op: BackendHandle,
        comm: BackendHandle,
    ) -> BResult<()>;
    fn bcast(&mut self, buf: &mut [u8], root: u32, comm: BackendHandle) -> BResult<()>;
    fn allgather(&mut self, send: &[u8], recv: &mut [u8], comm: BackendHandle) -> BResult<()>;

    fn type_contiguous(&mut self, count: i32, child: BackendHandle) -> BResult<BackendHandle>;
    fn type_vector(
        &mut self,
        count: i32,
        blocklen: i32,
        stride: i32,
        child: BackendHandle,
    ) -> BResult<BackendHandle>;
    fn type_commit(&mut self, datatype: BackendHandle) -> BResult<()>;
    fn type_free(&mut self, datatype: BackendHandle) -> BResult<()>;
    fn type_get_envelope(&mut self, datatype: BackendHandle) -> BResult<TypeEnvelope>;
    fn type_get_contents(&mut self, datatype: BackendHandle) -> BResult<TypeContents>;

    fn op_create(&mut self, fn_name: &str, commutative: bool) -> BResult<BackendHandle>;
    fn op_free(&mut self, op: BackendHandle) -> BResult<()>;

    /// Whether named constants only come into existence when first
    /// resolved. The runtime leaves such constants unbound until used.
    fn lazy_constants(&self) -> bool {
        false
    }

    /// Hint from the runtime about which protocol phase is running.
    fn enter_phase(&mut self, _phase: Phase) {}

    /// Messages addressed to this rank still held by the transport.
    fn pending_messages(&self) -> usize;
}

/// Names of the model backends, in registration order.
pub const BACKEND_NAMES: [&str; 3] = ["int_table", "word_handle", "lazy_const"];

type Factory = fn() -> Box<dyn Backend>;

/// Name-keyed constructors for the available backends.
pub struct BackendRegistry {
    entries: Vec<(&'static str, Factory)>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = BackendRegistry { entries: Vec::new() };
        r.register("int_table", || Box::new(IntTableBackend::new()));
        r.register("word_handle", || Box::new(WordHandleBackend::new()));
        r.register("lazy_const", || Box::new(LazyConstBackend::new()));
        r
    }
}

impl BackendRegistry {
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, factory));
    }

    pub fn create(&self, name: &str) -> Option<Box<dyn Backend>> {
        self.entries.iter().find(|(n, _)| *n == name).map(|(_, f)| f())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|(n, _)| *n)
    }
}

/// Construct one of the built-in backends by name.
pub fn make_backend(name: &str) -> Option<Box<dyn Backend>> {
    BackendRegistry::default().create(name)
}

/// Implement [`Backend`] for a newtype around a `ModelBackend` by forwarding.
macro_rules! delegate_backend {
    ($ty:ty) => {
        impl $crate::backends::Backend for $ty {
            fn name(&self) -> &str { self.0.name() }
            fn lazy_constants(&self) -> bool { self.0.lazy_constants() }
            fn surface(&self) -> $crate::backends::FuncSet { self.0.surface() }
            fn init(&mut self, env: $crate::backends::BackendEnv) -> $crate::backends::BResult<()> { self.0.init(env) }
            fn finalize(&mut self) -> $crate::backends::BResult<()> { self.0.finalize() }
            fn resolve_constant(&mut self, name: &str) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.resolve_constant(name)
            }
            fn comm_split(&mut self, c: $crate::backends::BackendHandle, color: i32, key: i32) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.comm_split(c, color, key)
            }
            fn comm_dup(&mut self, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.comm_dup(c)
            }
            fn comm_create(&mut self, c: $crate::backends::BackendHandle, g: $crate::backends::BackendHandle) -> $crate::backends::BResult<Option<$crate::backends::BackendHandle>> {
                self.0.comm_create(c, g)
            }
            fn comm_rank(&mut self, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<u32> { self.0.comm_rank(c) }
            fn comm_size(&mut self, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<u32> { self.0.comm_size(c) }
            fn comm_free(&mut self, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.comm_free(c) }
            fn comm_group(&mut self, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.comm_group(c)
            }
            fn group_translate_ranks(&mut self, g: $crate::backends::BackendHandle, ranks: &[u32], t: $crate::backends::BackendHandle) -> $crate::backends::BResult<Vec<Option<u32>>> {
                self.0.group_translate_ranks(g, ranks, t)
            }
            fn group_incl(&mut self, g: $crate::backends::BackendHandle, ranks: &[u32]) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.group_incl(g, ranks)
            }
            fn group_free(&mut self, g: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.group_free(g) }
            fn send(&mut self, buf: &[u8], count: usize, t: $crate::backends::BackendHandle, dest: u32, tag: i32, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> {
                self.0.send(buf, count, t, dest, tag, c)
            }
            fn recv(&mut self, buf: &mut [u8], count: usize, t: $crate::backends::BackendHandle, src: $crate::backends::Source, tag: $crate::backends::TagSel, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::Status> {
                self.0.recv(buf, count, t, src, tag, c)
            }
            fn isend(&mut self, buf: &[u8], count: usize, t: $crate::backends::BackendHandle, dest: u32, tag: i32, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.isend(buf, count, t, dest, tag, c)
            }
            fn irecv(&mut self, count: usize, t: $crate::backends::BackendHandle, src: $crate::backends::Source, tag: $crate::backends::TagSel, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.irecv(count, t, src, tag, c)
            }
            fn test(&mut self, r: $crate::backends::BackendHandle) -> $crate::backends::BResult<Option<$crate::backends::Completion>> { self.0.test(r) }
            fn wait(&mut self, r: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::Completion> { self.0.wait(r) }
            fn iprobe(&mut self, src: $crate::backends::Source, tag: $crate::backends::TagSel, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<Option<$crate::backends::Status>> {
                self.0.iprobe(src, tag, c)
            }
            fn barrier(&mut self, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.barrier(c) }
            fn alltoall(&mut self, s: &[u8], r: &mut [u8], c: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.alltoall(s, r, c) }
            fn allreduce(&mut self, buf: &mut [u8], count: usize, t: $crate::backends::BackendHandle, op: $crate::backends::BackendHandle, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> {
                self.0.allreduce(buf, count, t, op, c)
            }
            fn bcast(&mut self, buf: &mut [u8], root: u32, c: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.bcast(buf, root, c) }
            fn allgather(&mut self, s: &[u8], r: &mut [u8], c: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.allgather(s, r, c) }
            fn type_contiguous(&mut self, count: i32, t: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.type_contiguous(count, t)
            }
            fn type_vector(&mut self, count: i32, bl: i32, stride: i32, t: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.type_vector(count, bl, stride, t)
            }
            fn type_commit(&mut self, t: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.type_commit(t) }
            fn type_free(&mut self, t: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.type_free(t) }
            fn type_get_envelope(&mut self, t: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::TypeEnvelope> {
                self.0.type_get_envelope(t)
            }
            fn type_get_contents(&mut self, t: $crate::backends::BackendHandle) -> $crate::backends::BResult<$crate::backends::TypeContents> {
                self.0.type_get_contents(t)
            }
            fn op_create(&mut self, name: &str, commutative: bool) -> $crate::backends::BResult<$crate::backends::BackendHandle> {
                self.0.op_create(name, commutative)
            }
            fn op_free(&mut self, op: $crate::backends::BackendHandle) -> $crate::backends::BResult<()> { self.0.op_free(op) }
            fn pending_messages(&self) -> usize { self.0.pending_messages() }
        }
    };
}
pub(crate) use delegate_backend;
