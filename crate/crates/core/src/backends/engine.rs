//! Object model and message matching common to the model backends. Objects
//! are addressed by per-kind integer ids; each backend wraps those ids in its
//! own handle encoding.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use super::transport::{Message, Transport};
use super::{BResult, BackendEnv, BackendError, Combiner, Completion, Source, Status, TagSel, TypeEnvelope};
use crate::reduce::{BuiltinOp, ReduceFn, ReductionRegistry};
use crate::typemap::{Layout, NamedType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum ObjKind {
    Comm,
    Group,
    Datatype,
    Op,
    Request,
}

impl ObjKind {
    pub(crate) fn label(self) -> &'static str {
        match self {
            ObjKind::Comm => "communicator",
            ObjKind::Group => "group",
            ObjKind::Datatype => "datatype",
            ObjKind::Op => "operation",
            ObjKind::Request => "request",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct ObjRef {
    pub kind: ObjKind,
    pub id: u32,
}

impl ObjRef {
    pub(crate) fn new(kind: ObjKind, id: u32) -> ObjRef {
        ObjRef { kind, id }
    }
}

pub(crate) const WORLD_ID: u32 = 0;
pub(crate) const SELF_ID: u32 = 1;

/// Predefined object behind a constant name.
pub(crate) fn constant_object(name: &str) -> Option<ObjRef> {
    match name {
        "COMM_WORLD" => Some(ObjRef::new(ObjKind::Comm, WORLD_ID)),
        "COMM_SELF" => Some(ObjRef::new(ObjKind::Comm, SELF_ID)),
        _ => NamedType::from_name(name)
            .map(|t| ObjRef::new(ObjKind::Datatype, t.index() as u32))
            .or_else(|| BuiltinOp::from_name(name).map(|o| ObjRef::new(ObjKind::Op, o.index() as u32))),
    }
}

/// Every name [`constant_object`] accepts.
pub(crate) fn constant_names() -> impl Iterator<Item = &'static str> {
    ["COMM_WORLD", "COMM_SELF"]
        .into_iter()
        .chain(NamedType::ALL.iter().map(|t| t.name()))
        .chain(BuiltinOp::ALL.iter().map(|o| o.name()))
}

const COLLECTIVE_BIT: u64 = 1 << 63;

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined word
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(a << 6).wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    (z ^ (z >> 31)) & !COLLECTIVE_BIT
}

struct CommObj {
    context: u64,
    members: Arc<[u32]>,
    my_rank: u32,
    /// Communicators derived from this one so far (keeps derived contexts
    /// identical on every member).
    derived: u64,
    collectives: u64,
}

struct GroupObj {
    members: Vec<u32>,
}

#[derive(Clone, Copy)]
enum TypeDef {
    Named,
    Contiguous { count: i32, child: u32 },
    Vector { count: i32, blocklen: i32, stride: i32, child: u32 },
}

struct TypeObj {
    def: TypeDef,
    layout: Layout,
    committed: bool,
}

enum OpFn {
    Builtin(BuiltinOp),
    User(ReduceFn),
}

struct OpObj {
    f: OpFn,
}

enum ReqObj {
    Send(Status),
    Recv {
        source: Source,
        tag: TagSel,
        context: u64,
        members: Arc<[u32]>,
        capacity: usize,
        done: Option<Completion>,
    },
}

/// Ids are never reused within a session.
struct Slab<T> {
    items: Vec<Option<T>>,
}

impl<T> Slab<T> {
    fn new() -> Self {
        Slab { items: Vec::new() }
    }
    fn insert(&mut self, v: T) -> u32 {
        self.items.push(Some(v));
        (self.items.len() - 1) as u32
    }
    fn get(&self, id: u32, kind: ObjKind) -> BResult<&T> {
        self.items
            .get(id as usize)
            .and_then(Option::as_ref)
            .ok_or(BackendError::InvalidArgument(format!("no live {} #{id}", kind.label())))
    }
    fn get_mut(&mut self, id: u32, kind: ObjKind) -> BResult<&mut T> {
        self.items
            .get_mut(id as usize)
            .and_then(Option::as_mut)
            .ok_or(BackendError::InvalidArgument(format!("no live {} #{id}", kind.label())))
    }
    fn remove(&mut self, id: u32, kind: ObjKind) -> BResult<T> {
        self.items
            .get_mut(id as usize)
            .and_then(Option::take)
            .ok_or(BackendError::InvalidArgument(format!("no live {} #{id}", kind.label())))
    }
}

pub(crate) struct Engine {
    rank: u32,
    transport: Arc<Transport>,
    reductions: Arc<ReductionRegistry>,
    comms: Slab<CommObj>,
    groups: Slab<GroupObj>,
    types: Slab<TypeObj>,
    ops: Slab<OpObj>,
    requests: Slab<ReqObj>,
    /// Unmatched receive requests in posting order.
    posted: VecDeque<u32>,
}

fn pt2pt_match(m: &Message, context: u64, members: &[u32], source: Source, tag: TagSel) -> bool {
    m.context == context
        && tag.matches(m.tag)
        && match source {
            Source::Any => true,
            Source::Rank(r) => members.get(r as usize) == Some(&m.src),
        }
}

fn comm_rank_of(members: &[u32], world: u32) -> u32 {
    members.iter().position(|&w| w == world).map(|p| p as u32).unwrap_or(u32::MAX)
}

impl Engine {
    pub(crate) fn new(env: &BackendEnv) -> BResult<Engine> {
        if env.rank >= env.world_size || env.transport.world_size() != env.world_size {
            return Err(BackendError::RankOutOfRange { rank: env.rank, size: env.world_size });
        }
        let mut e = Engine {
            rank: env.rank,
            transport: env.transport.clone(),
            reductions: env.reductions.clone(),
            comms: Slab::new(),
            groups: Slab::new(),
            types: Slab::new(),
            ops: Slab::new(),
            requests: Slab::new(),
            posted: VecDeque::new(),
        };
        let world: Arc<[u32]> = (0..env.world_size).collect();
        e.comms.insert(CommObj {
            context: mix(0x5745_4c44, 1),
            members: world,
            my_rank: env.rank,
            derived: 0,
            collectives: 0,
        });
        e.comms.insert(CommObj {
            context: mix(0x5345_4c46, env.rank as u64 + 1),
            members: Arc::from(vec![env.rank]),
            my_rank: 0,
            derived: 0,
            collectives: 0,
        });
        for t in NamedType::ALL {
            e.types.insert(TypeObj { def: TypeDef::Named, layout: Layout::named(t), committed: true });
        }
        for o in BuiltinOp::ALL {
            e.ops.insert(OpObj { f: OpFn::Builtin(o) });
        }
        Ok(e)
    }

    // ---- communicators -------------------------------------------------

    fn comm(&self, id: u32) -> BResult<&CommObj> {
        self.comms.get(id, ObjKind::Comm)
    }

    pub(crate) fn comm_rank(&self, id: u32) -> BResult<u32> {
        Ok(self.comm(id)?.my_rank)
    }

    pub(crate) fn comm_size(&self, id: u32) -> BResult<u32> {
        Ok(self.comm(id)?.members.len() as u32)
    }

    fn next_derived(&mut self, id: u32) -> BResult<(u64, u64)> {
        let c = self.comms.get_mut(id, ObjKind::Comm)?;
        let n = c.derived;
        c.derived += 1;
        Ok((c.context, n))
    }

    fn insert_comm(&mut self, context: u64, members: Vec<u32>) -> u32 {
        let my_rank = comm_rank_of(&members, self.rank);
        self.comms.insert(CommObj { context, members: members.into(), my_rank, derived: 0, collectives: 0 })
    }

    pub(crate) fn comm_split(&mut self, id: u32, color: i32, key: i32) -> BResult<u32> {
        let mut mine = [0u8; 8];
        mine[..4].copy_from_slice(&color.to_le_bytes());
        mine[4..].copy_from_slice(&key.to_le_bytes());
        let all = self.allgather_blocks(id, &mine)?;
        let parent = self.comm(id)?.members.clone();
        let mut chosen: Vec<(i32, usize)> = all
            .iter()
            .enumerate()
            .filter_map(|(r, b)| {
                let c = i32::from_le_bytes(b[..4].try_into().unwrap());
                let k = i32::from_le_bytes(b[4..8].try_into().unwrap());
                (c == color).then_some((k, r))
            })
            .collect();
        chosen.sort();
        let members: Vec<u32> = chosen.iter().map(|&(_, r)| parent[r]).collect();
        let (ctx, n) = self.next_derived(id)?;
        let context = mix(mix(ctx, n), 0x5350_4c49_0000_0000 ^ color as u32 as u64);
        Ok(self.insert_comm(context, members))
    }

    pub(crate) fn comm_dup(&mut self, id: u32) -> BResult<u32> {
        let members = self.comm(id)?.members.to_vec();
        let (ctx, n) = self.next_derived(id)?;
        Ok(self.insert_comm(mix(mix(ctx, n), 0x4455_5000), members))
    }

    pub(crate) fn comm_create(&mut self, id: u32, group: u32) -> BResult<Option<u32>> {
        let parent = self.comm(id)?.members.clone();
        let members = self.groups.get(group, ObjKind::Group)?.members.clone();
        if let Some(w) = members.iter().find(|w| !parent.contains(w)) {
            return Err(BackendError::InvalidArgument(format!("group member {w} not in parent communicator")));
        }
        let (ctx, n) = self.next_derived(id)?;
        let mut salt = 0x4352_4541u64;
        for &w in &members {
            salt = mix(salt, w as u64);
        }
        let context = mix(mix(ctx, n), salt);
        if !members.contains(&self.rank) {
            return Ok(None);
        }
        Ok(Some(self.insert_comm(context, members)))
    }

    pub(crate) fn comm_free(&mut self, id: u32) -> BResult<()> {
        if id == WORLD_ID || id == SELF_ID {
            return Err(BackendError::InvalidArgument("cannot free a predefined communicator".into()));
        }
        self.comms.remove(id, ObjKind::Comm).map(drop)
    }

    pub(crate) fn comm_group(&mut self, id: u32) -> BResult<u32> {
        let members = self.comm(id)?.members.to_vec();
        Ok(self.groups.insert(GroupObj { members }))
    }

    // ---- groups --------------------------------------------------------

    pub(crate) fn group_translate_ranks(&self, g: u32, ranks: &[u32], target: u32) -> BResult<Vec<Option<u32>>> {
        let src = &self.groups.get(g, ObjKind::Group)?.members;
        let dst = &self.groups.get(target, ObjKind::Group)?.members;
        Ok(ranks
            .iter()
            .map(|&r| {
                src.get(r as usize)
                    .and_then(|w| dst.iter().position(|d| d == w))
                    .map(|p| p as u32)
            })
            .collect())
    }

    pub(crate) fn group_incl(&mut self, g: u32, ranks: &[u32]) -> BResult<u32> {
        let src = &self.groups.get(g, ObjKind::Group)?.members;
        let mut members = Vec::with_capacity(ranks.len());
        for &r in ranks {
            let w = *src
                .get(r as usize)
                .ok_or(BackendError::RankOutOfRange { rank: r, size: src.len() as u32 })?;
            if members.contains(&w) {
                return Err(BackendError::InvalidArgument(format!("rank {r} listed twice")));
            }
            members.push(w);
        }
        Ok(self.groups.insert(GroupObj { members }))
    }

    pub(crate) fn group_free(&mut self, g: u32) -> BResult<()> {
        self.groups.remove(g, ObjKind::Group).map(drop)
    }

    // ---- datatypes -----------------------------------------------------

    fn committed_layout(&self, t: u32) -> BResult<&Layout> {
        let t = self.types.get(t, ObjKind::Datatype)?;
        if !t.committed {
            return Err(BackendError::NotCommitted);
        }
        Ok(&t.layout)
    }

    pub(crate) fn type_contiguous(&mut self, count: i32, child: u32) -> BResult<u32> {
        let layout = Layout::contiguous(count, &self.types.get(child, ObjKind::Datatype)?.layout)?;
        Ok(self.types.insert(TypeObj { def: TypeDef::Contiguous { count, child }, layout, committed: false }))
    }

    pub(crate) fn type_vector(&mut self, count: i32, blocklen: i32, stride: i32, child: u32) -> BResult<u32> {
        let layout = Layout::vector(count, blocklen, stride, &self.types.get(child, ObjKind::Datatype)?.layout)?;
        Ok(self.types.insert(TypeObj {
            def: TypeDef::Vector { count, blocklen, stride, child },
            layout,
            committed: false,
        }))
    }

    pub(crate) fn type_commit(&mut self, t: u32) -> BResult<()> {
        self.types.get_mut(t, ObjKind::Datatype)?.committed = true;
        Ok(())
    }

    pub(crate) fn type_free(&mut self, t: u32) -> BResult<()> {
        if (t as usize) < NamedType::ALL.len() {
            return Err(BackendError::InvalidArgument("cannot free a named datatype".into()));
        }
        self.types.remove(t, ObjKind::Datatype).map(drop)
    }

    pub(crate) fn type_envelope(&self, t: u32) -> BResult<TypeEnvelope> {
        Ok(match self.types.get(t, ObjKind::Datatype)?.def {
            TypeDef::Named => TypeEnvelope { combiner: Combiner::Named, num_integers: 0, num_datatypes: 0 },
            TypeDef::Contiguous { .. } => {
                TypeEnvelope { combiner: Combiner::Contiguous, num_integers: 1, num_datatypes: 1 }
            }
            TypeDef::Vector { .. } => TypeEnvelope { combiner: Combiner::Vector, num_integers: 3, num_datatypes: 1 },
        })
    }

    /// Integer arguments and child type id.
    pub(crate) fn type_contents(&self, t: u32) -> BResult<(Vec<i32>, Vec<u32>)> {
        match self.types.get(t, ObjKind::Datatype)?.def {
            TypeDef::Named => Err(BackendError::InvalidArgument("named datatype has no contents".into())),
            TypeDef::Contiguous { count, child } => Ok((vec![count], vec![child])),
            TypeDef::Vector { count, blocklen, stride, child } => Ok((vec![count, blocklen, stride], vec![child])),
        }
    }

    // ---- operations ----------------------------------------------------

    pub(crate) fn op_create(&mut self, fn_name: &str) -> BResult<u32> {
        let f = self
            .reductions
            .lookup(fn_name)
            .ok_or_else(|| BackendError::UnknownFunction(fn_name.to_owned()))?;
        Ok(self.ops.insert(OpObj { f: OpFn::User(f) }))
    }

    pub(crate) fn op_free(&mut self, op: u32) -> BResult<()> {
        if (op as usize) < BuiltinOp::ALL.len() {
            return Err(BackendError::InvalidArgument("cannot free a builtin operation".into()));
        }
        self.ops.remove(op, ObjKind::Op).map(drop)
    }

    // ---- point-to-point ------------------------------------------------

    fn world_dest(&self, comm: &CommObj, dest: u32) -> BResult<u32> {
        comm.members
            .get(dest as usize)
            .copied()
            .ok_or(BackendError::RankOutOfRange { rank: dest, size: comm.members.len() as u32 })
    }

    pub(crate) fn send(&mut self, buf: &[u8], count: usize, t: u32, dest: u32, tag: i32, comm: u32) -> BResult<Status> {
        if tag < 0 {
            return Err(BackendError::InvalidArgument(format!("negative tag {tag}")));
        }
        let payload = self.committed_layout(t)?.pack(buf, count)?;
        let c = self.comm(comm)?;
        let dst = self.world_dest(c, dest)?;
        let status = Status { source: c.my_rank, tag, bytes: payload.len() };
        self.transport.enqueue(dst, Message { src: self.rank, context: c.context, tag, payload });
        Ok(status)
    }

    /// Match queued messages against posted receives (arrival order against
    /// posting order), then take the first remaining message satisfying
    /// `want`. Runs under the mailbox lock.
    fn progress_and_take(&mut self, want: Option<(u64, &[u32], Source, TagSel)>) -> Option<Message> {
        let posted = &mut self.posted;
        let requests = &mut self.requests;
        self.transport.with_queue(self.rank, |queue| {
            if !posted.is_empty() {
                let mut i = 0;
                while i < queue.len() && !posted.is_empty() {
                    let m = &queue[i];
                    let hit = posted.iter().position(|&id| match requests.items[id as usize].as_ref() {
                        Some(ReqObj::Recv { source, tag, context, members, done: None, .. }) => {
                            pt2pt_match(m, *context, members, *source, *tag)
                        }
                        _ => false,
                    });
                    match hit {
                        Some(p) => {
                            let id = posted.remove(p).unwrap();
                            let m = queue.remove(i).unwrap();
                            if let Some(ReqObj::Recv { members, capacity, done, .. }) =
                                requests.items[id as usize].as_mut()
                            {
                                let status =
                                    Status { source: comm_rank_of(members, m.src), tag: m.tag, bytes: m.payload.len() };
                                let data = if m.payload.len() > *capacity {
                                    // Delivered truncated; surfaced as an error at completion.
                                    None
                                } else {
                                    Some(m.payload)
                                };
                                *done = Some(Completion { status, data });
                            }
                        }
                        None => i += 1,
                    }
                }
            }
            let (context, members, source, tag) = want?;
            let pos = queue.iter().position(|m| pt2pt_match(m, context, members, source, tag))?;
            queue.remove(pos)
        })
    }

    fn deadline(&self) -> Instant {
        Instant::now() + self.transport.timeout()
    }

    pub(crate) fn recv(
        &mut self,
        buf: &mut [u8],
        count: usize,
        t: u32,
        source: Source,
        tag: TagSel,
        comm: u32,
    ) -> BResult<Status> {
        let layout = self.committed_layout(t)?.clone();
        let c = self.comm(comm)?;
        let (context, members) = (c.context, c.members.clone());
        let deadline = self.deadline();
        loop {
            let seen = self.transport.generation(self.rank);
            if let Some(m) = self.progress_and_take(Some((context, &members, source, tag))) {
                layout.unpack(&m.payload, buf, count)?;
                return Ok(Status { source: comm_rank_of(&members, m.src), tag: m.tag, bytes: m.payload.len() });
            }
            if !self.transport.wait_arrival(self.rank, seen, deadline) {
                return Err(BackendError::Timeout);
            }
        }
    }

    pub(crate) fn isend(&mut self, buf: &[u8], count: usize, t: u32, dest: u32, tag: i32, comm: u32) -> BResult<u32> {
        let status = self.send(buf, count, t, dest, tag, comm)?;
        Ok(self.requests.insert(ReqObj::Send(status)))
    }

    pub(crate) fn irecv(&mut self, count: usize, t: u32, source: Source, tag: TagSel, comm: u32) -> BResult<u32> {
        let capacity = self.committed_layout(t)?.size() * count;
        let c = self.comm(comm)?;
        let req = ReqObj::Recv { source, tag, context: c.context, members: c.members.clone(), capacity, done: None };
        let id = self.requests.insert(req);
        self.posted.push_back(id);
        Ok(id)
    }

    fn take_completion(&mut self, req: u32) -> BResult<Option<Completion>> {
        let done = match self.requests.get(req, ObjKind::Request)? {
            ReqObj::Send(status) => Some(Completion { status: *status, data: None }),
            ReqObj::Recv { done, .. } => done.clone(),
        };
        match done {
            Some(c) => {
                self.requests.remove(req, ObjKind::Request)?;
                Ok(Some(c))
            }
            None => Ok(None),
        }
    }

    fn check_truncation(c: Completion, is_recv: bool) -> BResult<Completion> {
        if is_recv && c.data.is_none() {
            return Err(BackendError::Layout(crate::typemap::LayoutError::Truncated {
                cap: 0,
                have: c.status.bytes,
            }));
        }
        Ok(c)
    }

    fn is_recv(&self, req: u32) -> BResult<bool> {
        Ok(matches!(self.requests.get(req, ObjKind::Request)?, ReqObj::Recv { .. }))
    }

    pub(crate) fn test(&mut self, req: u32) -> BResult<Option<Completion>> {
        let is_recv = self.is_recv(req)?;
        if is_recv {
            self.progress_and_take(None);
        }
        match self.take_completion(req)? {
            Some(c) => Ok(Some(Self::check_truncation(c, is_recv)?)),
            None => Ok(None),
        }
    }

    pub(crate) fn wait(&mut self, req: u32) -> BResult<Completion> {
        let is_recv = self.is_recv(req)?;
        let deadline = self.deadline();
        loop {
            let seen = self.transport.generation(self.rank);
            if is_recv {
                self.progress_and_take(None);
            }
            if let Some(c) = self.take_completion(req)? {
                return Self::check_truncation(c, is_recv);
            }
            if !self.transport.wait_arrival(self.rank, seen, deadline) {
                return Err(BackendError::Timeout);
            }
        }
    }

    pub(crate) fn iprobe(&mut self, source: Source, tag: TagSel, comm: u32) -> BResult<Option<Status>> {
        let c = self.comm(comm)?;
        let (context, members) = (c.context, c.members.clone());
        self.progress_and_take(None);
        Ok(self.transport.peek_first(
            self.rank,
            |m| pt2pt_match(m, context, &members, source, tag),
            |m| Status { source: comm_rank_of(&members, m.src), tag: m.tag, bytes: m.payload.len() },
        ))
    }

    /// Point-to-point messages addressed to this rank not yet received.
    pub(crate) fn pending_messages(&self) -> usize {
        self.transport.pending_at(self.rank, |m| m.context & COLLECTIVE_BIT == 0)
    }

    // ---- collectives ---------------------------------------------------

    /// Every member contributes `mine`; returns contributions by comm rank.
    fn allgather_blocks(&mut self, comm: u32, mine: &[u8]) -> BResult<Vec<Vec<u8>>> {
        let (context, members, my_rank, tag) = self.collective_slot(comm)?;
        for (r, &w) in members.iter().enumerate() {
            if r as u32 != my_rank {
                self.transport.enqueue(w, Message { src: self.rank, context, tag, payload: mine.to_vec() });
            }
        }
        let mut out = Vec::with_capacity(members.len());
        for (r, &w) in members.iter().enumerate() {
            if r as u32 == my_rank {
                out.push(mine.to_vec());
            } else {
                out.push(self.collective_recv(context, w, tag)?);
            }
        }
        Ok(out)
    }

    fn collective_slot(&mut self, comm: u32) -> BResult<(u64, Arc<[u32]>, u32, i32)> {
        let c = self.comms.get_mut(comm, ObjKind::Comm)?;
        let tag = (c.collectives & 0x7fff_ffff) as i32;
        c.collectives += 1;
        Ok((c.context | COLLECTIVE_BIT, c.members.clone(), c.my_rank, tag))
    }

    fn collective_recv(&mut self, context: u64, src: u32, tag: i32) -> BResult<Vec<u8>> {
        let deadline = self.deadline();
        loop {
            let seen = self.transport.generation(self.rank);
            if let Some(m) =
                self.transport.take_first(self.rank, |m| m.context == context && m.src == src && m.tag == tag)
            {
                return Ok(m.payload);
            }
            if !self.transport.wait_arrival(self.rank, seen, deadline) {
                return Err(BackendError::Timeout);
            }
        }
    }

    pub(crate) fn barrier(&mut self, comm: u32) -> BResult<()> {
        self.allgather_blocks(comm, &[]).map(drop)
    }

    pub(crate) fn alltoall(&mut self, send: &[u8], recv: &mut [u8], comm: u32) -> BResult<()> {
        let (context, members, my_rank, tag) = self.collective_slot(comm)?;
        let n = members.len();
        if send.len() % n != 0 || recv.len() != send.len() {
            return Err(BackendError::InvalidArgument(format!(
                "alltoall buffers of {} and {} bytes for {n} ranks",
                send.len(),
                recv.len()
            )));
        }
        let block = send.len() / n;
        for (r, &w) in members.iter().enumerate() {
            if r as u32 != my_rank {
                let payload = send[r * block..(r + 1) * block].to_vec();
                self.transport.enqueue(w, Message { src: self.rank, context, tag, payload });
            }
        }
        for (r, &w) in members.iter().enumerate() {
            let dst = &mut recv[r * block..(r + 1) * block];
            if r as u32 == my_rank {
                dst.copy_from_slice(&send[r * block..(r + 1) * block]);
            } else {
                let data = self.collective_recv(context, w, tag)?;
                if data.len() != block {
                    return Err(BackendError::InvalidArgument("alltoall block size mismatch".into()));
                }
                dst.copy_from_slice(&data);
            }
        }
        Ok(())
    }

    pub(crate) fn allgather(&mut self, send: &[u8], recv: &mut [u8], comm: u32) -> BResult<()> {
        let blocks = self.allgather_blocks(comm, send)?;
        if recv.len() != send.len() * blocks.len() {
            return Err(BackendError::InvalidArgument("allgather receive buffer size".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            recv[i * send.len()..(i + 1) * send.len()].copy_from_slice(b);
        }
        Ok(())
    }

    /// Every rank folds all contributions in rank order, so results are
    /// identical everywhere and independent of arrival timing.
    pub(crate) fn allreduce(&mut self, buf: &mut [u8], count: usize, t: u32, op: u32, comm: u32) -> BResult<()> {
        let layout = self.committed_layout(t)?;
        let elem = layout
            .elem()
            .ok_or_else(|| BackendError::InvalidArgument("reduction over a mixed datatype".into()))?;
        let bytes = layout.size() * count;
        if layout.size() != layout.extent() || buf.len() < bytes {
            return Err(BackendError::InvalidArgument("reduction needs a dense buffer".into()));
        }
        self.ops.get(op, ObjKind::Op)?;
        let blocks = self.allgather_blocks(comm, &buf[..bytes])?;
        let OpObj { f } = self.ops.get(op, ObjKind::Op)?;
        let mut acc = blocks.last().cloned().unwrap_or_default();
        for b in blocks.iter().rev().skip(1) {
            match f {
                OpFn::Builtin(o) => o.apply(elem, b, &mut acc),
                OpFn::User(uf) => uf(elem, b, &mut acc),
            }
        }
        buf[..bytes].copy_from_slice(&acc);
        Ok(())
    }

    pub(crate) fn bcast(&mut self, buf: &mut [u8], root: u32, comm: u32) -> BResult<()> {
        let (context, members, my_rank, tag) = self.collective_slot(comm)?;
        let root_world = *members
            .get(root as usize)
            .ok_or(BackendError::RankOutOfRange { rank: root, size: members.len() as u32 })?;
        if my_rank == root {
            for (r, &w) in members.iter().enumerate() {
                if r as u32 != my_rank {
                    self.transport.enqueue(w, Message { src: self.rank, context, tag, payload: buf.to_vec() });
                }
            }
        } else {
            let data = self.collective_recv(context, root_world, tag)?;
            if data.len() != buf.len() {
                return Err(BackendError::InvalidArgument("bcast buffer size mismatch".into()));
            }
            buf.copy_from_slice(&data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contexts_are_63_bit() {
        for i in 0..1000 {
            assert_eq!(mix(i, i * 7) & COLLECTIVE_BIT, 0);
        }
    }

    #[test]
    fn every_constant_name_resolves() {
        for name in constant_names() {
            assert!(constant_object(name).is_some(), "{name}");
        }
        assert!(constant_object("COMM_NULL").is_none());
    }
}
