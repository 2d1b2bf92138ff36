use std::collections::BTreeMap;
use std::sync::Arc;

use crate::backends::{
    make_backend, Backend, BackendEnv, BackendError, BackendHandle, Func, Phase, Transport, REQUIRED,
};
use crate::error::{Error, Result};
use crate::reduce::{self, BuiltinOp, ReductionRegistry};
use crate::restart::ShadowQueue;
use crate::typemap::{Layout, NamedType};
use crate::vid::{
    ggid_compute, Body, CommDesc, CommRecipe, DescriptorTable, GroupDesc, GroupRecipe, ObjectKind, TypeRecipe,
    VidError, VirtualId, TAG_SHIFT,
};

use super::constants::{constant_body, ConstantMap};
use super::counters::CounterTable;

/// Per-rank runtime context: the application-facing side of the library.
///
/// Every call takes and returns virtual ids; backend handles stay inside.
pub struct Runtime {
    pub(crate) backend: Box<dyn Backend>,
    pub(crate) transport: Arc<Transport>,
    pub(crate) reductions: Arc<ReductionRegistry>,
    pub(crate) world_size: u32,
    pub(crate) rank: u32,
    pub(crate) table: DescriptorTable,
    pub(crate) constants: ConstantMap,
    pub(crate) counters: CounterTable,
    pub(crate) shadow: ShadowQueue,
    /// Next `ggid_seq` to hand out, per ggid.
    pub(crate) ggid_seq: BTreeMap<u32, u32>,
    /// Session-local world group used to decode communicator membership.
    pub(crate) world_group: Option<BackendHandle>,
    pub(crate) calls: Vec<u64>,
    pub(crate) epoch: u32,
    pub(crate) next_arrival: u64,
}

impl Runtime {
    /// Start a rank on the backend registered under `backend_name`, using the
    /// process-wide reduction registry.
    pub fn init(backend_name: &str, transport: Arc<Transport>, rank: u32) -> Result<Runtime> {
        let backend = make_backend(backend_name)
            .ok_or_else(|| Error::Unsupported(format!("unknown backend `{backend_name}`")))?;
        Runtime::with_backend(backend, transport, rank, reduce::global())
    }

    pub fn with_backend(
        backend: Box<dyn Backend>,
        transport: Arc<Transport>,
        rank: u32,
        reductions: Arc<ReductionRegistry>,
    ) -> Result<Runtime> {
        let mut rt = Runtime::start(backend, transport, rank, reductions)?;
        let world: Vec<u32> = (0..rt.world_size).collect();
        let names: Vec<&'static str> = rt.constants.iter().map(|e| e.name).collect();
        for name in names {
            let vid = rt.constants.vid_of(name).expect("listed name");
            let mut body = constant_body(name, &world, rank);
            if let Body::Comm(c) = &mut body {
                c.ggid = ggid_compute(&c.members)?;
                c.ggid_seq = rt.next_ggid_seq(c.ggid);
            }
            rt.table.bind_reserved(vid.slot(), None, body)?;
        }
        rt.counters.open(rt.comm_world(), rt.world_size as usize);
        rt.counters.open(rt.comm_self(), 1);
        rt.bind_eager_constants()?;
        Ok(rt)
    }

    /// Gate on the required function set, then initialize the backend.
    pub(crate) fn start(
        mut backend: Box<dyn Backend>,
        transport: Arc<Transport>,
        rank: u32,
        reductions: Arc<ReductionRegistry>,
    ) -> Result<Runtime> {
        if let Some(&f) = backend.surface().missing(REQUIRED).first() {
            return Err(BackendError::SubsetViolation(f).into());
        }
        let world_size = transport.world_size();
        if rank >= world_size {
            return Err(BackendError::RankOutOfRange { rank, size: world_size }.into());
        }
        backend.init(BackendEnv { world_size, rank, transport: transport.clone(), reductions: reductions.clone() })?;
        Ok(Runtime {
            backend,
            transport,
            reductions,
            world_size,
            rank,
            table: DescriptorTable::new(),
            constants: ConstantMap::standard(),
            counters: CounterTable::new(world_size),
            shadow: ShadowQueue::new(),
            ggid_seq: BTreeMap::new(),
            world_group: None,
            calls: vec![0; Func::ALL.len()],
            epoch: 0,
            next_arrival: 0,
        })
    }

    /// Resolve every constant now unless the backend binds them lazily.
    pub(crate) fn bind_eager_constants(&mut self) -> Result<()> {
        if self.backend.lazy_constants() {
            return Ok(());
        }
        let vids: Vec<VirtualId> = self.constants.iter().map(|e| e.vid).collect();
        for v in vids {
            self.bind_constant(v)?;
        }
        Ok(())
    }

    pub(crate) fn bind_constant(&mut self, v: VirtualId) -> Result<BackendHandle> {
        let name = self.constants.name_of(v).ok_or(VidError::InvalidId(v))?;
        let h = self.backend.resolve_constant(name)?;
        self.table.set_real(v, Some(h))?;
        self.constants.bind(name, h);
        Ok(h)
    }

    pub(crate) fn next_ggid_seq(&mut self, ggid: u32) -> u32 {
        let e = self.ggid_seq.entry(ggid).or_insert(0);
        *e += 1;
        *e - 1
    }

    /// Translate `v` to this session's backend handle.
    #[inline]
    pub(crate) fn real(&mut self, v: VirtualId, kind: ObjectKind) -> Result<BackendHandle> {
        if v.raw() >> TAG_SHIFT != kind.tag() {
            return Err(VidError::InvalidId(v).into());
        }
        match self.table.vid_to_real(v) {
            Ok(h) => Ok(h),
            Err(VidError::Unbound(_)) if v.is_predefined() => self.bind_constant(v),
            Err(e) => Err(e.into()),
        }
    }

    #[inline]
    pub(crate) fn tick(&mut self, f: Func) {
        self.calls[f as usize] += 1;
    }

    pub(crate) fn set_phase(&mut self, p: Phase) {
        self.backend.enter_phase(p);
    }

    // ---- accessors -----------------------------------------------------

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn world_size(&self) -> u32 {
        self.world_size
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn table(&self) -> &DescriptorTable {
        &self.table
    }

    pub fn constants(&self) -> &ConstantMap {
        &self.constants
    }

    pub fn counters(&self) -> &CounterTable {
        &self.counters
    }

    pub fn shadow(&self) -> &ShadowQueue {
        &self.shadow
    }

    pub fn transport(&self) -> &Arc<Transport> {
        &self.transport
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    /// Number of wrapper calls made for `f`.
    pub fn wrapper_calls(&self, f: Func) -> u64 {
        self.calls[f as usize]
    }

    pub fn wrapper_calls_total(&self) -> u64 {
        self.calls.iter().sum()
    }

    /// The backend handle currently bound to `v`, for tests and diagnostics.
    pub fn handle_of(&self, v: VirtualId) -> Option<BackendHandle> {
        self.table.get(v).ok().and_then(|d| d.real)
    }

    /// Direct access to the backend, bypassing translation.
    pub fn backend_mut(&mut self) -> &mut dyn Backend {
        self.backend.as_mut()
    }

    // ---- constants -----------------------------------------------------

    pub fn comm_world(&self) -> VirtualId {
        VirtualId::from_raw(ObjectKind::Comm.tag() << TAG_SHIFT)
    }

    pub fn comm_self(&self) -> VirtualId {
        VirtualId::from_raw((ObjectKind::Comm.tag() << TAG_SHIFT) | 1)
    }

    pub fn datatype(&self, t: NamedType) -> VirtualId {
        VirtualId::from_raw((ObjectKind::Datatype.tag() << TAG_SHIFT) | t.index() as u32)
    }

    pub fn builtin_op(&self, op: BuiltinOp) -> VirtualId {
        VirtualId::from_raw((ObjectKind::Op.tag() << TAG_SHIFT) | op.index() as u32)
    }

    /// The reserved vid of a named constant, binding its handle on first use.
    pub fn resolve_named(&mut self, name: &str) -> Result<VirtualId> {
        let v = self.constants.vid_of(name).ok_or_else(|| Error::UnknownConstant(name.to_owned()))?;
        self.tick(Func::ResolveConstant);
        self.real(v, v.kind().expect("reserved vid"))?;
        Ok(v)
    }

    // ---- communicators -------------------------------------------------

    pub(crate) fn world_group(&mut self) -> Result<BackendHandle> {
        if let Some(g) = self.world_group {
            return Ok(g);
        }
        let w = self.real(self.comm_world(), ObjectKind::Comm)?;
        let g = self.backend.comm_group(w)?;
        self.world_group = Some(g);
        Ok(g)
    }

    /// World ranks of a backend communicator, in comm-rank order, decoded
    /// through its group. The temporary group is returned to the caller.
    pub(crate) fn decode_members(&mut self, comm: BackendHandle) -> Result<(Vec<u32>, BackendHandle)> {
        let wg = self.world_group()?;
        let g = self.backend.comm_group(comm)?;
        let ranks: Vec<u32> = (0..=self.world_size).collect();
        let t = self.backend.group_translate_ranks(g, &ranks, wg)?;
        Ok((t.into_iter().map_while(|x| x).collect(), g))
    }

    fn register_comm(&mut self, real: BackendHandle, recipe: CommRecipe) -> Result<VirtualId> {
        let (members, g) = self.decode_members(real)?;
        self.backend.group_free(g)?;
        let ggid = ggid_compute(&members)?;
        let ggid_seq = self.next_ggid_seq(ggid);
        let size = members.len();
        let v = self.table.alloc(Some(real), Body::Comm(CommDesc { ggid, ggid_seq, members, recipe }))?;
        self.counters.open(v, size);
        Ok(v)
    }

    pub(crate) fn comm_desc(&self, comm: VirtualId) -> Result<&CommDesc> {
        self.table.get(comm)?.as_comm().ok_or(Error::Vid(VidError::InvalidId(comm)))
    }

    pub fn comm_split(&mut self, comm: VirtualId, color: i32, key: i32) -> Result<VirtualId> {
        self.tick(Func::CommSplit);
        let c = self.real(comm, ObjectKind::Comm)?;
        let h = self.backend.comm_split(c, color, key)?;
        self.register_comm(h, CommRecipe::Split { parent: comm, color, key })
    }

    pub fn comm_dup(&mut self, comm: VirtualId) -> Result<VirtualId> {
        self.tick(Func::CommDup);
        let c = self.real(comm, ObjectKind::Comm)?;
        let h = self.backend.comm_dup(c)?;
        self.register_comm(h, CommRecipe::Dup { parent: comm })
    }

    /// Only groups holding every rank of `comm` are supported, so that every
    /// caller receives a communicator.
    pub fn comm_create(&mut self, comm: VirtualId, group: VirtualId) -> Result<VirtualId> {
        self.tick(Func::CommCreate);
        let c = self.real(comm, ObjectKind::Comm)?;
        let g = self.real(group, ObjectKind::Group)?;
        let mut parent = self.comm_desc(comm)?.members.clone();
        let mut chosen = self.group_desc(group)?.members.clone();
        parent.sort_unstable();
        chosen.sort_unstable();
        if parent != chosen {
            return Err(Error::Unsupported("comm_create with a group that omits ranks of the parent".into()));
        }
        let h = self
            .backend
            .comm_create(c, g)?
            .ok_or_else(|| Error::Unsupported("comm_create returned no communicator for a member".into()))?;
        self.register_comm(h, CommRecipe::Create { parent: comm, group })
    }

    pub fn comm_rank(&mut self, comm: VirtualId) -> Result<u32> {
        self.tick(Func::CommRank);
        let c = self.real(comm, ObjectKind::Comm)?;
        Ok(self.backend.comm_rank(c)?)
    }

    pub fn comm_size(&mut self, comm: VirtualId) -> Result<u32> {
        self.tick(Func::CommSize);
        let c = self.real(comm, ObjectKind::Comm)?;
        Ok(self.backend.comm_size(c)?)
    }

    /// Global group id and its disambiguating sequence number.
    pub fn comm_ggid(&self, comm: VirtualId) -> Result<(u32, u32)> {
        let d = self.comm_desc(comm)?;
        Ok((d.ggid, d.ggid_seq))
    }

    /// World ranks of `comm` in comm-rank order, as recorded at creation.
    pub fn comm_members(&self, comm: VirtualId) -> Result<Vec<u32>> {
        Ok(self.comm_desc(comm)?.members.clone())
    }

    pub(crate) fn ensure_unreferenced(&self, v: VirtualId) -> Result<()> {
        for (w, d) in self.table.iter_all() {
            if d.body.references().contains(&v) {
                return Err(Error::StillReferenced(v, w));
            }
        }
        Ok(())
    }

    pub fn comm_free(&mut self, comm: VirtualId) -> Result<()> {
        self.tick(Func::CommFree);
        let c = self.real(comm, ObjectKind::Comm)?;
        if comm.is_predefined() {
            return Err(VidError::FreeingPredefined(comm).into());
        }
        self.ensure_unreferenced(comm)?;
        self.backend.comm_free(c)?;
        let members = self.comm_desc(comm)?.members.clone();
        self.counters.retire(comm, &members);
        self.table.free(comm)?;
        Ok(())
    }

    // ---- groups ----------------------------------------------------------

    pub(crate) fn group_desc(&self, group: VirtualId) -> Result<&GroupDesc> {
        self.table.get(group)?.as_group().ok_or(Error::Vid(VidError::InvalidId(group)))
    }

    pub fn comm_group(&mut self, comm: VirtualId) -> Result<VirtualId> {
        self.tick(Func::CommGroup);
        let c = self.real(comm, ObjectKind::Comm)?;
        let h = self.backend.comm_group(c)?;
        let members = self.comm_desc(comm)?.members.clone();
        Ok(self.table.alloc(Some(h), Body::Group(GroupDesc { members, recipe: GroupRecipe::FromComm { comm } }))?)
    }

    pub fn group_incl(&mut self, group: VirtualId, ranks: &[u32]) -> Result<VirtualId> {
        self.tick(Func::GroupIncl);
        let g = self.real(group, ObjectKind::Group)?;
        let h = self.backend.group_incl(g, ranks)?;
        let parent = &self.group_desc(group)?.members;
        let members = ranks.iter().map(|&r| parent[r as usize]).collect();
        Ok(self.table.alloc(
            Some(h),
            Body::Group(GroupDesc { members, recipe: GroupRecipe::Incl { parent: group, ranks: ranks.to_vec() } }),
        )?)
    }

    pub fn group_translate_ranks(
        &mut self,
        group: VirtualId,
        ranks: &[u32],
        target: VirtualId,
    ) -> Result<Vec<Option<u32>>> {
        self.tick(Func::GroupTranslateRanks);
        let g = self.real(group, ObjectKind::Group)?;
        let t = self.real(target, ObjectKind::Group)?;
        Ok(self.backend.group_translate_ranks(g, ranks, t)?)
    }

    pub fn group_members(&self, group: VirtualId) -> Result<Vec<u32>> {
        Ok(self.group_desc(group)?.members.clone())
    }

    pub fn group_free(&mut self, group: VirtualId) -> Result<()> {
        self.tick(Func::GroupFree);
        let g = self.real(group, ObjectKind::Group)?;
        self.ensure_unreferenced(group)?;
        self.backend.group_free(g)?;
        self.table.free(group)?;
        Ok(())
    }

    // ---- layouts ---------------------------------------------------------

    /// Byte layout of a datatype, computed from its recorded recipe.
    pub fn layout_of(&self, dtype: VirtualId) -> Result<Layout> {
        let d = self.table.get(dtype)?.as_type().ok_or(Error::Vid(VidError::InvalidId(dtype)))?;
        let l = match d.recipe {
            TypeRecipe::Named(t) => Layout::named(t),
            TypeRecipe::Contiguous { count, child } => {
                Layout::contiguous(count, &self.layout_of(child)?).map_err(BackendError::from)?
            }
            TypeRecipe::Vector { count, blocklen, stride, child } => {
                Layout::vector(count, blocklen, stride, &self.layout_of(child)?).map_err(BackendError::from)?
            }
        };
        Ok(l)
    }

    /// Scatter a packed payload (as returned by receive completions) into
    /// `buf` according to `dtype`.
    pub fn unpack(&self, dtype: VirtualId, data: &[u8], buf: &mut [u8], count: usize) -> Result<usize> {
        Ok(self.layout_of(dtype)?.unpack(data, buf, count).map_err(BackendError::from)?)
    }

    // ---- teardown ------------------------------------------------------

    /// Finish the run. Undelivered drained messages are an error.
    pub fn finalize(mut self) -> Result<()> {
        if !self.shadow.is_empty() {
            let n = self.shadow.len();
            let _ = self.backend.finalize();
            return Err(Error::ShadowNotEmpty(n));
        }
        self.backend.finalize()?;
        Ok(())
    }

    /// Shut the backend down without the end-of-run checks, for runs that
    /// stop right after writing a checkpoint.
    pub fn abandon(mut self) -> Result<()> {
        self.backend.finalize()?;
        Ok(())
    }
}
