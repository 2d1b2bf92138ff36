//! A decorating backend that records every call (tagged with the runtime
//! phase it happened in) and can withhold functions from the inner backend's
//! surface.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::{
    BResult, Backend, BackendEnv, BackendError, BackendHandle, Completion, Func, FuncSet, Phase, Source, Status,
    TagSel, TypeContents, TypeEnvelope,
};

/// Shared record of the calls made through a [`RecordingBackend`].
pub struct CallLog {
    entries: Mutex<Vec<(Phase, Func)>>,
    counts: Vec<AtomicU64>,
}

impl Default for CallLog {
    fn default() -> Self {
        CallLog { entries: Mutex::new(Vec::new()), counts: Func::ALL.iter().map(|_| AtomicU64::new(0)).collect() }
    }
}

impl CallLog {
    pub fn new() -> Arc<CallLog> {
        Arc::new(CallLog::default())
    }

    pub fn count(&self, f: Func) -> u64 {
        self.counts[f as usize].load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|c| c.load(Ordering::Relaxed)).sum()
    }

    pub fn entries(&self) -> Vec<(Phase, Func)> {
        self.entries.lock().unwrap().clone()
    }

    /// Distinct functions called while `phase` was active.
    pub fn used_in(&self, phase: Phase) -> FuncSet {
        let mut set = FuncSet::EMPTY;
        for (p, f) in self.entries.lock().unwrap().iter() {
            if *p == phase {
                set.insert(*f);
            }
        }
        set
    }

    pub fn calls_in(&self, phase: Phase) -> usize {
        self.entries.lock().unwrap().iter().filter(|(p, _)| *p == phase).count()
    }
}

pub struct RecordingBackend {
    inner: Box<dyn Backend>,
    log: Arc<CallLog>,
    withheld: FuncSet,
    phase: Phase,
    keep_entries: bool,
}

impl RecordingBackend {
    pub fn new(inner: Box<dyn Backend>, log: Arc<CallLog>) -> Self {
        RecordingBackend { inner, log, withheld: FuncSet::EMPTY, phase: Phase::Normal, keep_entries: true }
    }

    /// Remove `f` from the surface: calls to it fail with `SubsetViolation`.
    pub fn without(mut self, f: Func) -> Self {
        self.withheld.insert(f);
        self
    }

    /// Count calls only, without keeping the per-call entry list.
    pub fn counts_only(mut self) -> Self {
        self.keep_entries = false;
        self
    }

    fn record(&mut self, f: Func) -> BResult<&mut dyn Backend> {
        if self.withheld.contains(f) {
            return Err(BackendError::SubsetViolation(f));
        }
        self.log.counts[f as usize].fetch_add(1, Ordering::Relaxed);
        if self.keep_entries {
            self.log.entries.lock().unwrap().push((self.phase, f));
        }
        Ok(self.inner.as_mut())
    }
}

impl Backend for RecordingBackend {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn surface(&self) -> FuncSet {
        let mut s = self.inner.surface();
        for f in self.withheld.iter() {
            s.remove(f);
        }
        s
    }

    fn lazy_constants(&self) -> bool {
        self.inner.lazy_constants()
    }

    fn init(&mut self, env: BackendEnv) -> BResult<()> {
        self.inner.init(env)
    }

    fn finalize(&mut self) -> BResult<()> {
        self.inner.finalize()
    }

    fn resolve_constant(&mut self, name: &str) -> BResult<BackendHandle> {
        self.record(Func::ResolveConstant)?.resolve_constant(name)
    }

    fn comm_split(&mut self, comm: BackendHandle, color: i32, key: i32) -> BResult<BackendHandle> {
        self.record(Func::CommSplit)?.comm_split(comm, color, key)
    }

    fn comm_dup(&mut self, comm: BackendHandle) -> BResult<BackendHandle> {
        self.record(Func::CommDup)?.comm_dup(comm)
    }

    fn comm_create(&mut self, comm: BackendHandle, group: BackendHandle) -> BResult<Option<BackendHandle>> {
        self.record(Func::CommCreate)?.comm_create(comm, group)
    }

    fn comm_rank(&mut self, comm: BackendHandle) -> BResult<u32> {
        self.record(Func::CommRank)?.comm_rank(comm)
    }

    fn comm_size(&mut self, comm: BackendHandle) -> BResult<u32> {
        self.record(Func::CommSize)?.comm_size(comm)
    }

    fn comm_free(&mut self, comm: BackendHandle) -> BResult<()> {
        self.record(Func::CommFree)?.comm_free(comm)
    }

    fn comm_group(&mut self, comm: BackendHandle) -> BResult<BackendHandle> {
        self.record(Func::CommGroup)?.comm_group(comm)
    }

    fn group_translate_ranks(
        &mut self,
        group: BackendHandle,
        ranks: &[u32],
        target: BackendHandle,
    ) -> BResult<Vec<Option<u32>>> {
        self.record(Func::GroupTranslateRanks)?.group_translate_ranks(group, ranks, target)
    }

    fn group_incl(&mut self, group: BackendHandle, ranks: &[u32]) -> BResult<BackendHandle> {
        self.record(Func::GroupIncl)?.group_incl(group, ranks)
    }

    fn group_free(&mut self, group: BackendHandle) -> BResult<()> {
        self.record(Func::GroupFree)?.group_free(group)
    }

    fn send(
        &mut self,
        buf: &[u8],
        count: usize,
        datatype: BackendHandle,
        dest: u32,
        tag: i32,
        comm: BackendHandle,
    ) -> BResult<()> {
        self.record(Func::Send)?.send(buf, count, datatype, dest, tag, comm)
    }

    fn recv(
        &mut self,
        buf: &mut [u8],
        count: usize,
        datatype: BackendHandle,
        source: Source,
        tag: TagSel,
        comm: BackendHandle,
    ) -> BResult<Status> {
        self.record(Func::Recv)?.recv(buf, count, datatype, source, tag, comm)
    }

    fn isend(
        &mut self,
        buf: &[u8],
        count: usize,
        datatype: BackendHandle,
        dest: u32,
        tag: i32,
        comm: BackendHandle,
    ) -> BResult<BackendHandle> {
        self.record(Func::Isend)?.isend(buf, count, datatype, dest, tag, comm)
    }

    fn irecv(
        &mut self,
        count: usize,
        datatype: BackendHandle,
        source: Source,
        tag: TagSel,
        comm: BackendHandle,
    ) -> BResult<BackendHandle> {
        self.record(Func::Irecv)?.irecv(count, datatype, source, tag, comm)
    }

    fn test(&mut self, request: BackendHandle) -> BResult<Option<Completion>> {
        self.record(Func::Test)?.test(request)
    }

    fn wait(&mut self, request: BackendHandle) -> BResult<Completion> {
        self.record(Func::Wait)?.wait(request)
    }

    fn iprobe(&mut self, source: Source, tag: TagSel, comm: BackendHandle) -> BResult<Option<Status>> {
        self.record(Func::Iprobe)?.iprobe(source, tag, comm)
    }

    fn barrier(&mut self, comm: BackendHandle) -> BResult<()> {
        self.record(Func::Barrier)?.barrier(comm)
    }

    fn alltoall(&mut self, send: &[u8], recv: &mut [u8], comm: BackendHandle) -> BResult<()> {
        self.record(Func::Alltoall)?.alltoall(send, recv, comm)
    }

    fn allreduce(
        &mut self,
        buf: &mut [u8],
        count: usize,
        datatype: BackendHandle,
        op: BackendHandle,
        comm: BackendHandle,
    ) -> BResult<()> {
        self.record(Func::Allreduce)?.allreduce(buf, count, datatype, op, comm)
    }

    fn bcast(&mut self, buf: &mut [u8], root: u32, comm: BackendHandle) -> BResult<()> {
        self.record(Func::Bcast)?.bcast(buf, root, comm)
    }

    fn allgather(&mut self, send: &[u8], recv: &mut [u8], comm: BackendHandle) -> BResult<()> {
        self.record(Func::Allgather)?.allgather(send, recv, comm)
    }

    fn type_contiguous(&mut self, count: i32, child: BackendHandle) -> BResult<BackendHandle> {
        self.record(Func::TypeContiguous)?.type_contiguous(count, child)
    }

    fn type_vector(&mut self, count: i32, blocklen: i32, stride: i32, child: BackendHandle) -> BResult<BackendHandle> {
        self.record(Func::TypeVector)?.type_vector(count, blocklen, stride, child)
    }

    fn type_commit(&mut self, datatype: BackendHandle) -> BResult<()> {
        self.record(Func::TypeCommit)?.type_commit(datatype)
    }

    fn type_free(&mut self, datatype: BackendHandle) -> BResult<()> {
        self.record(Func::TypeFree)?.type_free(datatype)
    }

    fn type_get_envelope(&mut self, datatype: BackendHandle) -> BResult<TypeEnvelope> {
        self.record(Func::TypeGetEnvelope)?.type_get_envelope(datatype)
    }

    fn type_get_contents(&mut self, datatype: BackendHandle) -> BResult<TypeContents> {
        self.record(Func::TypeGetContents)?.type_get_contents(datatype)
    }

    fn op_create(&mut self, fn_name: &str, commutative: bool) -> BResult<BackendHandle> {
        self.record(Func::OpCreate)?.op_create(fn_name, commutative)
    }

    fn op_free(&mut self, op: BackendHandle) -> BResult<()> {
        self.record(Func::OpFree)?.op_free(op)
    }

    fn enter_phase(&mut self, phase: Phase) {
        self.phase = phase;
        self.inner.enter_phase(phase);
    }

    fn pending_messages(&self) -> usize {
        self.inner.pending_messages()
    }
}
