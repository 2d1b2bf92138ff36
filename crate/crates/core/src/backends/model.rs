//! Glue between the shared engine and a backend-specific handle encoding.

use super::engine::{constant_object, Engine, ObjKind, ObjRef};
use super::{
    BResult, Backend, BackendEnv, BackendError, BackendHandle, Completion, Func, FuncSet, Source, Status, TagSel,
    TypeContents, TypeEnvelope,
};

/// How a backend represents object handles.
pub(crate) trait HandleCodec: Send {
    fn name(&self) -> &'static str;
    fn surface(&self) -> FuncSet;
    /// Mint a handle for a freshly created object.
    fn register(&mut self, obj: ObjRef) -> BResult<BackendHandle>;
    /// Handle of an object that already exists (predefined or registered).
    fn handle_of(&mut self, obj: ObjRef) -> BResult<BackendHandle>;
    fn decode(&self, h: BackendHandle, kind: ObjKind) -> BResult<u32>;
    fn release(&mut self, h: BackendHandle);
    /// Produce the session's handle for a predefined object.
    fn constant(&mut self, obj: ObjRef) -> BResult<BackendHandle>;

    fn lazy_constants(&self) -> bool {
        false
    }
}

pub(crate) struct ModelBackend<C> {
    codec: C,
    engine: Option<Engine>,
}

impl<C: HandleCodec> ModelBackend<C> {
    pub(crate) fn with_codec(codec: C) -> Self {
        ModelBackend { codec, engine: None }
    }

    fn gate(&self, f: Func) -> BResult<&Engine> {
        if !self.codec.surface().contains(f) {
            return Err(BackendError::SubsetViolation(f));
        }
        self.engine.as_ref().ok_or(BackendError::NotInitialized)
    }

    fn gate_mut(&mut self, f: Func) -> BResult<(&mut Engine, &mut C)> {
        if !self.codec.surface().contains(f) {
            return Err(BackendError::SubsetViolation(f));
        }
        let e = self.engine.as_mut().ok_or(BackendError::NotInitialized)?;
        Ok((e, &mut self.codec))
    }
}

impl<C: HandleCodec> Backend for ModelBackend<C> {
    fn name(&self) -> &str {
        self.codec.name()
    }

    fn surface(&self) -> FuncSet {
        self.codec.surface()
    }

    fn lazy_constants(&self) -> bool {
        self.codec.lazy_constants()
    }

    fn init(&mut self, env: BackendEnv) -> BResult<()> {
        self.engine = Some(Engine::new(&env)?);
        Ok(())
    }

    fn finalize(&mut self) -> BResult<()> {
        self.engine.take().map(drop).ok_or(BackendError::NotInitialized)
    }

    fn resolve_constant(&mut self, name: &str) -> BResult<BackendHandle> {
        self.gate(Func::ResolveConstant)?;
        let obj = constant_object(name).ok_or_else(|| BackendError::UnknownConstant(name.to_owned()))?;
        self.codec.constant(obj)
    }

    fn comm_split(&mut self, comm: BackendHandle, color: i32, key: i32) -> BResult<BackendHandle> {
        let (e, c) = self.gate_mut(Func::CommSplit)?;
        let id = e.comm_split(c.decode(comm, ObjKind::Comm)?, color, key)?;
        c.register(ObjRef::new(ObjKind::Comm, id))
    }

    fn comm_dup(&mut self, comm: BackendHandle) -> BResult<BackendHandle> {
        let (e, c) = self.gate_mut(Func::CommDup)?;
        let id = e.comm_dup(c.decode(comm, ObjKind::Comm)?)?;
        c.register(ObjRef::new(ObjKind::Comm, id))
    }

    fn comm_create(&mut self, comm: BackendHandle, group: BackendHandle) -> BResult<Option<BackendHandle>> {
        let (e, c) = self.gate_mut(Func::CommCreate)?;
        let parent = c.decode(comm, ObjKind::Comm)?;
        let g = c.decode(group, ObjKind::Group)?;
        match e.comm_create(parent, g)? {
            Some(id) => c.register(ObjRef::new(ObjKind::Comm, id)).map(Some),
            None => Ok(None),
        }
    }

    fn comm_rank(&mut self, comm: BackendHandle) -> BResult<u32> {
        let e = self.gate(Func::CommRank)?;
        e.comm_rank(self.codec.decode(comm, ObjKind::Comm)?)
    }

    fn comm_size(&mut self, comm: BackendHandle) -> BResult<u32> {
        let e = self.gate(Func::CommSize)?;
        e.comm_size(self.codec.decode(comm, ObjKind::Comm)?)
    }

    fn comm_free(&mut self, comm: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::CommFree)?;
        e.comm_free(c.decode(comm, ObjKind::Comm)?)?;
        c.release(comm);
        Ok(())
    }

    fn comm_group(&mut self, comm: BackendHandle) -> BResult<BackendHandle> {
        let (e, c) = self.gate_mut(Func::CommGroup)?;
        let id = e.comm_group(c.decode(comm, ObjKind::Comm)?)?;
        c.register(ObjRef::new(ObjKind::Group, id))
    }

    fn group_translate_ranks(
        &mut self,
        group: BackendHandle,
        ranks: &[u32],
        target: BackendHandle,
    ) -> BResult<Vec<Option<u32>>> {
        let e = self.gate(Func::GroupTranslateRanks)?;
        let c = &self.codec;
        e.group_translate_ranks(c.decode(group, ObjKind::Group)?, ranks, c.decode(target, ObjKind::Group)?)
    }

    fn group_incl(&mut self, group: BackendHandle, ranks: &[u32]) -> BResult<BackendHandle> {
        let (e, c) = self.gate_mut(Func::GroupIncl)?;
        let id = e.group_incl(c.decode(group, ObjKind::Group)?, ranks)?;
        c.register(ObjRef::new(ObjKind::Group, id))
    }

    fn group_free(&mut self, group: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::GroupFree)?;
        e.group_free(c.decode(group, ObjKind::Group)?)?;
        c.release(group);
        Ok(())
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
        let (e, c) = self.gate_mut(Func::Send)?;
        let t = c.decode(datatype, ObjKind::Datatype)?;
        e.send(buf, count, t, dest, tag, c.decode(comm, ObjKind::Comm)?).map(drop)
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
        let (e, c) = self.gate_mut(Func::Recv)?;
        let t = c.decode(datatype, ObjKind::Datatype)?;
        e.recv(buf, count, t, source, tag, c.decode(comm, ObjKind::Comm)?)
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
        let (e, c) = self.gate_mut(Func::Isend)?;
        let t = c.decode(datatype, ObjKind::Datatype)?;
        let id = e.isend(buf, count, t, dest, tag, c.decode(comm, ObjKind::Comm)?)?;
        c.register(ObjRef::new(ObjKind::Request, id))
    }

    fn irecv(
        &mut self,
        count: usize,
        datatype: BackendHandle,
        source: Source,
        tag: TagSel,
        comm: BackendHandle,
    ) -> BResult<BackendHandle> {
        let (e, c) = self.gate_mut(Func::Irecv)?;
        let t = c.decode(datatype, ObjKind::Datatype)?;
        let id = e.irecv(count, t, source, tag, c.decode(comm, ObjKind::Comm)?)?;
        c.register(ObjRef::new(ObjKind::Request, id))
    }

    fn test(&mut self, request: BackendHandle) -> BResult<Option<Completion>> {
        let (e, c) = self.gate_mut(Func::Test)?;
        let done = e.test(c.decode(request, ObjKind::Request)?)?;
        if done.is_some() {
            c.release(request);
        }
        Ok(done)
    }

    fn wait(&mut self, request: BackendHandle) -> BResult<Completion> {
        let (e, c) = self.gate_mut(Func::Wait)?;
        let done = e.wait(c.decode(request, ObjKind::Request)?)?;
        c.release(request);
        Ok(done)
    }

    fn iprobe(&mut self, source: Source, tag: TagSel, comm: BackendHandle) -> BResult<Option<Status>> {
        let (e, c) = self.gate_mut(Func::Iprobe)?;
        e.iprobe(source, tag, c.decode(comm, ObjKind::Comm)?)
    }

    fn barrier(&mut self, comm: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::Barrier)?;
        e.barrier(c.decode(comm, ObjKind::Comm)?)
    }

    fn alltoall(&mut self, send: &[u8], recv: &mut [u8], comm: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::Alltoall)?;
        e.alltoall(send, recv, c.decode(comm, ObjKind::Comm)?)
    }

    fn allreduce(
        &mut self,
        buf: &mut [u8],
        count: usize,
        datatype: BackendHandle,
        op: BackendHandle,
        comm: BackendHandle,
    ) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::Allreduce)?;
        let t = c.decode(datatype, ObjKind::Datatype)?;
        let o = c.decode(op, ObjKind::Op)?;
        e.allreduce(buf, count, t, o, c.decode(comm, ObjKind::Comm)?)
    }

    fn bcast(&mut self, buf: &mut [u8], root: u32, comm: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::Bcast)?;
        e.bcast(buf, root, c.decode(comm, ObjKind::Comm)?)
    }

    fn allgather(&mut self, send: &[u8], recv: &mut [u8], comm: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::Allgather)?;
        e.allgather(send, recv, c.decode(comm, ObjKind::Comm)?)
    }

    fn type_contiguous(&mut self, count: i32, child: BackendHandle) -> BResult<BackendHandle> {
        let (e, c) = self.gate_mut(Func::TypeContiguous)?;
        let id = e.type_contiguous(count, c.decode(child, ObjKind::Datatype)?)?;
        c.register(ObjRef::new(ObjKind::Datatype, id))
    }

    fn type_vector(&mut self, count: i32, blocklen: i32, stride: i32, child: BackendHandle) -> BResult<BackendHandle> {
        let (e, c) = self.gate_mut(Func::TypeVector)?;
        let id = e.type_vector(count, blocklen, stride, c.decode(child, ObjKind::Datatype)?)?;
        c.register(ObjRef::new(ObjKind::Datatype, id))
    }

    fn type_commit(&mut self, datatype: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::TypeCommit)?;
        e.type_commit(c.decode(datatype, ObjKind::Datatype)?)
    }

    fn type_free(&mut self, datatype: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::TypeFree)?;
        e.type_free(c.decode(datatype, ObjKind::Datatype)?)?;
        c.release(datatype);
        Ok(())
    }

    fn type_get_envelope(&mut self, datatype: BackendHandle) -> BResult<TypeEnvelope> {
        let e = self.gate(Func::TypeGetEnvelope)?;
        e.type_envelope(self.codec.decode(datatype, ObjKind::Datatype)?)
    }

    fn type_get_contents(&mut self, datatype: BackendHandle) -> BResult<TypeContents> {
        let (e, c) = self.gate_mut(Func::TypeGetContents)?;
        let (integers, children) = e.type_contents(c.decode(datatype, ObjKind::Datatype)?)?;
        let datatypes = children
            .into_iter()
            .map(|id| c.handle_of(ObjRef::new(ObjKind::Datatype, id)))
            .collect::<BResult<_>>()?;
        Ok(TypeContents { integers, datatypes })
    }

    fn op_create(&mut self, fn_name: &str, _commutative: bool) -> BResult<BackendHandle> {
        let (e, c) = self.gate_mut(Func::OpCreate)?;
        let id = e.op_create(fn_name)?;
        c.register(ObjRef::new(ObjKind::Op, id))
    }

    fn op_free(&mut self, op: BackendHandle) -> BResult<()> {
        let (e, c) = self.gate_mut(Func::OpFree)?;
        e.op_free(c.decode(op, ObjKind::Op)?)?;
        c.release(op);
        Ok(())
    }

    fn pending_messages(&self) -> usize {
        self.engine.as_ref().map_or(0, Engine::pending_messages)
    }
}
