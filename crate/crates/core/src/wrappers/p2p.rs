//! Point-to-point, request and collective wrappers.

use crate::backends::{Completion, Func, Source, Status, TagSel};
use crate::error::{Error, Result};
use crate::vid::{Body, ObjectKind, RequestDesc, RequestKind, SavedCompletion, VidError, VirtualId};

use super::Runtime;

impl Runtime {
    #[allow(clippy::too_many_arguments)]
    pub fn send(&mut self, buf: &[u8], count: usize, dtype: VirtualId, dest: u32, tag: i32, comm: VirtualId) -> Result<()> {
        self.tick(Func::Send);
        let t = self.real(dtype, ObjectKind::Datatype)?;
        let c = self.real(comm, ObjectKind::Comm)?;
        self.backend.send(buf, count, t, dest, tag, c)?;
        self.counters.count_sent(comm, dest);
        Ok(())
    }

    /// Drained messages are delivered before the backend is consulted.
    #[allow(clippy::too_many_arguments)]
    pub fn recv(
        &mut self,
        buf: &mut [u8],
        count: usize,
        dtype: VirtualId,
        source: Source,
        tag: TagSel,
        comm: VirtualId,
    ) -> Result<Status> {
        self.tick(Func::Recv);
        let t = self.real(dtype, ObjectKind::Datatype)?;
        let c = self.real(comm, ObjectKind::Comm)?;
        let status = match self.shadow.take(comm, source, tag) {
            Some(e) => {
                self.unpack(dtype, &e.payload, buf, count)?;
                Status { source: e.source, tag: e.tag, bytes: e.payload.len() }
            }
            None => self.backend.recv(buf, count, t, source, tag, c)?,
        };
        self.counters.count_received(comm, status.source);
        Ok(status)
    }

    /// `token` identifies the application buffer; it is stored, not used.
    #[allow(clippy::too_many_arguments)]
    pub fn isend(
        &mut self,
        buf: &[u8],
        count: usize,
        dtype: VirtualId,
        dest: u32,
        tag: i32,
        comm: VirtualId,
        token: u64,
    ) -> Result<VirtualId> {
        self.tick(Func::Isend);
        let t = self.real(dtype, ObjectKind::Datatype)?;
        let c = self.real(comm, ObjectKind::Comm)?;
        let h = self.backend.isend(buf, count, t, dest, tag, c)?;
        let desc = RequestDesc {
            kind: RequestKind::Isend,
            peer: Some(dest),
            tag: Some(tag),
            comm,
            count: count as u32,
            datatype: dtype,
            buffer: token,
            completion: None,
            reposted: false,
        };
        Ok(self.table.alloc(Some(h), Body::Request(desc))?)
    }

    /// The payload is handed back, packed, by `test`/`wait`.
    pub fn irecv(
        &mut self,
        count: usize,
        dtype: VirtualId,
        source: Source,
        tag: TagSel,
        comm: VirtualId,
        token: u64,
    ) -> Result<VirtualId> {
        self.tick(Func::Irecv);
        let t = self.real(dtype, ObjectKind::Datatype)?;
        let c = self.real(comm, ObjectKind::Comm)?;
        let mut desc = RequestDesc {
            kind: RequestKind::Irecv,
            peer: match source {
                Source::Any => None,
                Source::Rank(r) => Some(r),
            },
            tag: match tag {
                TagSel::Any => None,
                TagSel::Tag(t) => Some(t),
            },
            comm,
            count: count as u32,
            datatype: dtype,
            buffer: token,
            completion: None,
            reposted: false,
        };
        let real = match self.shadow_completion(&desc)? {
            Some(done) => {
                desc.completion = Some(done);
                None
            }
            None => Some(self.backend.irecv(count, t, source, tag, c)?),
        };
        Ok(self.table.alloc(real, Body::Request(desc))?)
    }

    /// Satisfy a receive request from the shadow queue, counting it.
    pub(crate) fn shadow_completion(&mut self, r: &RequestDesc) -> Result<Option<SavedCompletion>> {
        let source = r.peer.map_or(Source::Any, Source::Rank);
        let tag = r.tag.map_or(TagSel::Any, TagSel::Tag);
        let Some(e) = self.shadow.take(r.comm, source, tag) else {
            return Ok(None);
        };
        let cap = self.layout_of(r.datatype)?.size() * r.count as usize;
        if e.payload.len() > cap {
            return Err(crate::backends::BackendError::from(crate::typemap::LayoutError::Truncated {
                cap,
                have: e.payload.len(),
            })
            .into());
        }
        self.counters.count_received(r.comm, e.source);
        let status = Status { source: e.source, tag: e.tag, bytes: e.payload.len() };
        Ok(Some(SavedCompletion { status, data: Some(e.payload) }))
    }

    fn request_desc(&self, req: VirtualId) -> Result<&RequestDesc> {
        if req.kind() != Some(ObjectKind::Request) {
            return Err(VidError::InvalidId(req).into());
        }
        match self.table.get(req) {
            Ok(d) => Ok(d.as_request().expect("request slot holds a request")),
            Err(_) => Err(Error::TestOnFreed(req)),
        }
    }

    /// Count a completion the backend just reported and remember it.
    pub(crate) fn note_completion(&mut self, req: VirtualId, c: Completion) -> Result<SavedCompletion> {
        let d = self.table.get_mut(req)?;
        d.real = None;
        let Body::Request(r) = &mut d.body else { unreachable!("checked kind") };
        let saved = SavedCompletion { status: c.status, data: c.data };
        r.completion = Some(saved.clone());
        let (comm, kind, peer) = (r.comm, r.kind, r.peer);
        match kind {
            RequestKind::Isend => self.counters.count_sent(comm, peer.expect("sends have a destination")),
            RequestKind::Irecv => self.counters.count_received(comm, saved.status.source),
        }
        Ok(saved)
    }

    fn collect(&mut self, req: VirtualId) -> Result<Completion> {
        let d = self.table.free(req)?;
        let saved = d.as_request().and_then(|r| r.completion.clone()).expect("collected after completion");
        Ok(Completion { status: saved.status, data: saved.data })
    }

    /// `None` while the request is still pending. A completed request is freed.
    pub fn test(&mut self, req: VirtualId) -> Result<Option<Completion>> {
        self.tick(Func::Test);
        let r = self.request_desc(req)?;
        if r.completed() {
            return self.collect(req).map(Some);
        }
        let h = self.real(req, ObjectKind::Request)?;
        match self.backend.test(h)? {
            Some(c) => {
                self.note_completion(req, c)?;
                self.collect(req).map(Some)
            }
            None => Ok(None),
        }
    }

    pub fn wait(&mut self, req: VirtualId) -> Result<Completion> {
        self.tick(Func::Wait);
        let r = self.request_desc(req)?;
        if r.completed() {
            return self.collect(req);
        }
        let h = self.real(req, ObjectKind::Request)?;
        let c = self.backend.wait(h)?;
        self.note_completion(req, c)?;
        self.collect(req)
    }

    pub fn iprobe(&mut self, source: Source, tag: TagSel, comm: VirtualId) -> Result<Option<Status>> {
        self.tick(Func::Iprobe);
        let c = self.real(comm, ObjectKind::Comm)?;
        if let Some(e) = self.shadow.iter().find(|e| e.comm == comm && source.matches(e.source) && tag.matches(e.tag)) {
            return Ok(Some(Status { source: e.source, tag: e.tag, bytes: e.payload.len() }));
        }
        Ok(self.backend.iprobe(source, tag, c)?)
    }

    // ---- collectives ---------------------------------------------------

    pub fn barrier(&mut self, comm: VirtualId) -> Result<()> {
        self.tick(Func::Barrier);
        let c = self.real(comm, ObjectKind::Comm)?;
        Ok(self.backend.barrier(c)?)
    }

    pub fn alltoall(&mut self, send: &[u8], recv: &mut [u8], comm: VirtualId) -> Result<()> {
        self.tick(Func::Alltoall);
        let c = self.real(comm, ObjectKind::Comm)?;
        Ok(self.backend.alltoall(send, recv, c)?)
    }

    pub fn allgather(&mut self, send: &[u8], recv: &mut [u8], comm: VirtualId) -> Result<()> {
        self.tick(Func::Allgather);
        let c = self.real(comm, ObjectKind::Comm)?;
        Ok(self.backend.allgather(send, recv, c)?)
    }

    pub fn allreduce(&mut self, buf: &mut [u8], count: usize, dtype: VirtualId, op: VirtualId, comm: VirtualId) -> Result<()> {
        self.tick(Func::Allreduce);
        let t = self.real(dtype, ObjectKind::Datatype)?;
        let o = self.real(op, ObjectKind::Op)?;
        let c = self.real(comm, ObjectKind::Comm)?;
        Ok(self.backend.allreduce(buf, count, t, o, c)?)
    }

    pub fn bcast(&mut self, buf: &mut [u8], root: u32, comm: VirtualId) -> Result<()> {
        self.tick(Func::Bcast);
        let c = self.real(comm, ObjectKind::Comm)?;
        Ok(self.backend.bcast(buf, root, c)?)
    }
}
