//! Binary image format.
//!
//! ```text
//! "MCRI" | version u32 | world_size u32 | rank u32 | backend name (u32 len + utf8)
//!        | creation_seq high water u64
//! then sections: id u32 | length u64 | body
//! ```
//!
//! Sections appear in id order: descriptors, counters, constant map, drained
//! messages, application state. All integers are little-endian. Backend
//! handles are never written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::backends::Status;
use crate::typemap::NamedType;
use crate::vid::{
    Body, CommDesc, CommRecipe, Descriptor, GroupDesc, GroupRecipe, KindState, ObjectKind, OpDesc, RequestDesc,
    RequestKind, SavedCompletion, TypeDesc, TypeRecipe, VirtualId,
};
use crate::wrappers::PeerCount;

pub const MAGIC: [u8; 4] = *b"MCRI";
pub const VERSION: u32 = 1;

pub const SECTION_DESCRIPTORS: u32 = 1;
pub const SECTION_COUNTERS: u32 = 2;
pub const SECTION_CONSTMAP: u32 = 3;
pub const SECTION_DRAINED: u32 = 4;
pub const SECTION_APPSTATE: u32 = 5;
const SECTIONS: [u32; 5] = [SECTION_DESCRIPTORS, SECTION_COUNTERS, SECTION_CONSTMAP, SECTION_DRAINED, SECTION_APPSTATE];

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("image version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("section {section} is truncated")]
    TruncatedSection { section: u32 },
    #[error("malformed image: {0}")]
    Malformed(String),
    #[error("image I/O: {0}")]
    Io(#[from] std::io::Error),
}

type IResult<T> = Result<T, ImageError>;

/// A point-to-point message captured by the drain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DrainedMessage {
    pub src_world_rank: u32,
    pub tag: i32,
    pub comm_ggid: u32,
    pub comm_ggid_seq: u32,
    pub payload: Vec<u8>,
    pub arrival_index: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageHeader {
    pub world_size: u32,
    pub rank: u32,
    pub backend_name: String,
    pub creation_seq_high_water: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CounterSection {
    pub entries: Vec<(VirtualId, Vec<PeerCount>)>,
    pub retired: Vec<PeerCount>,
    pub ggid_seq: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointImage {
    pub header: ImageHeader,
    pub kind_states: Vec<(ObjectKind, KindState)>,
    /// In raw vid order; `real` is always `None`.
    pub descriptors: Vec<(VirtualId, Descriptor)>,
    pub counters: CounterSection,
    pub constants: Vec<(String, VirtualId)>,
    pub drained: Vec<DrainedMessage>,
    pub app_state: Vec<u8>,
}

// ---- primitive encoding ------------------------------------------------

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }
    fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }
    fn str(&mut self, v: &str) {
        self.bytes(v.as_bytes());
    }
    fn vid(&mut self, v: VirtualId) {
        self.u32(v.raw());
    }
    fn u32s(&mut self, v: &[u32]) {
        self.u32(v.len() as u32);
        v.iter().for_each(|x| self.u32(*x));
    }
    fn section(&mut self, id: u32, body: Writer) {
        self.u32(id);
        self.u64(body.buf.len() as u64);
        self.buf.extend_from_slice(&body.buf);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> IResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(ImageError::Malformed(format!("{} ends early", self.what)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> IResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> IResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> IResult<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> IResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bool(&mut self) -> IResult<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(ImageError::Malformed(format!("{}: bad flag {b}", self.what))),
        }
    }
    fn len(&mut self) -> IResult<usize> {
        let n = self.u32()? as usize;
        if n > self.buf.len() - self.pos {
            return Err(ImageError::Malformed(format!("{}: length {n} exceeds section", self.what)));
        }
        Ok(n)
    }
    fn bytes(&mut self) -> IResult<Vec<u8>> {
        let n = self.len()?;
        Ok(self.take(n)?.to_vec())
    }
    fn str(&mut self) -> IResult<String> {
        String::from_utf8(self.bytes()?).map_err(|_| ImageError::Malformed(format!("{}: bad utf-8", self.what)))
    }
    fn vid(&mut self) -> IResult<VirtualId> {
        Ok(VirtualId::from_raw(self.u32()?))
    }
    fn u32s(&mut self) -> IResult<Vec<u32>> {
        let n = self.len()?;
        (0..n).map(|_| self.u32()).collect()
    }
    fn count(&mut self) -> IResult<usize> {
        // every encoded item occupies at least one byte
        self.len()
    }
    fn finish(&self) -> IResult<()> {
        if self.pos != self.buf.len() {
            return Err(ImageError::Malformed(format!("{}: {} trailing bytes", self.what, self.buf.len() - self.pos)));
        }
        Ok(())
    }
    fn bad<T>(&self, msg: impl std::fmt::Display) -> IResult<T> {
        Err(ImageError::Malformed(format!("{}: {msg}", self.what)))
    }
}

// ---- descriptors -------------------------------------------------------

fn put_descriptor(w: &mut Writer, v: VirtualId, d: &Descriptor) {
    w.vid(v);
    w.u64(d.creation_seq);
    w.u8(d.kind().tag() as u8);
    match &d.body {
        Body::Comm(c) => {
            w.u32(c.ggid);
            w.u32(c.ggid_seq);
            w.u32s(&c.members);
            match c.recipe {
                CommRecipe::World => w.u8(0),
                CommRecipe::SelfComm => w.u8(1),
                CommRecipe::Split { parent, color, key } => {
                    w.u8(2);
                    w.vid(parent);
                    w.i32(color);
                    w.i32(key);
                }
                CommRecipe::Dup { parent } => {
                    w.u8(3);
                    w.vid(parent);
                }
                CommRecipe::Create { parent, group } => {
                    w.u8(4);
                    w.vid(parent);
                    w.vid(group);
                }
            }
        }
        Body::Group(g) => {
            w.u32s(&g.members);
            match &g.recipe {
                GroupRecipe::FromComm { comm } => {
                    w.u8(0);
                    w.vid(*comm);
                }
                GroupRecipe::Incl { parent, ranks } => {
                    w.u8(1);
                    w.vid(*parent);
                    w.u32s(ranks);
                }
            }
        }
        Body::Request(r) => {
            w.u8(match r.kind {
                RequestKind::Isend => 0,
                RequestKind::Irecv => 1,
            });
            w.bool(r.peer.is_some());
            w.u32(r.peer.unwrap_or(0));
            w.bool(r.tag.is_some());
            w.i32(r.tag.unwrap_or(0));
            w.vid(r.comm);
            w.u32(r.count);
            w.vid(r.datatype);
            w.u64(r.buffer);
            w.bool(r.completion.is_some());
            if let Some(c) = &r.completion {
                w.u32(c.status.source);
                w.i32(c.status.tag);
                w.u64(c.status.bytes as u64);
                w.bool(c.data.is_some());
                if let Some(d) = &c.data {
                    w.bytes(d);
                }
            }
            w.bool(r.reposted);
        }
        Body::Op(o) => {
            w.str(&o.fn_name);
            w.bool(o.commutative);
        }
        Body::Datatype(t) => {
            w.bool(t.committed);
            match t.recipe {
                TypeRecipe::Named(n) => {
                    w.u8(0);
                    w.u8(n.index() as u8);
                }
                TypeRecipe::Contiguous { count, child } => {
                    w.u8(1);
                    w.i32(count);
                    w.vid(child);
                }
                TypeRecipe::Vector { count, blocklen, stride, child } => {
                    w.u8(2);
                    w.i32(count);
                    w.i32(blocklen);
                    w.i32(stride);
                    w.vid(child);
                }
            }
        }
    }
}

fn get_descriptor(r: &mut Reader) -> IResult<(VirtualId, Descriptor)> {
    let v = r.vid()?;
    let creation_seq = r.u64()?;
    let tag = r.u8()? as u32;
    let Some(kind) = ObjectKind::from_tag(tag) else {
        return r.bad(format!("unknown kind tag {tag}"));
    };
    if v.kind() != Some(kind) {
        return r.bad(format!("{v:?} stored with kind tag {tag}"));
    }
    let body = match kind {
        ObjectKind::Comm => {
            let ggid = r.u32()?;
            let ggid_seq = r.u32()?;
            let members = r.u32s()?;
            let recipe = match r.u8()? {
                0 => CommRecipe::World,
                1 => CommRecipe::SelfComm,
                2 => CommRecipe::Split { parent: r.vid()?, color: r.i32()?, key: r.i32()? },
                3 => CommRecipe::Dup { parent: r.vid()? },
                4 => CommRecipe::Create { parent: r.vid()?, group: r.vid()? },
                x => return r.bad(format!("unknown communicator recipe {x}")),
            };
            Body::Comm(CommDesc { ggid, ggid_seq, members, recipe })
        }
        ObjectKind::Group => {
            let members = r.u32s()?;
            let recipe = match r.u8()? {
                0 => GroupRecipe::FromComm { comm: r.vid()? },
                1 => GroupRecipe::Incl { parent: r.vid()?, ranks: r.u32s()? },
                x => return r.bad(format!("unknown group recipe {x}")),
            };
            Body::Group(GroupDesc { members, recipe })
        }
        ObjectKind::Request => {
            let kind = match r.u8()? {
                0 => RequestKind::Isend,
                1 => RequestKind::Irecv,
                x => return r.bad(format!("unknown request kind {x}")),
            };
            let has_peer = r.bool()?;
            let peer = r.u32()?;
            let has_tag = r.bool()?;
            let tag = r.i32()?;
            let comm = r.vid()?;
            let count = r.u32()?;
            let datatype = r.vid()?;
            let buffer = r.u64()?;
            let completion = if r.bool()? {
                let status = Status { source: r.u32()?, tag: r.i32()?, bytes: r.u64()? as usize };
                let data = if r.bool()? { Some(r.bytes()?) } else { None };
                Some(SavedCompletion { status, data })
            } else {
                None
            };
            let reposted = r.bool()?;
            Body::Request(RequestDesc {
                kind,
                peer: has_peer.then_some(peer),
                tag: has_tag.then_some(tag),
                comm,
                count,
                datatype,
                buffer,
                completion,
                reposted,
            })
        }
        ObjectKind::Op => Body::Op(OpDesc { fn_name: r.str()?, commutative: r.bool()? }),
        ObjectKind::Datatype => {
            let committed = r.bool()?;
            let recipe = match r.u8()? {
                0 => {
                    let i = r.u8()? as usize;
                    match NamedType::ALL.get(i) {
                        Some(t) => TypeRecipe::Named(*t),
                        None => return r.bad(format!("unknown named type {i}")),
                    }
                }
                1 => TypeRecipe::Contiguous { count: r.i32()?, child: r.vid()? },
                2 => TypeRecipe::Vector { count: r.i32()?, blocklen: r.i32()?, stride: r.i32()?, child: r.vid()? },
                x => return r.bad(format!("unknown datatype recipe {x}")),
            };
            Body::Datatype(TypeDesc { recipe, committed })
        }
    };
    Ok((v, Descriptor { real: None, creation_seq, body }))
}

fn put_counts(w: &mut Writer, counts: &[PeerCount]) {
    w.u32(counts.len() as u32);
    for c in counts {
        w.u64(c.sent);
        w.u64(c.received);
    }
}

fn get_counts(r: &mut Reader) -> IResult<Vec<PeerCount>> {
    let n = r.count()?;
    (0..n).map(|_| Ok(PeerCount { sent: r.u64()?, received: r.u64()? })).collect()
}

// ---- image -------------------------------------------------------------

impl CheckpointImage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(&MAGIC);
        w.u32(VERSION);
        w.u32(self.header.world_size);
        w.u32(self.header.rank);
        w.str(&self.header.backend_name);
        w.u64(self.header.creation_seq_high_water);

        let mut s = Writer::default();
        s.u32(self.kind_states.len() as u32);
        for (k, st) in &self.kind_states {
            s.u8(k.tag() as u8);
            s.u32(st.next_free);
            s.u32s(&st.free_list);
        }
        s.u32(self.descriptors.len() as u32);
        for (v, d) in &self.descriptors {
            put_descriptor(&mut s, *v, d);
        }
        w.section(SECTION_DESCRIPTORS, s);

        let mut s = Writer::default();
        s.u32(self.counters.entries.len() as u32);
        for (v, counts) in &self.counters.entries {
            s.vid(*v);
            put_counts(&mut s, counts);
        }
        put_counts(&mut s, &self.counters.retired);
        s.u32(self.counters.ggid_seq.len() as u32);
        for (g, n) in &self.counters.ggid_seq {
            s.u32(*g);
            s.u32(*n);
        }
        w.section(SECTION_COUNTERS, s);

        let mut s = Writer::default();
        s.u32(self.constants.len() as u32);
        for (name, v) in &self.constants {
            s.str(name);
            s.vid(*v);
        }
        w.section(SECTION_CONSTMAP, s);

        let mut s = Writer::default();
        s.u32(self.drained.len() as u32);
        for m in &self.drained {
            s.u32(m.src_world_rank);
            s.i32(m.tag);
            s.u32(m.comm_ggid);
            s.u32(m.comm_ggid_seq);
            s.bytes(&m.payload);
            s.u64(m.arrival_index);
        }
        w.section(SECTION_DRAINED, s);

        let mut s = Writer::default();
        s.buf.extend_from_slice(&self.app_state);
        w.section(SECTION_APPSTATE, s);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> IResult<CheckpointImage> {
        if bytes.len() < 8 {
            return Err(ImageError::Malformed("file shorter than the header".into()));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(ImageError::BadMagic(magic));
        }
        let mut r = Reader::new(&bytes[4..], "header");
        let version = r.u32()?;
        if version != VERSION {
            return Err(ImageError::VersionMismatch { found: version, expected: VERSION });
        }
        let header = ImageHeader {
            world_size: r.u32()?,
            rank: r.u32()?,
            backend_name: r.str()?,
            creation_seq_high_water: r.u64()?,
        };

        let mut bodies: Vec<&[u8]> = Vec::with_capacity(SECTIONS.len());
        for expected in SECTIONS {
            let id = r.u32()?;
            if id != expected {
                return Err(ImageError::Malformed(format!("expected section {expected}, found {id}")));
            }
            let len = r.u64()?;
            if len > (r.buf.len() - r.pos) as u64 {
                return Err(ImageError::TruncatedSection { section: id });
            }
            bodies.push(r.take(len as usize)?);
        }
        r.finish()?;

        let mut s = Reader::new(bodies[0], "descriptors");
        let n = s.count()?;
        let mut kind_states = Vec::with_capacity(n);
        for _ in 0..n {
            let tag = s.u8()? as u32;
            let kind = match ObjectKind::from_tag(tag) {
                Some(k) => k,
                None => return s.bad(format!("unknown kind tag {tag}")),
            };
            kind_states.push((kind, KindState { next_free: s.u32()?, free_list: s.u32s()? }));
        }
        let n = s.count()?;
        let descriptors = (0..n).map(|_| get_descriptor(&mut s)).collect::<IResult<Vec<_>>>()?;
        s.finish()?;

        let mut s = Reader::new(bodies[1], "counters");
        let n = s.count()?;
        let entries = (0..n).map(|_| Ok((s.vid()?, get_counts(&mut s)?))).collect::<IResult<Vec<_>>>()?;
        let retired = get_counts(&mut s)?;
        let n = s.count()?;
        let ggid_seq = (0..n).map(|_| Ok((s.u32()?, s.u32()?))).collect::<IResult<Vec<_>>>()?;
        s.finish()?;
        let counters = CounterSection { entries, retired, ggid_seq };

        let mut s = Reader::new(bodies[2], "constant map");
        let n = s.count()?;
        let constants = (0..n).map(|_| Ok((s.str()?, s.vid()?))).collect::<IResult<Vec<_>>>()?;
        s.finish()?;

        let mut s = Reader::new(bodies[3], "drained messages");
        let n = s.count()?;
        let drained = (0..n)
            .map(|_| {
                Ok(DrainedMessage {
                    src_world_rank: s.u32()?,
                    tag: s.i32()?,
                    comm_ggid: s.u32()?,
                    comm_ggid_seq: s.u32()?,
                    payload: s.bytes()?,
                    arrival_index: s.u64()?,
                })
            })
            .collect::<IResult<Vec<_>>>()?;
        s.finish()?;

        Ok(CheckpointImage {
            header,
            kind_states,
            descriptors,
            counters,
            constants,
            drained,
            app_state: bodies[4].to_vec(),
        })
    }

    /// Write via a temporary file and rename, so readers never observe a
    /// partial image.
    pub fn write(&self, path: &Path) -> IResult<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("mcri.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> IResult<CheckpointImage> {
        CheckpointImage::from_bytes(&fs::read(path)?)
    }
}

pub fn epoch_dir(base: &Path, epoch: u32) -> PathBuf {
    base.join(format!("epoch_{epoch}"))
}

pub fn image_path(base: &Path, epoch: u32, rank: u32) -> PathBuf {
    epoch_dir(base, epoch).join(format!("ckpt_rank{rank}.mcri"))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal() -> CheckpointImage {
        CheckpointImage {
            header: ImageHeader {
                world_size: 1,
                rank: 0,
                backend_name: "int_table".into(),
                creation_seq_high_water: 3,
            },
            kind_states: vec![(ObjectKind::Comm, KindState::default())],
            descriptors: vec![(
                VirtualId::new(ObjectKind::Comm, 0).unwrap(),
                Descriptor {
                    real: None,
                    creation_seq: 0,
                    body: Body::Comm(CommDesc { ggid: 7, ggid_seq: 0, members: vec![0], recipe: CommRecipe::World }),
                },
            )],
            counters: CounterSection { entries: vec![], retired: vec![PeerCount::default()], ggid_seq: vec![(7, 1)] },
            constants: vec![("COMM_WORLD".into(), VirtualId::new(ObjectKind::Comm, 0).unwrap())],
            drained: vec![],
            app_state: b"state".to_vec(),
        }
    }

    #[test]
    fn minimal_round_trip() {
        let img = minimal();
        assert_eq!(CheckpointImage::from_bytes(&img.to_bytes()).unwrap(), img);
    }

    #[test]
    fn corrupt_magic() {
        let mut b = minimal().to_bytes();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(CheckpointImage::from_bytes(&b), Err(ImageError::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn truncated_file() {
        let b = minimal().to_bytes();
        let cut = &b[..b.len() - 2];
        assert!(matches!(
            CheckpointImage::from_bytes(cut),
            Err(ImageError::TruncatedSection { section: SECTION_APPSTATE })
        ));
    }
}
