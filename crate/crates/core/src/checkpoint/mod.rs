//! Coordinated checkpoint: drain in-flight messages, then write one image
//! per rank under `<dir>/epoch_<E>/`.

mod drain;
mod image;

use std::path::{Path, PathBuf};

use crate::backends::Phase;
use crate::error::{Error, Result};
use crate::restart::ShadowEntry;
use crate::typemap::NamedType;
use crate::vid::{ObjectKind, VirtualId};
use crate::wrappers::Runtime;

pub use drain::DRAIN_ROUND_LIMIT;
pub use image::{
    epoch_dir, image_path, CheckpointImage, CounterSection, DrainedMessage, ImageError, ImageHeader, MAGIC,
    SECTION_APPSTATE, SECTION_CONSTMAP, SECTION_COUNTERS, SECTION_DESCRIPTORS, SECTION_DRAINED, VERSION,
};

/// When a run should checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trigger {
    /// After the given application step completes.
    AfterStep(u64),
    /// When any rank sees the transport's checkpoint request flag.
    External,
}

impl Trigger {
    /// Evaluate at a step boundary. `External` is collective: every rank must
    /// call it at the same boundaries.
    pub fn fires(self, rt: &Runtime, completed_step: u64) -> Result<bool> {
        match self {
            Trigger::AfterStep(k) => Ok(completed_step == k),
            Trigger::External => Ok(rt.transport.control_vote(rt.transport.checkpoint_requested())?),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckpointReport {
    pub epoch: u32,
    pub path: PathBuf,
    pub drained: usize,
    /// Messages held by the transport for this rank right after the drain.
    pub transport_after_drain: usize,
}

/// Checkpoint this rank. Collective over all ranks of the session.
///
/// Drained messages are kept in the shadow queue, so a run that continues
/// after the checkpoint receives them as usual.
pub fn checkpoint(rt: &mut Runtime, dir: &Path, app_state: &[u8]) -> Result<CheckpointReport> {
    if !rt.shadow.is_empty() {
        return Err(Error::ShadowNotEmpty(rt.shadow.len()));
    }
    // The drain must not resolve constants, so bind what it touches now.
    let comms: Vec<VirtualId> = rt.table.iter(ObjectKind::Comm).map(|(v, _)| v).collect();
    for v in comms {
        rt.real(v, ObjectKind::Comm)?;
    }
    rt.real(rt.datatype(NamedType::Byte), ObjectKind::Datatype)?;

    rt.transport.control_barrier()?;
    rt.transport.clear_checkpoint_request();
    rt.set_phase(Phase::Drain);
    let drained = drain::drain(rt);
    // No rank sends between the drain and the second barrier, so this count
    // is exact.
    let rank = rt.rank;
    let transport_after_drain = rt.transport.pending_at(rank, |_| true);
    let second = rt.transport.control_barrier();
    rt.set_phase(Phase::Normal);
    let drained = drained?;
    second?;

    let image = capture(rt, &drained, app_state);
    let epoch = rt.epoch;
    let path = image_path(dir, epoch, rank);
    image.write(&path)?;
    rt.epoch += 1;

    let n = drained.len();
    for m in drained {
        let entry = shadow_entry(rt, m)?;
        rt.shadow.push(entry);
    }
    Ok(CheckpointReport { epoch, path, drained: n, transport_after_drain })
}

/// Snapshot the runtime state as an image. No backend calls are made.
pub fn capture(rt: &Runtime, drained: &[DrainedMessage], app_state: &[u8]) -> CheckpointImage {
    let descriptors = rt
        .table
        .iter_all()
        .map(|(v, d)| {
            let mut d = d.clone();
            d.real = None;
            (v, d)
        })
        .collect();
    CheckpointImage {
        header: ImageHeader {
            world_size: rt.world_size,
            rank: rt.rank,
            backend_name: rt.backend.name().to_owned(),
            creation_seq_high_water: rt.table.next_seq(),
        },
        kind_states: ObjectKind::ALL.iter().map(|&k| (k, rt.table.state(k).clone())).collect(),
        descriptors,
        counters: CounterSection {
            entries: rt.counters.entries().map(|(v, c)| (v, c.to_vec())).collect(),
            retired: rt.counters.retired().to_vec(),
            ggid_seq: rt.ggid_seq.iter().map(|(&g, &s)| (g, s)).collect(),
        },
        constants: rt.constants.iter().map(|e| (e.name.to_owned(), e.vid)).collect(),
        drained: drained.to_vec(),
        app_state: app_state.to_vec(),
    }
}

/// Map a drained message onto this session's communicator and comm rank.
pub(crate) fn shadow_entry(rt: &Runtime, m: DrainedMessage) -> Result<ShadowEntry> {
    let found = rt.table.iter(ObjectKind::Comm).find_map(|(v, d)| {
        let c = d.as_comm()?;
        if c.ggid != m.comm_ggid || c.ggid_seq != m.comm_ggid_seq {
            return None;
        }
        let pos = c.members.iter().position(|&w| w == m.src_world_rank)?;
        Some((v, pos as u32))
    });
    let (comm, source) = found.ok_or_else(|| {
        Error::Unsupported(format!(
            "drained message for unknown communicator ggid {:#010x}/{}",
            m.comm_ggid, m.comm_ggid_seq
        ))
    })?;
    Ok(ShadowEntry { comm, source, tag: m.tag, payload: m.payload, arrival_index: m.arrival_index })
}
