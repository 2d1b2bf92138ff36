//! Message drain.
//!
//! After the first control barrier every send has been enqueued. Pending
//! requests are tested once so the backend can match what it already can.
//! Ranks then exchange per-peer send totals with one `alltoall` and pull
//! every remaining message out through `iprobe`/`recv` until each peer's
//! total is accounted for.

use std::thread;

use crate::backends::{Source, TagSel};
use crate::error::{Error, Result};
use crate::vid::{ObjectKind, RequestKind, VirtualId};
use crate::wrappers::Runtime;
use crate::typemap::NamedType;

use super::DrainedMessage;

/// Probe rounds without reaching the expected totals before giving up.
pub const DRAIN_ROUND_LIMIT: u32 = 10_000;

struct LiveComm {
    vid: VirtualId,
    members: Vec<u32>,
    ggid: u32,
    ggid_seq: u32,
}

/// Test outstanding requests. Sends are driven to completion; receives get
/// one test each.
fn settle_requests(rt: &mut Runtime) -> Result<()> {
    let pending: Vec<(VirtualId, RequestKind)> = rt
        .table
        .iter(ObjectKind::Request)
        .filter_map(|(v, d)| {
            let r = d.as_request()?;
            (d.real.is_some() && !r.completed()).then_some((v, r.kind))
        })
        .collect();
    for (v, kind) in pending {
        let h = rt.real(v, ObjectKind::Request)?;
        let mut rounds = 0;
        loop {
            if let Some(c) = rt.backend.test(h)? {
                rt.note_completion(v, c)?;
                break;
            }
            if kind == RequestKind::Irecv {
                break;
            }
            rounds += 1;
            if rounds >= DRAIN_ROUND_LIMIT {
                return Err(Error::DrainTimeout { expected: 1, received: 0 });
            }
            thread::yield_now();
        }
    }
    Ok(())
}

/// Collect every in-flight message addressed to this rank. Must be called by
/// all ranks between the two control barriers, with the backend in the drain
/// phase and every communicator handle already bound.
pub(crate) fn drain(rt: &mut Runtime) -> Result<Vec<DrainedMessage>> {
    settle_requests(rt)?;

    let comms: Vec<LiveComm> = rt
        .table
        .iter(ObjectKind::Comm)
        .filter_map(|(vid, d)| {
            let c = d.as_comm()?;
            Some(LiveComm { vid, members: c.members.clone(), ggid: c.ggid, ggid_seq: c.ggid_seq })
        })
        .collect();

    let n = rt.world_size as usize;
    let totals = rt.counters.world_totals(|v| comms.iter().find(|c| c.vid == v).map(|c| c.members.as_slice()));
    let send: Vec<u8> = totals.iter().flat_map(|p| p.sent.to_le_bytes()).collect();
    let mut recv = vec![0u8; 8 * n];
    let world = rt.real(rt.comm_world(), ObjectKind::Comm)?;
    rt.backend.alltoall(&send, &mut recv, world)?;

    let mut outstanding = 0u64;
    for (src, chunk) in recv.chunks_exact(8).enumerate() {
        let sent_to_me = u64::from_le_bytes(chunk.try_into().unwrap());
        let received = totals[src].received;
        if received > sent_to_me {
            return Err(Error::DrainTimeout { expected: sent_to_me, received });
        }
        outstanding += sent_to_me - received;
    }

    let byte = rt.real(rt.datatype(NamedType::Byte), ObjectKind::Datatype)?;
    let handles: Vec<_> = comms.iter().map(|c| rt.real(c.vid, ObjectKind::Comm)).collect::<Result<_>>()?;
    let expected = outstanding;
    let mut out = Vec::new();
    let mut rounds = 0;
    while (out.len() as u64) < expected {
        let mut progressed = false;
        for (c, &h) in comms.iter().zip(&handles) {
            while let Some(st) = rt.backend.iprobe(Source::Any, TagSel::Any, h)? {
                let mut payload = vec![0u8; st.bytes];
                let got =
                    rt.backend.recv(&mut payload, st.bytes, byte, Source::Rank(st.source), TagSel::Tag(st.tag), h)?;
                out.push(DrainedMessage {
                    src_world_rank: c.members[got.source as usize],
                    tag: got.tag,
                    comm_ggid: c.ggid,
                    comm_ggid_seq: c.ggid_seq,
                    payload,
                    arrival_index: rt.next_arrival,
                });
                rt.next_arrival += 1;
                progressed = true;
            }
        }
        if !progressed {
            rounds += 1;
            if rounds >= DRAIN_ROUND_LIMIT {
                return Err(Error::DrainTimeout { expected, received: out.len() as u64 });
            }
            thread::yield_now();
        }
    }
    Ok(out)
}
