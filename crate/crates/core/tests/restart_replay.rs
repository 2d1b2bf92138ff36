mod common;

use common::{finish_scene, on_ranks, populate, restart_all, BACKENDS};
use vidmpi_core::backends::{make_backend, Source, TagSel};
use vidmpi_core::checkpoint::checkpoint;
use vidmpi_core::reduce;
use vidmpi_core::typemap::NamedType;
use vidmpi_core::vid::{ObjectKind, VirtualId};
use vidmpi_core::Runtime;

const PER_PEER: u32 = 6;
const TAG: i32 = 7;

fn spray(rt: &mut Runtime, comm: VirtualId) {
    let byte = rt.datatype(NamedType::Byte);
    let size = rt.comm_size(comm).unwrap();
    let me = rt.comm_rank(comm).unwrap();
    for seq in 0..PER_PEER {
        for peer in (0..size).filter(|&p| p != me) {
            let msg = [me.to_le_bytes(), seq.to_le_bytes()].concat();
            rt.send(&msg, 8, byte, peer, TAG, comm).unwrap();
        }
    }
}

fn collect(rt: &mut Runtime, comm: VirtualId) {
    let byte = rt.datatype(NamedType::Byte);
    let size = rt.comm_size(comm).unwrap();
    let me = rt.comm_rank(comm).unwrap();
    for peer in (0..size).filter(|&p| p != me) {
        for seq in 0..PER_PEER {
            let mut buf = [0u8; 8];
            rt.recv(&mut buf, 8, byte, Source::Rank(peer), TagSel::Tag(TAG), comm).unwrap();
            assert_eq!(u32::from_le_bytes(buf[..4].try_into().unwrap()), peer);
            assert_eq!(u32::from_le_bytes(buf[4..].try_into().unwrap()), seq, "channel {peer}->{me} out of order");
        }
    }
    let mut probe = rt.iprobe(Source::Any, TagSel::Tag(TAG), comm).unwrap();
    assert!(probe.take().is_none(), "duplicate delivery");
}

#[test]
fn scene_survives_every_backend_pair() {
    for a in BACKENDS {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        let scenes = on_ranks(4, |rank, t| {
            let mut rt = Runtime::with_backend(make_backend(a).unwrap(), t, rank, reduce::global()).unwrap();
            let s = populate(&mut rt);
            checkpoint(&mut rt, &path, b"").unwrap();
            rt.abandon().unwrap();
            s
        });
        for b in BACKENDS {
            let restarted = restart_all(dir.path(), b, reduce::global());
            let runtimes: Vec<_> = restarted.into_iter().map(|r| std::sync::Mutex::new(Some(r.unwrap().runtime))).collect();
            let t = runtimes[0].lock().unwrap().as_ref().unwrap().transport().clone();
            common::on_transport(t, |rank, _| {
                let mut rt = runtimes[rank as usize].lock().unwrap().take().unwrap();
                assert_eq!(rt.backend_name(), b);
                assert_eq!(rt.epoch(), 1);
                finish_scene(&mut rt, &scenes[rank as usize]);
                rt.finalize().unwrap();
            });
        }
    }
}

#[test]
fn continuing_after_a_checkpoint_sees_drained_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    on_ranks(4, |rank, t| {
        let mut rt = Runtime::init("word_handle", t, rank).unwrap();
        let s = populate(&mut rt);
        let rep = checkpoint(&mut rt, &path, b"").unwrap();
        assert_eq!(rep.transport_after_drain, 0);
        finish_scene(&mut rt, &s);
        let rep = checkpoint(&mut rt, &path, b"").unwrap();
        assert_eq!(rep.epoch, 1);
        assert_eq!(rep.drained, 0);
        rt.finalize().unwrap();
    });
}

#[test]
fn drained_messages_arrive_exactly_once_in_send_order() {
    const N: u32 = 5;
    for a in BACKENDS {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        on_ranks(N, |rank, t| {
            let mut rt = Runtime::with_backend(make_backend(a).unwrap(), t, rank, reduce::global()).unwrap();
            let world = rt.comm_world();
            let half = rt.comm_split(world, (rank < 2) as i32, -(rank as i32)).unwrap();
            spray(&mut rt, world);
            spray(&mut rt, half);
            let rep = checkpoint(&mut rt, &path, b"").unwrap();
            let half_peers = rt.comm_size(half).unwrap() - 1;
            assert_eq!(rep.drained, (PER_PEER * (N - 1 + half_peers)) as usize);
            assert_eq!(rep.transport_after_drain, 0);
            assert_eq!(rt.transport().pending_at(rank, |_| true), 0);
            rt.abandon().unwrap();
        });
        for b in BACKENDS {
            let restarted = restart_all(dir.path(), b, reduce::global());
            let runtimes: Vec<_> = restarted.into_iter().map(|r| std::sync::Mutex::new(Some(r.unwrap().runtime))).collect();
            let t = runtimes[0].lock().unwrap().as_ref().unwrap().transport().clone();
            common::on_transport(t, |rank, _| {
                let mut rt = runtimes[rank as usize].lock().unwrap().take().unwrap();
                let world = rt.comm_world();
                let half = rt
                    .table()
                    .iter(ObjectKind::Comm)
                    .find(|(v, _)| !v.is_predefined())
                    .map(|(v, _)| v)
                    .unwrap();
                collect(&mut rt, world);
                collect(&mut rt, half);
                assert!(rt.shadow().is_empty());
                rt.finalize().unwrap();
            });
        }
    }
}
