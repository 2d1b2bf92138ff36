#![allow(dead_code)]

use std::sync::Arc;
use std::thread;

use vidmpi_core::backends::Transport;

/// Run `f` on `n` rank threads sharing one transport and collect the
/// per-rank results in rank order.
pub fn on_ranks<T: Send>(n: u32, f: impl Fn(u32, Arc<Transport>) -> T + Sync) -> Vec<T> {
    let transport = Arc::new(Transport::new(n));
    on_transport(transport, f)
}

pub fn on_transport<T: Send>(transport: Arc<Transport>, f: impl Fn(u32, Arc<Transport>) -> T + Sync) -> Vec<T> {
    let n = transport.world_size();
    let f = &f;
    thread::scope(|s| {
        let hs: Vec<_> = (0..n)
            .map(|r| {
                let t = transport.clone();
                s.spawn(move || f(r, t))
            })
            .collect();
        hs.into_iter().map(|h| h.join().expect("rank thread panicked")).collect()
    })
}

pub const BACKENDS: [&str; 3] = ["int_table", "word_handle", "lazy_const"];

/// Reference FNV-1a (32-bit) over the little-endian bytes of each member.
pub fn fnv1a_oracle(members: &[u32]) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for m in members {
        for b in m.to_le_bytes() {
            h ^= u32::from(b);
            h = h.wrapping_mul(16_777_619);
        }
    }
    h
}

use vidmpi_core::backends::{Source, TagSel};
use vidmpi_core::reduce;
use vidmpi_core::restart::{load_image_set, restart_with_backend, Restarted};
use vidmpi_core::typemap::NamedType;
use vidmpi_core::vid::VirtualId;
use vidmpi_core::Runtime;

fn test_sum(elem: NamedType, input: &[u8], inout: &mut [u8]) {
    assert_eq!(elem, NamedType::Int64);
    for (a, b) in input.chunks_exact(8).zip(inout.chunks_exact_mut(8)) {
        let x = i64::from_le_bytes(a.try_into().unwrap());
        let y = i64::from_le_bytes((&*b).try_into().unwrap());
        b.copy_from_slice(&(x + y).to_le_bytes());
    }
}

pub const TEST_OP: &str = "test_sum";
pub const LATE_TAG: i32 = 999;

/// Objects of every kind plus traffic in flight, as created by [`populate`].
#[derive(Clone, Copy, Debug)]
pub struct Scene {
    pub split: VirtualId,
    pub dup: VirtualId,
    pub group: VirtualId,
    pub reversed: VirtualId,
    pub rev_comm: VirtualId,
    pub column: VirtualId,
    pub nested: VirtualId,
    pub op: VirtualId,
    /// Receive for a message that is only sent after the checkpoint.
    pub late_recv: VirtualId,
    /// Send to the right neighbour that nobody has received yet.
    pub pending_send: VirtualId,
}

/// Build the scene. Collective over the world.
pub fn populate(rt: &mut Runtime) -> Scene {
    reduce::global().register(TEST_OP, test_sum);
    let n = rt.world_size();
    let me = rt.rank();
    let world = rt.comm_world();
    let byte = rt.datatype(NamedType::Byte);
    let double = rt.datatype(NamedType::Double);
    let split = rt.comm_split(world, (me % 2) as i32, me as i32).unwrap();
    let dup = rt.comm_dup(split).unwrap();
    let group = rt.comm_group(world).unwrap();
    let rev: Vec<u32> = (0..n).rev().collect();
    let reversed = rt.group_incl(group, &rev).unwrap();
    let rev_comm = rt.comm_create(world, reversed).unwrap();
    let column = rt.type_vector(3, 2, 5, double).unwrap();
    rt.type_commit(column).unwrap();
    let nested = rt.type_contiguous(2, column).unwrap();
    let op = rt.op_create(TEST_OP, true).unwrap();
    let left = (me + n - 1) % n;
    let right = (me + 1) % n;
    let late_recv = rt.irecv(8, byte, Source::Rank(left), TagSel::Tag(LATE_TAG), world, 1).unwrap();
    let pending_send = rt.isend(&[me as u8; 5], 5, byte, right, 5, world, 2).unwrap();
    let (dr, ds) = (rt.comm_rank(dup).unwrap(), rt.comm_size(dup).unwrap());
    for i in 0..3u8 {
        rt.send(&[me as u8, i], 2, byte, (dr + ds - 1) % ds, 6, dup).unwrap();
    }
    Scene { split, dup, group, reversed, rev_comm, column, nested, op, late_recv, pending_send }
}

/// Consume the scene's traffic and check every payload. Collective.
pub fn finish_scene(rt: &mut Runtime, s: &Scene) {
    let n = rt.world_size();
    let me = rt.rank();
    let world = rt.comm_world();
    let byte = rt.datatype(NamedType::Byte);
    let left = (me + n - 1) % n;
    let right = (me + 1) % n;
    rt.wait(s.pending_send).unwrap();
    let mut buf = [0u8; 8];
    let st = rt.recv(&mut buf, 8, byte, Source::Rank(left), TagSel::Tag(5), world).unwrap();
    assert_eq!(&buf[..st.bytes], &[left as u8; 5]);
    // in `dup`, comm ranks differ from world ranks
    let dup_members = rt.comm_members(s.dup).unwrap();
    let dr = dup_members.iter().position(|&w| w == me).unwrap();
    let src = (dr + 1) % dup_members.len();
    for i in 0..3u8 {
        let st = rt.recv(&mut buf, 8, byte, Source::Rank(src as u32), TagSel::Tag(6), s.dup).unwrap();
        assert_eq!(&buf[..st.bytes], &[dup_members[src] as u8, i]);
    }
    rt.send(&(me as u64).to_le_bytes(), 8, byte, right, LATE_TAG, world).unwrap();
    let c = rt.wait(s.late_recv).unwrap();
    assert_eq!(c.data.unwrap(), (left as u64).to_le_bytes());

    let mut x = (me as i64 + 1).to_le_bytes();
    rt.allreduce(&mut x, 1, rt.datatype(NamedType::Int64), s.op, s.rev_comm).unwrap();
    assert_eq!(i64::from_le_bytes(x), (n as i64) * (n as i64 + 1) / 2);
    assert_eq!(rt.comm_members(s.rev_comm).unwrap(), (0..n).rev().collect::<Vec<_>>());
}

/// Restart every rank of the image set in `dir` on `backend`.
pub fn restart_all(dir: &std::path::Path, backend: &str, reductions: Arc<reduce::ReductionRegistry>) -> Vec<vidmpi_core::Result<Restarted>> {
    let set = load_image_set(dir).unwrap();
    let epoch = set.epoch;
    let images = set.images;
    let t = Arc::new(Transport::new(images.len() as u32));
    on_transport(t, |rank, t| {
        let b = vidmpi_core::backends::make_backend(backend).unwrap();
        restart_with_backend(images[rank as usize].clone(), epoch, b, t, reductions.clone())
    })
}
