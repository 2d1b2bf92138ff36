mod common;

use std::sync::Arc;

use common::{on_ranks, populate};
use vidmpi_core::backends::{Source, TagSel, Transport};
use vidmpi_core::checkpoint::{checkpoint, CheckpointImage};
use vidmpi_core::reduce::{self, BuiltinOp, ReductionRegistry};
use vidmpi_core::restart::{load_image_set, restart_with_backend};
use vidmpi_core::typemap::NamedType;
use vidmpi_core::vid::{Body, VidError};
use vidmpi_core::{Error, Runtime};

fn solo(backend: &str) -> Runtime {
    Runtime::init(backend, Arc::new(Transport::new(1)), 0).unwrap()
}

#[test]
fn double_commit_is_rejected() {
    let mut rt = solo("int_table");
    let t = rt.type_contiguous(4, rt.datatype(NamedType::Int)).unwrap();
    rt.type_commit(t).unwrap();
    assert!(matches!(rt.type_commit(t), Err(Error::CommitTwice(v)) if v == t));
}

#[test]
fn testing_a_finished_request_fails() {
    let mut rt = solo("word_handle");
    let byte = rt.datatype(NamedType::Byte);
    let world = rt.comm_world();
    let req = rt.isend(b"hi", 2, byte, 0, 1, world, 0).unwrap();
    rt.wait(req).unwrap();
    assert!(matches!(rt.test(req), Err(Error::TestOnFreed(v)) if v == req));
    let mut buf = [0u8; 2];
    rt.recv(&mut buf, 2, byte, Source::Any, TagSel::Any, world).unwrap();
    rt.finalize().unwrap();
}

#[test]
fn freeing_a_referenced_object_fails() {
    let mut rt = solo("int_table");
    let world = rt.comm_world();
    let dup = rt.comm_dup(world).unwrap();
    let g = rt.comm_group(dup).unwrap();
    assert!(matches!(rt.comm_free(dup), Err(Error::StillReferenced(a, b)) if a == dup && b == g));
    rt.group_free(g).unwrap();
    rt.comm_free(dup).unwrap();

    let inner = rt.type_vector(2, 1, 3, rt.datatype(NamedType::Double)).unwrap();
    let outer = rt.type_contiguous(2, inner).unwrap();
    assert!(matches!(rt.type_free(inner), Err(Error::StillReferenced(..))));
    rt.type_free(outer).unwrap();
    rt.type_free(inner).unwrap();
}

#[test]
fn unknown_reduction_name_fails() {
    let mut rt = solo("lazy_const");
    assert!(matches!(rt.op_create("no_such_fn", true), Err(Error::UnknownFunction(n)) if n == "no_such_fn"));
}

#[test]
fn predefined_objects_cannot_be_freed() {
    let mut rt = solo("int_table");
    let world = rt.comm_world();
    assert!(matches!(rt.comm_free(world), Err(Error::Vid(VidError::FreeingPredefined(_)))));
    let sum = rt.builtin_op(BuiltinOp::Sum);
    assert!(matches!(rt.op_free(sum), Err(Error::Vid(VidError::FreeingPredefined(_)))));
    let int = rt.datatype(NamedType::Int);
    assert!(matches!(rt.type_free(int), Err(Error::Vid(VidError::FreeingPredefined(_)))));
}

#[test]
fn stale_vid_after_free_is_invalid() {
    let mut rt = solo("word_handle");
    let dup = rt.comm_dup(rt.comm_world()).unwrap();
    rt.comm_free(dup).unwrap();
    assert!(matches!(rt.comm_size(dup), Err(Error::Vid(_))));
}

fn scene_images(n: u32) -> (tempfile::TempDir, Vec<CheckpointImage>, u32) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    on_ranks(n, |rank, t| {
        let mut rt = Runtime::with_backend(vidmpi_core::backends::make_backend("int_table").unwrap(), t, rank, reduce::global()).unwrap();
        populate(&mut rt);
        checkpoint(&mut rt, &path, b"").unwrap();
        rt.abandon().unwrap();
    });
    let set = load_image_set(dir.path()).unwrap();
    (dir, set.images, set.epoch)
}

fn restart_images(images: Vec<CheckpointImage>, epoch: u32, reg: Arc<ReductionRegistry>) -> Vec<vidmpi_core::Result<()>> {
    let t = Arc::new(Transport::new(images.len() as u32));
    common::on_transport(t, |rank, t| {
        let b = vidmpi_core::backends::make_backend("word_handle").unwrap();
        restart_with_backend(images[rank as usize].clone(), epoch, b, t, reg.clone()).map(|r| r.runtime.abandon().unwrap())
    })
}

#[test]
fn unfinalized_drained_messages_block_finalize() {
    let (_dir, images, epoch) = scene_images(2);
    let t = Arc::new(Transport::new(2));
    let out = common::on_transport(t, |rank, t| {
        let b = vidmpi_core::backends::make_backend("lazy_const").unwrap();
        let r = restart_with_backend(images[rank as usize].clone(), epoch, b, t, reduce::global()).unwrap();
        assert!(!r.runtime.shadow().is_empty());
        r.runtime.finalize()
    });
    for r in out {
        assert!(matches!(r, Err(Error::ShadowNotEmpty(n)) if n > 0));
    }
}

#[test]
fn replay_without_the_reduction_function_fails() {
    let (_dir, images, epoch) = scene_images(2);
    for r in restart_images(images, epoch, Arc::new(ReductionRegistry::new())) {
        match r {
            Err(Error::ReplayFailure { reason, .. }) => assert!(reason.contains(common::TEST_OP), "{reason}"),
            other => panic!("expected ReplayFailure, got {other:?}"),
        }
    }
}

#[test]
fn tampered_membership_is_caught_by_self_check() {
    let (_dir, mut images, epoch) = scene_images(4);
    for img in &mut images {
        for (_, d) in &mut img.descriptors {
            if let Body::Comm(c) = &mut d.body {
                if matches!(c.recipe, vidmpi_core::vid::CommRecipe::Split { .. }) {
                    c.members.reverse();
                }
            }
        }
    }
    for r in restart_images(images, epoch, reduce::global()) {
        assert!(matches!(r, Err(Error::MembershipMismatch { .. })), "{r:?}");
    }
}

#[test]
fn missing_rank_image_is_reported() {
    let (dir, _images, epoch) = scene_images(4);
    let victim = vidmpi_core::checkpoint::image_path(dir.path(), epoch, 1);
    std::fs::remove_file(victim).unwrap();
    assert!(matches!(load_image_set(dir.path()), Err(Error::ImageSetIncomplete { found: 3, expected: 4 })));
}
