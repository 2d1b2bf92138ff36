mod common;

use std::fs;

use common::{on_ranks, populate, restart_all, BACKENDS};
use proptest::prelude::*;
use vidmpi_core::checkpoint::{
    capture, checkpoint, CheckpointImage, DrainedMessage, ImageError, SECTION_DESCRIPTORS, VERSION,
};
use vidmpi_core::restart::load_image_set;
use vidmpi_core::{reduce, Error, Runtime};

fn scene_images(backend: &str) -> (tempfile::TempDir, Vec<CheckpointImage>) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    on_ranks(4, |rank, t| {
        let mut rt = Runtime::init(backend, t, rank).unwrap();
        populate(&mut rt);
        checkpoint(&mut rt, &path, b"app").unwrap();
        rt.abandon().unwrap();
    });
    let set = load_image_set(dir.path()).unwrap();
    (dir, set.images)
}

#[test]
fn scene_images_round_trip_on_every_backend() {
    for backend in BACKENDS {
        let (_dir, images) = scene_images(backend);
        assert_eq!(images.len(), 4);
        for img in &images {
            assert_eq!(img.header.backend_name, backend);
            let again = CheckpointImage::from_bytes(&img.to_bytes()).unwrap();
            assert_eq!(&again, img);
            assert!(img.descriptors.iter().all(|(_, d)| d.real.is_none()));
            assert!(!img.drained.is_empty());
        }
    }
}

#[test]
fn capture_matches_written_image() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    on_ranks(2, |rank, t| {
        let mut rt = Runtime::init("word_handle", t, rank).unwrap();
        rt.barrier(rt.comm_world()).unwrap();
        let before = capture(&rt, &[], b"s");
        checkpoint(&mut rt, &path, b"s").unwrap();
        let written = CheckpointImage::read(&vidmpi_core::checkpoint::image_path(&path, 0, rank)).unwrap();
        assert_eq!(before, written);
        rt.finalize().unwrap();
    });
}

fn sample() -> Vec<u8> {
    let (_dir, images) = scene_images("int_table");
    images[1].to_bytes()
}

#[test]
fn corrupt_magic_is_bad_magic() {
    let mut b = sample();
    b[0] = b'X';
    assert!(matches!(CheckpointImage::from_bytes(&b), Err(ImageError::BadMagic(_))));
}

#[test]
fn version_bump_is_version_mismatch() {
    let mut b = sample();
    b[4..8].copy_from_slice(&(VERSION + 1).to_le_bytes());
    assert!(matches!(
        CheckpointImage::from_bytes(&b),
        Err(ImageError::VersionMismatch { found, expected }) if found == VERSION + 1 && expected == VERSION
    ));
}

#[test]
fn truncation_inside_first_section_is_reported() {
    let b = sample();
    let name_len = u32::from_le_bytes(b[16..20].try_into().unwrap()) as usize;
    let first_section = 20 + name_len + 8;
    let len = u64::from_le_bytes(b[first_section + 4..first_section + 12].try_into().unwrap()) as usize;
    let cut = &b[..first_section + 12 + len / 2];
    assert!(matches!(
        CheckpointImage::from_bytes(cut),
        Err(ImageError::TruncatedSection { section }) if section == SECTION_DESCRIPTORS
    ));
}

#[test]
fn trailing_garbage_is_malformed() {
    let mut b = sample();
    b.push(0);
    assert!(matches!(CheckpointImage::from_bytes(&b), Err(ImageError::Malformed(_))));
}

#[test]
fn corrupt_file_fails_restart_with_named_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    on_ranks(2, |rank, t| {
        let mut rt = Runtime::init("int_table", t, rank).unwrap();
        checkpoint(&mut rt, &path, b"").unwrap();
        rt.finalize().unwrap();
    });
    let f = dir.path().join("epoch_0/ckpt_rank1.mcri");
    let mut b = fs::read(&f).unwrap();
    b[..4].copy_from_slice(b"NOPE");
    fs::write(&f, b).unwrap();
    assert!(matches!(load_image_set(dir.path()), Err(Error::Image(ImageError::BadMagic(_)))));
}

#[test]
fn missing_rank_file_is_incomplete() {
    let (dir, _) = scene_images("lazy_const");
    fs::remove_file(dir.path().join("epoch_0/ckpt_rank2.mcri")).unwrap();
    assert!(matches!(load_image_set(dir.path()), Err(Error::ImageSetIncomplete { found: 3, expected: 4 })));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_image_set(empty.path()), Err(Error::ImageSetIncomplete { found: 0, .. })));
}

#[test]
fn restarted_world_checkpoints_to_the_next_epoch() {
    let (dir, _) = scene_images("int_table");
    let back = restart_all(dir.path(), "word_handle", reduce::global());
    let path = dir.path().to_path_buf();
    let runtimes: Vec<_> = back.into_iter().map(|r| r.unwrap().runtime).collect();
    let t = runtimes[0].transport().clone();
    let cells: Vec<_> = runtimes.into_iter().map(|r| std::sync::Mutex::new(Some(r))).collect();
    common::on_transport(t, |rank, _| {
        let mut rt = cells[rank as usize].lock().unwrap().take().unwrap();
        assert_eq!(rt.epoch(), 1);
        // drained messages still wait in the shadow queue
        assert!(matches!(checkpoint(&mut rt, &path, b""), Err(Error::ShadowNotEmpty(_))));
        rt.abandon().unwrap();
    });
}

fn drained() -> impl Strategy<Value = DrainedMessage> {
    (any::<u32>(), any::<i32>(), any::<u32>(), any::<u32>(), proptest::collection::vec(any::<u8>(), 0..40), any::<u64>())
        .prop_map(|(src_world_rank, tag, comm_ggid, comm_ggid_seq, payload, arrival_index)| DrainedMessage {
            src_world_rank,
            tag,
            comm_ggid,
            comm_ggid_seq,
            payload,
            arrival_index,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn drained_and_app_state_round_trip(
        msgs in proptest::collection::vec(drained(), 0..20),
        state in proptest::collection::vec(any::<u8>(), 0..200),
        cut in any::<prop::sample::Index>(),
    ) {
        let t = std::sync::Arc::new(vidmpi_core::backends::Transport::new(1));
        let rt = Runtime::init("int_table", t, 0).unwrap();
        let img = capture(&rt, &msgs, &state);
        let bytes = img.to_bytes();
        prop_assert_eq!(CheckpointImage::from_bytes(&bytes).unwrap(), img);
        // any proper prefix is rejected
        let n = cut.index(bytes.len());
        prop_assert!(CheckpointImage::from_bytes(&bytes[..n]).is_err());
        rt.finalize().unwrap();
    }
}
