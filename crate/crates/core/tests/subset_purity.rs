mod common;

use std::sync::Arc;

use common::{finish_scene, on_ranks, on_transport, populate, BACKENDS};
use vidmpi_core::backends::{
    drain_primitives_check, make_backend, Backend, BackendEnv, BackendError, CallLog, Category, Func, FuncSet, Phase,
    RecordingBackend, Transport, CATEGORY_DECODE, DRAIN_ALLOWED,
};
use vidmpi_core::checkpoint::checkpoint;
use vidmpi_core::restart::{load_image_set, restart_with_backend};
use vidmpi_core::{reduce, Error, Runtime};

const REPLAY_ALLOWED: FuncSet = FuncSet::of(&[
    Func::ResolveConstant,
    Func::CommSplit,
    Func::CommDup,
    Func::CommCreate,
    Func::CommGroup,
    Func::GroupIncl,
    Func::TypeContiguous,
    Func::TypeVector,
    Func::TypeCommit,
    Func::OpCreate,
    Func::Irecv,
]);

fn recorded(name: &str, log: &Arc<CallLog>) -> Box<RecordingBackend> {
    Box::new(RecordingBackend::new(make_backend(name).unwrap(), log.clone()))
}

fn outside(used: FuncSet, allowed: FuncSet) -> Vec<Func> {
    used.iter().filter(|f| !allowed.contains(*f)).collect()
}

#[test]
fn drain_and_self_check_stay_inside_their_sets() {
    for (a, b) in [("int_table", "word_handle"), ("word_handle", "lazy_const"), ("lazy_const", "int_table")] {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        let logs: Vec<Arc<CallLog>> = (0..4).map(|_| CallLog::new()).collect();
        let scenes = on_ranks(4, |rank, t| {
            let log = &logs[rank as usize];
            let mut rt = Runtime::with_backend(recorded(a, log), t, rank, reduce::global()).unwrap();
            let scene = populate(&mut rt);
            let report = checkpoint(&mut rt, &path, b"").unwrap();
            assert!(report.drained > 0);
            rt.abandon().unwrap();
            scene
        });
        for log in &logs {
            let used = log.used_in(Phase::Drain);
            assert!(log.calls_in(Phase::Drain) > 0);
            assert_eq!(outside(used, DRAIN_ALLOWED), vec![], "{a}: drain used {used:?}");
        }

        let set = load_image_set(dir.path()).unwrap();
        let logs: Vec<Arc<CallLog>> = (0..4).map(|_| CallLog::new()).collect();
        let t = Arc::new(Transport::new(4));
        on_transport(t, |rank, t| {
            let log = &logs[rank as usize];
            let image = set.images[rank as usize].clone();
            let back = restart_with_backend(image, set.epoch, recorded(b, log), t, reduce::global()).unwrap();
            let mut rt = back.runtime;
            finish_scene(&mut rt, &scenes[rank as usize]);
            rt.finalize().unwrap();
        });
        for log in &logs {
            let check = log.used_in(Phase::SelfCheck);
            assert!(log.calls_in(Phase::SelfCheck) > 0);
            assert_eq!(outside(check, CATEGORY_DECODE), vec![], "{b}: self-check used {check:?}");
            let replay = log.used_in(Phase::Replay);
            assert_eq!(outside(replay, REPLAY_ALLOWED), vec![], "{b}: replay used {replay:?}");
        }
    }
}

#[test]
fn every_model_backend_passes_the_primitives_check() {
    for name in BACKENDS {
        let reports = on_ranks(3, |rank, t| {
            let mut b = make_backend(name).unwrap();
            b.init(BackendEnv { world_size: 3, rank, transport: t, reductions: reduce::global() }).unwrap();
            let r = drain_primitives_check(b.as_mut());
            b.finalize().unwrap();
            r
        });
        for r in reports {
            assert!(r.passed(), "{name}: {r}");
            assert!(r.to_string().contains("category1=pass"));
        }
    }
}

#[test]
fn withheld_function_fails_its_category_and_the_init_gate() {
    for (f, cat) in [(Func::Iprobe, Category::Pending), (Func::TypeGetContents, Category::Decode), (Func::Alltoall, Category::Share)] {
        let reports = on_ranks(2, |rank, t| {
            let mut b = RecordingBackend::new(make_backend("int_table").unwrap(), CallLog::new()).without(f);
            b.init(BackendEnv { world_size: 2, rank, transport: t, reductions: reduce::global() }).unwrap();
            drain_primitives_check(&mut b)
        });
        for r in reports {
            assert!(!r.get(cat).passed(), "{f:?}: {r}");
            assert_eq!(r.get(cat).missing, vec![f]);
            assert!(matches!(r.violation(), Some(BackendError::SubsetViolation(g)) if g == f));
        }
        let t = Arc::new(Transport::new(1));
        let b = RecordingBackend::new(make_backend("word_handle").unwrap(), CallLog::new()).without(f);
        let err = Runtime::with_backend(Box::new(b), t, 0, reduce::global()).err().unwrap();
        assert!(matches!(err, Error::Backend(BackendError::SubsetViolation(g)) if g == f));
    }
}
