use std::collections::HashMap;
use std::process::{Command, Output};

fn vidmpi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidmpi")).args(args).output().unwrap()
}

fn kv(out: &Output) -> HashMap<String, String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

#[test]
fn launch_checkpoint_restart_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let full = vidmpi(&["launch", "--app", "halo", "--ranks", "5", "--backend", "lazy_const", "--seed", "9"]);
    assert!(full.status.success());
    let full = kv(&full);
    assert_eq!(full["status"], "ok");

    let stop = vidmpi(&[
        "launch", "--app", "halo", "--ranks", "5", "--backend", "int_table", "--seed", "9", "--ckpt-after", "2", "--ckpt-dir", d,
    ]);
    assert!(stop.status.success());
    assert_eq!(kv(&stop)["digest"], "none");

    let resumed = vidmpi(&["restart", "--ckpt-dir", d, "--backend", "word_handle"]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stdout));
    let resumed = kv(&resumed);
    assert_eq!(resumed["first_step"], "3");
    assert_eq!(resumed["digest"], full["digest"]);
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let empty = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["restart", "--ckpt-dir", empty.path().to_str().unwrap(), "--backend", "int_table"],
        &["launch", "--app", "nope", "--ranks", "2", "--backend", "int_table"],
        &["launch", "--app", "ring", "--ranks", "2", "--backend", "nope"],
        &["launch", "--app", "ring", "--ranks", "2", "--backend", "int_table", "--ckpt-after", "99", "--ckpt-dir", "/tmp"],
    ];
    for args in cases {
        let out = vidmpi(args);
        assert!(!out.status.success(), "{args:?}");
        let kv = kv(&out);
        assert_eq!(kv.get("status").map(String::as_str), Some("error"), "{args:?}");
        assert!(kv.contains_key("error"));
    }
}

#[test]
fn bench_reports_ratio() {
    let out = vidmpi(&["bench", "--iters", "2000", "--backend", "word_handle"]);
    assert!(out.status.success());
    let kv = kv(&out);
    assert!(kv["overhead_ratio"].parse::<f64>().unwrap() > 0.0);
    assert_eq!(kv["counts_match"], "true");
}
