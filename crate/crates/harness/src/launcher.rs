//! Runs one app on N rank threads sharing an in-process transport.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use vidmpi_core::backends::Transport;
use vidmpi_core::checkpoint::{self, CheckpointReport};
use vidmpi_core::restart::{load_image_set, restart_rank};
use vidmpi_core::Runtime;

use crate::apps::{AppParams, AppRegistry, MiniApp, StateReader, StateWriter};
use crate::HarnessError;

#[derive(Clone, Debug)]
pub struct LaunchConfig {
    pub app: String,
    pub ranks: u32,
    pub backend: String,
    /// Checkpoint once this step (0-based) has completed.
    pub ckpt_after: Option<u64>,
    pub ckpt_dir: Option<PathBuf>,
    pub seed: u64,
    /// Keep running after the checkpoint instead of exiting.
    pub continue_after_ckpt: bool,
}

impl LaunchConfig {
    pub fn new(app: &str, ranks: u32, backend: &str, seed: u64) -> Self {
        LaunchConfig {
            app: app.to_owned(),
            ranks,
            backend: backend.to_owned(),
            ckpt_after: None,
            ckpt_dir: None,
            seed,
            continue_after_ckpt: false,
        }
    }

    pub fn checkpoint_at(mut self, step: u64, dir: &Path) -> Self {
        self.ckpt_after = Some(step);
        self.ckpt_dir = Some(dir.to_path_buf());
        self
    }
}

struct RankResult {
    output: Option<Vec<u8>>,
    wrapper_calls: u64,
    checkpoint: Option<CheckpointReport>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub app: String,
    pub backend: String,
    pub ranks: u32,
    pub seed: u64,
    /// Present when the run reached the end of the app.
    pub digest: Option<String>,
    /// Final state bytes per rank, when the run completed.
    pub outputs: Vec<Vec<u8>>,
    pub wall: Duration,
    pub wrapper_calls: u64,
    pub checkpoint_dir: Option<PathBuf>,
    pub drained: usize,
    pub transport_after_drain: usize,
    /// Messages left in the transport once every rank has finished.
    pub transport_at_end: usize,
    /// Steps of the app, and the first step executed by this run.
    pub steps: u64,
    pub first_step: u64,
}

impl RunReport {
    pub fn to_kv(&self) -> String {
        let mut lines = vec![
            format!("app={}", self.app),
            format!("backend={}", self.backend),
            format!("ranks={}", self.ranks),
            format!("seed={}", self.seed),
            format!("steps={}", self.steps),
            format!("first_step={}", self.first_step),
            format!("wall_ms={:.3}", self.wall.as_secs_f64() * 1e3),
            format!("wrapper_calls={}", self.wrapper_calls),
        ];
        if let Some(d) = &self.checkpoint_dir {
            lines.push(format!("checkpoint_dir={}", d.display()));
            lines.push(format!("drained={}", self.drained));
            lines.push(format!("transport_after_drain={}", self.transport_after_drain));
        }
        lines.push(format!("transport_at_end={}", self.transport_at_end));
        match &self.digest {
            Some(d) => lines.push(format!("digest={d}")),
            None => lines.push("digest=none".into()),
        }
        lines.join("\n")
    }
}

/// Order-insensitive digest over per-rank outputs.
pub fn digest(outputs: &[Vec<u8>]) -> String {
    let mut per_rank: Vec<Vec<u8>> = outputs
        .iter()
        .enumerate()
        .map(|(r, o)| {
            let mut h = Sha256::new();
            h.update((r as u32).to_le_bytes());
            h.update(o);
            h.finalize().to_vec()
        })
        .collect();
    per_rank.sort();
    let mut h = Sha256::new();
    for d in &per_rank {
        h.update(d);
    }
    hex::encode(h.finalize())
}

fn wrap_state(app: &str, seed: u64, next_step: u64, blob: &[u8]) -> Vec<u8> {
    let mut w = StateWriter::default();
    w.bytes(app.as_bytes()).u64(seed).u64(next_step).bytes(blob);
    w.0
}

struct Envelope {
    app: String,
    seed: u64,
    next_step: u64,
    blob: Vec<u8>,
}

fn unwrap_state(bytes: &[u8]) -> Result<Envelope, HarnessError> {
    let mut r = StateReader::new(bytes);
    let app = String::from_utf8(r.bytes()?).map_err(|_| HarnessError::BadState("app name is not utf-8".into()))?;
    let seed = r.u64()?;
    let next_step = r.u64()?;
    let blob = r.bytes()?;
    r.done()?;
    Ok(Envelope { app, seed, next_step, blob })
}

/// Run `first..steps`, checkpointing as configured, then finish. Returns
/// `None` as output when the run stopped at its checkpoint.
fn drive(
    rt: &mut Runtime,
    app: &mut dyn MiniApp,
    seed: u64,
    first: u64,
    ckpt: Option<(u64, &Path)>,
    continue_after: bool,
) -> Result<(Option<Vec<u8>>, Option<CheckpointReport>), HarnessError> {
    let mut report = None;
    for s in first..app.steps() {
        app.step(rt, s)?;
        if let Some((k, dir)) = ckpt {
            if k == s {
                let state = wrap_state(app.name(), seed, s + 1, &app.save_state());
                report = Some(checkpoint::checkpoint(rt, dir, &state)?);
                if !continue_after {
                    return Ok((None, report));
                }
            }
        }
    }
    Ok((Some(app.finish(rt)?), report))
}

fn join_all<T: Send>(
    ranks: u32,
    body: impl Fn(u32) -> Result<T, HarnessError> + Sync,
) -> Result<Vec<T>, HarnessError> {
    let body = &body;
    thread::scope(|s| {
        let handles: Vec<_> = (0..ranks).map(|r| s.spawn(move || body(r))).collect();
        let mut out = Vec::with_capacity(ranks as usize);
        let mut first_err = None;
        for (r, h) in handles.into_iter().enumerate() {
            match h.join() {
                Ok(Ok(v)) => out.push(v),
                Ok(Err(e)) => {
                    first_err.get_or_insert(e);
                }
                Err(_) => {
                    first_err.get_or_insert(HarnessError::RankPanicked(r as u32));
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    })
}

fn assemble(
    app: &str,
    backend: &str,
    seed: u64,
    steps: u64,
    first_step: u64,
    started: Instant,
    transport: &Transport,
    ranks: Vec<RankResult>,
) -> RunReport {
    let wall = started.elapsed();
    let n = ranks.len() as u32;
    let complete = ranks.iter().all(|r| r.output.is_some());
    let outputs: Vec<Vec<u8>> = ranks.iter().filter_map(|r| r.output.clone()).collect();
    let checkpoint_dir = ranks
        .iter()
        .find_map(|r| r.checkpoint.as_ref())
        .and_then(|c| c.path.parent().map(Path::to_path_buf));
    RunReport {
        app: app.to_owned(),
        backend: backend.to_owned(),
        ranks: n,
        seed,
        digest: complete.then(|| digest(&outputs)),
        outputs: if complete { outputs } else { Vec::new() },
        wall,
        wrapper_calls: ranks.iter().map(|r| r.wrapper_calls).sum(),
        checkpoint_dir,
        drained: ranks.iter().filter_map(|r| r.checkpoint.as_ref()).map(|c| c.drained).sum(),
        transport_after_drain: ranks.iter().filter_map(|r| r.checkpoint.as_ref()).map(|c| c.transport_after_drain).sum(),
        transport_at_end: transport.pending_total(),
        steps,
        first_step,
    }
}

pub fn launch(cfg: &LaunchConfig) -> Result<RunReport, HarnessError> {
    let registry = AppRegistry::default();
    if cfg.ranks == 0 {
        return Err(HarnessError::Config("ranks must be at least 1".into()));
    }
    let params = AppParams { seed: cfg.seed, world_size: cfg.ranks, rank: 0 };
    let steps = registry.create(&cfg.app, params)?.steps();
    if cfg.ckpt_after.is_some() != cfg.ckpt_dir.is_some() {
        return Err(HarnessError::Config("--ckpt-after and --ckpt-dir go together".into()));
    }
    if let Some(k) = cfg.ckpt_after {
        if k >= steps {
            return Err(HarnessError::Config(format!("checkpoint step {k} is past the last step {}", steps - 1)));
        }
    }
    let transport = Arc::new(Transport::new(cfg.ranks));
    let started = Instant::now();
    let results = join_all(cfg.ranks, |rank| {
        let mut rt = Runtime::init(&cfg.backend, transport.clone(), rank)?;
        let mut app = registry.create(&cfg.app, AppParams { seed: cfg.seed, world_size: cfg.ranks, rank })?;
        app.setup(&mut rt)?;
        let ckpt = cfg.ckpt_after.zip(cfg.ckpt_dir.as_deref());
        let (output, checkpoint) = drive(&mut rt, app.as_mut(), cfg.seed, 0, ckpt, cfg.continue_after_ckpt)?;
        let wrapper_calls = rt.wrapper_calls_total();
        if output.is_some() {
            rt.finalize()?;
        } else {
            rt.abandon()?;
        }
        Ok(RankResult { output, wrapper_calls, checkpoint })
    })?;
    Ok(assemble(&cfg.app, &cfg.backend, cfg.seed, steps, 0, started, &transport, results))
}

/// Resume from the latest (or the given) epoch in `dir` on `backend`.
pub fn restart(dir: &Path, backend: &str) -> Result<RunReport, HarnessError> {
    let registry = AppRegistry::default();
    let set = load_image_set(dir)?;
    let n = set.world_size();
    let first = unwrap_state(&set.images[0].app_state)?;
    let steps = registry.create(&first.app, AppParams { seed: first.seed, world_size: n, rank: 0 })?.steps();
    let epoch = set.epoch;
    let images = set.images;
    let transport = Arc::new(Transport::new(n));
    let started = Instant::now();
    let results = join_all(n, |rank| {
        let image = images[rank as usize].clone();
        let back = restart_rank(image, epoch, backend, transport.clone())?;
        let mut rt = back.runtime;
        let env = unwrap_state(&back.app_state)?;
        let mut app = registry.create(&env.app, AppParams { seed: env.seed, world_size: n, rank })?;
        app.load_state(&env.blob)?;
        let (output, checkpoint) = drive(&mut rt, app.as_mut(), env.seed, env.next_step, None, true)?;
        let wrapper_calls = rt.wrapper_calls_total();
        rt.finalize()?;
        Ok(RankResult { output, wrapper_calls, checkpoint })
    })?;
    Ok(assemble(&first.app, backend, first.seed, steps, first.next_step, started, &transport, results))
}
