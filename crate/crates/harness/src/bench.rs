//! Self-send/receive loop timed on the bare backend and through the
//! wrappers, plus probe-count measurements on the descriptor table.

use std::sync::Arc;
use std::time::{Duration, Instant};

use vidmpi_core::backends::{make_backend, Backend, BackendEnv, CallLog, Func, RecordingBackend, Source, TagSel, Transport};
use vidmpi_core::reduce;
use vidmpi_core::typemap::NamedType;
use vidmpi_core::vid::{Body, DescriptorTable, TypeDesc, TypeRecipe, VirtualId};
use vidmpi_core::Runtime;

use crate::HarnessError;

const TRIALS: usize = 3;

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub backend: String,
    pub iters: u64,
    pub direct: Duration,
    pub wrapped: Duration,
    /// Probes per `vid_to_real` on tables holding 10 and 100,000 entries.
    pub probes_small: f64,
    pub probes_large: f64,
    /// Probes per translated argument inside the wrapped loop.
    pub probes_in_loop: f64,
    pub wrapper_send: u64,
    pub wrapper_recv: u64,
    pub backend_send: u64,
    pub backend_recv: u64,
}

impl BenchReport {
    pub fn ratio(&self) -> f64 {
        self.wrapped.as_secs_f64() / self.direct.as_secs_f64()
    }

    pub fn counts_match(&self) -> bool {
        self.wrapper_send == self.backend_send && self.wrapper_recv == self.backend_recv
    }

    pub fn to_kv(&self) -> String {
        [
            format!("backend={}", self.backend),
            format!("iters={}", self.iters),
            format!("direct_ns_per_iter={:.1}", self.direct.as_secs_f64() * 1e9 / self.iters as f64),
            format!("wrapped_ns_per_iter={:.1}", self.wrapped.as_secs_f64() * 1e9 / self.iters as f64),
            format!("overhead_ratio={:.4}", self.ratio()),
            format!("probes_per_lookup_10={:.3}", self.probes_small),
            format!("probes_per_lookup_100000={:.3}", self.probes_large),
            format!("probes_per_lookup_loop={:.3}", self.probes_in_loop),
            format!("wrapper_calls_send={}", self.wrapper_send),
            format!("wrapper_calls_recv={}", self.wrapper_recv),
            format!("backend_calls_send={}", self.backend_send),
            format!("backend_calls_recv={}", self.backend_recv),
            format!("counts_match={}", self.counts_match()),
        ]
        .join("\n")
    }
}

fn backend(name: &str) -> Result<Box<dyn Backend>, HarnessError> {
    make_backend(name).ok_or_else(|| HarnessError::Config(format!("unknown backend `{name}`")))
}

fn direct_loop(name: &str, iters: u64) -> Result<Duration, HarnessError> {
    let mut b = backend(name)?;
    let transport = Arc::new(Transport::new(1));
    b.init(BackendEnv { world_size: 1, rank: 0, transport, reductions: reduce::global() })
        .map_err(vidmpi_core::Error::from)?;
    let world = b.resolve_constant("COMM_WORLD").map_err(vidmpi_core::Error::from)?;
    let int = b.resolve_constant("INT").map_err(vidmpi_core::Error::from)?;
    let mut buf = [0u8; 4];
    let start = Instant::now();
    for i in 0..iters {
        let v = (i as u32).to_le_bytes();
        b.send(&v, 1, int, 0, 0, world).map_err(vidmpi_core::Error::from)?;
        b.recv(&mut buf, 1, int, Source::Rank(0), TagSel::Tag(0), world).map_err(vidmpi_core::Error::from)?;
    }
    let t = start.elapsed();
    std::hint::black_box(buf);
    b.finalize().map_err(vidmpi_core::Error::from)?;
    Ok(t)
}

fn wrapped_loop(rt: &mut Runtime, iters: u64) -> Result<Duration, HarnessError> {
    let world = rt.comm_world();
    let int = rt.datatype(NamedType::Int);
    let mut buf = [0u8; 4];
    let start = Instant::now();
    for i in 0..iters {
        let v = (i as u32).to_le_bytes();
        rt.send(&v, 1, int, 0, 0, world)?;
        rt.recv(&mut buf, 1, int, Source::Rank(0), TagSel::Tag(0), world)?;
    }
    let t = start.elapsed();
    std::hint::black_box(buf);
    Ok(t)
}

/// Average probes per lookup on a table populated with `n` datatypes.
pub fn probes_per_lookup(n: u32) -> f64 {
    let mut t = DescriptorTable::new();
    let mut vids: Vec<VirtualId> = Vec::with_capacity(n as usize);
    for i in 0..n {
        let body = Body::Datatype(TypeDesc { recipe: TypeRecipe::Named(NamedType::Int), committed: true });
        let h = vidmpi_core::backends::BackendHandle::w32(i + 1);
        vids.push(t.alloc(Some(h), body).expect("table has room"));
    }
    t.reset_probes();
    let step = (vids.len() / 1000).max(1);
    let sample: Vec<VirtualId> = vids.iter().step_by(step).copied().collect();
    for v in &sample {
        std::hint::black_box(t.vid_to_real(*v).expect("live vid"));
    }
    t.probes() as f64 / sample.len() as f64
}

pub fn bench(iters: u64, name: &str) -> Result<BenchReport, HarnessError> {
    let transport = Arc::new(Transport::new(1));
    let mut rt = Runtime::init(name, transport, 0)?;
    // warm both paths once
    direct_loop(name, iters.min(10_000))?;
    wrapped_loop(&mut rt, iters.min(10_000))?;

    let mut direct = Duration::MAX;
    let mut wrapped = Duration::MAX;
    for _ in 0..TRIALS {
        direct = direct.min(direct_loop(name, iters)?);
        wrapped = wrapped.min(wrapped_loop(&mut rt, iters)?);
    }
    rt.finalize()?;

    // Bookkeeping run: wrapper counters against an instrumented backend.
    let log = CallLog::new();
    let rec = RecordingBackend::new(backend(name)?, log.clone()).counts_only();
    let mut rt = Runtime::with_backend(Box::new(rec), Arc::new(Transport::new(1)), 0, reduce::global())?;
    let send0 = rt.wrapper_calls(Func::Send);
    let recv0 = rt.wrapper_calls(Func::Recv);
    let (bsend0, brecv0) = (log.count(Func::Send), log.count(Func::Recv));
    rt.table().reset_probes();
    wrapped_loop(&mut rt, iters)?;
    // each send and recv translates a datatype and a communicator
    let probes_in_loop = rt.table().probes() as f64 / (4 * iters) as f64;
    let report = BenchReport {
        backend: name.to_owned(),
        iters,
        direct,
        wrapped,
        probes_small: probes_per_lookup(10),
        probes_large: probes_per_lookup(100_000),
        probes_in_loop,
        wrapper_send: rt.wrapper_calls(Func::Send) - send0,
        wrapper_recv: rt.wrapper_calls(Func::Recv) - recv0,
        backend_send: log.count(Func::Send) - bsend0,
        backend_recv: log.count(Func::Recv) - brecv0,
    };
    rt.finalize()?;
    Ok(report)
}
