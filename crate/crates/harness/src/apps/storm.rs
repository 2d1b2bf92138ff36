//! Seeded random point-to-point traffic. Messages sent in step `s` are only
//! received in step `s + 1`, so every step boundary has traffic in flight.
//! The first message of each sender per step uses a step-specific tag and is
//! matched by a receive posted one step earlier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidmpi_core::backends::{Source, TagSel};
use vidmpi_core::typemap::NamedType;
use vidmpi_core::vid::VirtualId;
use vidmpi_core::Runtime;

use super::{AppParams, AppResult, MiniApp, StateReader, StateWriter};

const STEPS: u64 = 6;
const PREPOSTED_TAG: i32 = 1000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StormMessage {
    pub src: u32,
    pub dst: u32,
    pub tag: i32,
    /// Position in the sender's sequence for this step.
    pub index: u32,
    pub payload: Vec<u8>,
}

impl StormMessage {
    fn preposted(&self) -> bool {
        self.index == 0
    }
}

/// Every message of one step, ordered by sender then send order.
pub fn storm_plan(seed: u64, world_size: u32, step: u64) -> Vec<StormMessage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut out = Vec::new();
    for src in 0..world_size {
        let k = rng.gen_range(15..=22);
        for index in 0..k {
            let dst = rng.gen_range(0..world_size);
            let tag = if index == 0 { PREPOSTED_TAG + step as i32 } else { rng.gen_range(0..4) };
            let len = rng.gen_range(1..=48);
            let payload = (0..len).map(|_| rng.gen()).collect();
            out.push(StormMessage { src, dst, tag, index, payload });
        }
    }
    out
}

pub fn storm_steps() -> u64 {
    STEPS
}

pub struct Storm {
    p: AppParams,
    sends: Vec<VirtualId>,
    /// Receives posted for the next step's first messages: (request, source).
    preposted: Vec<(VirtualId, u32)>,
    received: u64,
    mismatches: u64,
    hash: u64,
}

impl Storm {
    pub fn new(p: AppParams) -> Self {
        Storm { p, sends: Vec::new(), preposted: Vec::new(), received: 0, mismatches: 0, hash: 0xcbf2_9ce4_8422_2325 }
    }

    fn absorb(&mut self, expected: &StormMessage, src: u32, tag: i32, payload: &[u8]) {
        self.received += 1;
        if src != expected.src || tag != expected.tag || payload != expected.payload.as_slice() {
            self.mismatches += 1;
        }
        for b in src.to_le_bytes().iter().chain(&tag.to_le_bytes()).chain(payload) {
            self.hash = (self.hash ^ *b as u64).wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn complete_sends(&mut self, rt: &mut Runtime) -> AppResult<()> {
        for r in std::mem::take(&mut self.sends) {
            rt.wait(r)?;
        }
        Ok(())
    }

    /// Receive what `step` sent to this rank, apart from preposted messages.
    fn receive_step(&mut self, rt: &mut Runtime, step: u64) -> AppResult<()> {
        let world = rt.comm_world();
        let byte = rt.datatype(NamedType::Byte);
        let plan = storm_plan(self.p.seed, self.p.world_size, step);
        let me = self.p.rank;
        let mine = plan.iter().filter(|m| m.dst == me && !m.preposted());
        for (i, m) in mine.enumerate() {
            let mut buf = vec![0u8; 64];
            let (src, tag, len) = if i % 2 == 0 {
                let st = rt.recv(&mut buf, 64, byte, Source::Rank(m.src), TagSel::Tag(m.tag), world)?;
                (st.source, st.tag, st.bytes)
            } else {
                let req = rt.irecv(64, byte, Source::Rank(m.src), TagSel::Tag(m.tag), world, step << 32 | i as u64)?;
                let c = rt.wait(req)?;
                let data = c.data.unwrap_or_default();
                buf[..data.len()].copy_from_slice(&data);
                (c.status.source, c.status.tag, c.status.bytes)
            };
            self.absorb(m, src, tag, &buf[..len]);
        }
        Ok(())
    }
}

impl MiniApp for Storm {
    fn name(&self) -> &'static str {
        "storm"
    }

    fn steps(&self) -> u64 {
        STEPS
    }

    fn setup(&mut self, rt: &mut Runtime) -> AppResult<()> {
        self.post_for(rt, 0)
    }

    fn step(&mut self, rt: &mut Runtime, step: u64) -> AppResult<()> {
        let world = rt.comm_world();
        let byte = rt.datatype(NamedType::Byte);
        self.complete_sends(rt)?;

        let plan = storm_plan(self.p.seed, self.p.world_size, step);
        for m in plan.iter().filter(|m| m.src == self.p.rank) {
            let token = step << 32 | m.index as u64;
            let r = rt.isend(&m.payload, m.payload.len(), byte, m.dst, m.tag, world, token)?;
            self.sends.push(r);
        }

        for (req, src) in std::mem::take(&mut self.preposted) {
            let c = rt.wait(req)?;
            let expected = plan
                .iter()
                .find(|m| m.src == src && m.dst == self.p.rank && m.preposted())
                .expect("preposted receive has a planned message");
            self.absorb(expected, c.status.source, c.status.tag, &c.data.unwrap_or_default());
        }

        if step > 0 {
            self.receive_step(rt, step - 1)?;
        }
        if step + 1 < STEPS {
            self.post_for(rt, step + 1)?;
        }
        Ok(())
    }

    fn finish(&mut self, rt: &mut Runtime) -> AppResult<Vec<u8>> {
        self.complete_sends(rt)?;
        self.receive_step(rt, STEPS - 1)?;
        let mut out = Vec::new();
        out.extend_from_slice(&self.received.to_le_bytes());
        out.extend_from_slice(&self.mismatches.to_le_bytes());
        out.extend_from_slice(&self.hash.to_le_bytes());
        Ok(out)
    }

    fn save_state(&self) -> Vec<u8> {
        let mut w = StateWriter::default();
        w.vids(&self.sends);
        w.u32(self.preposted.len() as u32);
        for (r, s) in &self.preposted {
            w.vid(*r).u32(*s);
        }
        w.u64(self.received).u64(self.mismatches).u64(self.hash);
        w.0
    }

    fn load_state(&mut self, bytes: &[u8]) -> AppResult<()> {
        let mut r = StateReader::new(bytes);
        self.sends = r.vids()?;
        let n = r.u32()? as usize;
        self.preposted = (0..n).map(|_| Ok((r.vid()?, r.u32()?))).collect::<AppResult<_>>()?;
        self.received = r.u64()?;
        self.mismatches = r.u64()?;
        self.hash = r.u64()?;
        r.done()
    }
}

impl Storm {
    fn post_for(&mut self, rt: &mut Runtime, step: u64) -> AppResult<()> {
        let world = rt.comm_world();
        let byte = rt.datatype(NamedType::Byte);
        let plan = storm_plan(self.p.seed, self.p.world_size, step);
        for m in plan.iter().filter(|m| m.dst == self.p.rank && m.preposted()) {
            let r = rt.irecv(64, byte, Source::Rank(m.src), TagSel::Tag(m.tag), world, step << 32 | 0xffff)?;
            self.preposted.push((r, m.src));
        }
        Ok(())
    }
}

/// Decoded final output of one storm rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StormOutput {
    pub received: u64,
    pub mismatches: u64,
}

impl StormOutput {
    pub fn decode(out: &[u8]) -> Option<StormOutput> {
        if out.len() != 24 {
            return None;
        }
        Some(StormOutput {
            received: u64::from_le_bytes(out[..8].try_into().ok()?),
            mismatches: u64::from_le_bytes(out[8..16].try_into().ok()?),
        })
    }
}
