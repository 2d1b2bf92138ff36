use vidmpi_core::backends::{Source, TagSel};
use vidmpi_core::typemap::NamedType;
use vidmpi_core::Runtime;

use super::{AppParams, AppResult, MiniApp, StateReader, StateWriter};

const ROUNDS: u64 = 8;

/// Passes a value around the world ring once per round.
pub struct Ring {
    p: AppParams,
    value: u64,
    trail: u64,
}

impl Ring {
    pub fn new(p: AppParams) -> Self {
        Ring { p, value: p.seed ^ (p.rank as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), trail: 0 }
    }
}

impl MiniApp for Ring {
    fn name(&self) -> &'static str {
        "ring"
    }

    fn steps(&self) -> u64 {
        ROUNDS
    }

    fn setup(&mut self, _rt: &mut Runtime) -> AppResult<()> {
        Ok(())
    }

    fn step(&mut self, rt: &mut Runtime, step: u64) -> AppResult<()> {
        let n = self.p.world_size;
        let world = rt.comm_world();
        let int64 = rt.datatype(NamedType::Int64);
        let right = (self.p.rank + 1) % n;
        let left = (self.p.rank + n - 1) % n;
        rt.send(&self.value.to_le_bytes(), 1, int64, right, 7, world)?;
        let mut buf = [0u8; 8];
        rt.recv(&mut buf, 1, int64, Source::Rank(left), TagSel::Tag(7), world)?;
        let got = u64::from_le_bytes(buf);
        self.value = got.wrapping_mul(31).wrapping_add(self.p.rank as u64 + step);
        self.trail = self.trail.rotate_left(5) ^ got;
        Ok(())
    }

    fn finish(&mut self, _rt: &mut Runtime) -> AppResult<Vec<u8>> {
        let mut out = self.value.to_le_bytes().to_vec();
        out.extend_from_slice(&self.trail.to_le_bytes());
        Ok(out)
    }

    fn save_state(&self) -> Vec<u8> {
        let mut w = StateWriter::default();
        w.u64(self.value).u64(self.trail);
        w.0
    }

    fn load_state(&mut self, bytes: &[u8]) -> AppResult<()> {
        let mut r = StateReader::new(bytes);
        self.value = r.u64()?;
        self.trail = r.u64()?;
        r.done()
    }
}
