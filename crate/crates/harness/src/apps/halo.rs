//! 1-D periodic decomposition of a 2-D grid. Boundary columns are exchanged
//! with a strided column datatype.

use vidmpi_core::backends::{Source, TagSel};
use vidmpi_core::reduce::BuiltinOp;
use vidmpi_core::typemap::NamedType;
use vidmpi_core::vid::VirtualId;
use vidmpi_core::Runtime;

use super::{AppParams, AppResult, MiniApp, StateReader, StateWriter};

const ROWS: usize = 6;
const COLS: usize = 10; // interior columns 1..=8, ghosts at 0 and 9
const STEPS: u64 = 6;

pub struct Halo {
    p: AppParams,
    grid: Vec<f64>,
    column: VirtualId,
    /// `contiguous(1, column)`, used for the leftward exchange.
    wrapped: VirtualId,
    residuals: Vec<f64>,
}

impl Halo {
    pub fn new(p: AppParams) -> Self {
        let mut grid = vec![0.0; ROWS * COLS];
        for (i, x) in grid.iter_mut().enumerate() {
            let h = (p.seed ^ ((p.rank as u64) << 32) ^ i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d);
            *x = (h >> 11) as f64 / (1u64 << 53) as f64;
        }
        Halo { p, grid, column: VirtualId::NULL, wrapped: VirtualId::NULL, residuals: Vec::new() }
    }

    fn bytes(&self) -> Vec<u8> {
        self.grid.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    fn set_bytes(&mut self, b: &[u8]) {
        for (x, c) in self.grid.iter_mut().zip(b.chunks_exact(8)) {
            *x = f64::from_le_bytes(c.try_into().unwrap());
        }
    }
}

impl MiniApp for Halo {
    fn name(&self) -> &'static str {
        "halo"
    }

    fn steps(&self) -> u64 {
        STEPS
    }

    fn setup(&mut self, rt: &mut Runtime) -> AppResult<()> {
        let double = rt.datatype(NamedType::Double);
        self.column = rt.type_vector(ROWS as i32, 1, COLS as i32, double)?;
        rt.type_commit(self.column)?;
        self.wrapped = rt.type_contiguous(1, self.column)?;
        rt.type_commit(self.wrapped)?;
        Ok(())
    }

    fn step(&mut self, rt: &mut Runtime, _step: u64) -> AppResult<()> {
        let n = self.p.world_size;
        let world = rt.comm_world();
        let right = (self.p.rank + 1) % n;
        let left = (self.p.rank + n - 1) % n;
        let mut b = self.bytes();

        // last interior column to the right neighbour's left ghost
        rt.send(&b[(COLS - 2) * 8..], 1, self.column, right, 1, world)?;
        // first interior column to the left neighbour's right ghost
        rt.send(&b[8..], 1, self.wrapped, left, 2, world)?;
        rt.recv(&mut b[..], 1, self.column, Source::Rank(left), TagSel::Tag(1), world)?;
        rt.recv(&mut b[(COLS - 1) * 8..], 1, self.wrapped, Source::Rank(right), TagSel::Tag(2), world)?;
        self.set_bytes(&b);

        let old = self.grid.clone();
        let mut local_max = 0.0f64;
        for i in 0..ROWS {
            for j in 1..COLS - 1 {
                let at = |r: usize, c: usize| old[r * COLS + c];
                let up = if i > 0 { at(i - 1, j) } else { at(i, j) };
                let down = if i + 1 < ROWS { at(i + 1, j) } else { at(i, j) };
                let v = (at(i, j) * 2.0 + at(i, j - 1) + at(i, j + 1) + up + down) / 6.0;
                local_max = local_max.max((v - at(i, j)).abs());
                self.grid[i * COLS + j] = v;
            }
        }
        let mut buf = local_max.to_le_bytes();
        let max = rt.builtin_op(BuiltinOp::Max);
        rt.allreduce(&mut buf, 1, rt.datatype(NamedType::Double), max, world)?;
        self.residuals.push(f64::from_le_bytes(buf));
        Ok(())
    }

    fn finish(&mut self, rt: &mut Runtime) -> AppResult<Vec<u8>> {
        rt.type_free(self.wrapped)?;
        rt.type_free(self.column)?;
        let mut out = Vec::new();
        for i in 0..ROWS {
            for j in 1..COLS - 1 {
                out.extend_from_slice(&self.grid[i * COLS + j].to_le_bytes());
            }
        }
        for r in &self.residuals {
            out.extend_from_slice(&r.to_le_bytes());
        }
        Ok(out)
    }

    fn save_state(&self) -> Vec<u8> {
        let mut w = StateWriter::default();
        w.vid(self.column).vid(self.wrapped).bytes(&self.bytes());
        let res: Vec<u8> = self.residuals.iter().flat_map(|x| x.to_le_bytes()).collect();
        w.bytes(&res);
        w.0
    }

    fn load_state(&mut self, bytes: &[u8]) -> AppResult<()> {
        let mut r = StateReader::new(bytes);
        self.column = r.vid()?;
        self.wrapped = r.vid()?;
        let g = r.bytes()?;
        self.set_bytes(&g);
        self.residuals = r.bytes()?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        r.done()
    }
}
