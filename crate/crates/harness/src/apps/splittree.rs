use vidmpi_core::reduce::{self, BuiltinOp};
use vidmpi_core::typemap::NamedType;
use vidmpi_core::vid::VirtualId;
use vidmpi_core::Runtime;

use super::{AppParams, AppResult, MiniApp, StateReader, StateWriter};

const STEPS: u64 = 5;

fn sum_mod_97(elem: NamedType, input: &[u8], inout: &mut [u8]) {
    match elem {
        NamedType::Int => {
            for (a, b) in input.chunks_exact(4).zip(inout.chunks_exact_mut(4)) {
                let x = i32::from_le_bytes(a.try_into().unwrap()) as i64;
                let y = i32::from_le_bytes((&*b).try_into().unwrap()) as i64;
                b.copy_from_slice(&(((x + y).rem_euclid(97)) as i32).to_le_bytes());
            }
        }
        _ => {
            for (a, b) in input.chunks_exact(8).zip(inout.chunks_exact_mut(8)) {
                let x = i64::from_le_bytes(a.try_into().unwrap()) as i128;
                let y = i64::from_le_bytes((&*b).try_into().unwrap()) as i128;
                b.copy_from_slice(&(((x + y).rem_euclid(97)) as i64).to_le_bytes());
            }
        }
    }
}

/// Make the app's reduction available in the process-wide registry.
pub fn register_sum_mod_97() {
    reduce::global().register("sum_mod_97", sum_mod_97);
}

/// Recursive halving of the world communicator plus a reversed-order
/// communicator built from a group, with a user reduction on each level.
pub struct SplitTree {
    p: AppParams,
    levels: Vec<VirtualId>,
    group: VirtualId,
    reversed: VirtualId,
    rev_comm: VirtualId,
    op: VirtualId,
    acc: Vec<i64>,
}

impl SplitTree {
    pub fn new(p: AppParams) -> Self {
        SplitTree {
            p,
            levels: Vec::new(),
            group: VirtualId::NULL,
            reversed: VirtualId::NULL,
            rev_comm: VirtualId::NULL,
            op: VirtualId::NULL,
            acc: Vec::new(),
        }
    }

    fn comms(&self, rt: &Runtime) -> Vec<VirtualId> {
        let mut v = vec![rt.comm_world()];
        v.extend(&self.levels);
        v.push(self.rev_comm);
        v
    }

    /// Communicators this rank belongs to, for cross-rank ggid checks.
    pub fn communicators(&self) -> Vec<VirtualId> {
        let mut v = self.levels.clone();
        v.push(self.rev_comm);
        v
    }
}

impl MiniApp for SplitTree {
    fn name(&self) -> &'static str {
        "splittree"
    }

    fn steps(&self) -> u64 {
        STEPS
    }

    fn setup(&mut self, rt: &mut Runtime) -> AppResult<()> {
        let world = rt.comm_world();
        let mut cur = world;
        let mut depth = 0;
        while rt.comm_size(cur)? > 1 {
            let size = rt.comm_size(cur)?;
            let me = rt.comm_rank(cur)?;
            let color = (me < size / 2) as i32;
            let key = if depth % 2 == 0 { me as i32 } else { -(me as i32) };
            cur = rt.comm_split(cur, color, key)?;
            self.levels.push(cur);
            depth += 1;
        }
        let scratch = rt.comm_dup(world)?;
        rt.comm_free(scratch)?;

        self.group = rt.comm_group(world)?;
        let n = self.p.world_size;
        let rev: Vec<u32> = (0..n).rev().collect();
        self.reversed = rt.group_incl(self.group, &rev)?;
        self.rev_comm = rt.comm_create(world, self.reversed)?;
        self.op = rt.op_create("sum_mod_97", true)?;
        self.acc = vec![0; self.levels.len() + 2];
        Ok(())
    }

    fn step(&mut self, rt: &mut Runtime, step: u64) -> AppResult<()> {
        let int64 = rt.datatype(NamedType::Int64);
        let comms = self.comms(rt);
        for (i, c) in comms.into_iter().enumerate() {
            let contribution = self.acc[i] * 7 + (self.p.rank as i64 + 1) * (step as i64 + i as i64 + 3) + self.p.seed as i64 % 89;
            let mut buf = contribution.to_le_bytes();
            rt.allreduce(&mut buf, 1, int64, self.op, c)?;
            let summed = i64::from_le_bytes(buf);
            let mut m = buf;
            rt.allreduce(&mut m, 1, int64, rt.builtin_op(BuiltinOp::Max), c)?;
            self.acc[i] = (summed * 1000 + i64::from_le_bytes(m)).rem_euclid(1_000_003);
        }
        Ok(())
    }

    fn finish(&mut self, rt: &mut Runtime) -> AppResult<Vec<u8>> {
        let mut out = Vec::new();
        for c in self.comms(rt) {
            let (ggid, seq) = rt.comm_ggid(c)?;
            out.extend_from_slice(&ggid.to_le_bytes());
            out.extend_from_slice(&seq.to_le_bytes());
            for m in rt.comm_members(c)? {
                out.extend_from_slice(&m.to_le_bytes());
            }
        }
        for a in &self.acc {
            out.extend_from_slice(&a.to_le_bytes());
        }
        rt.comm_free(self.rev_comm)?;
        rt.group_free(self.reversed)?;
        rt.group_free(self.group)?;
        rt.op_free(self.op)?;
        for c in self.levels.iter().rev() {
            rt.comm_free(*c)?;
        }
        Ok(out)
    }

    fn save_state(&self) -> Vec<u8> {
        let mut w = StateWriter::default();
        w.vids(&self.levels).vid(self.group).vid(self.reversed).vid(self.rev_comm).vid(self.op);
        w.u32(self.acc.len() as u32);
        for a in &self.acc {
            w.u64(*a as u64);
        }
        w.0
    }

    fn load_state(&mut self, bytes: &[u8]) -> AppResult<()> {
        let mut r = StateReader::new(bytes);
        self.levels = r.vids()?;
        self.group = r.vid()?;
        self.reversed = r.vid()?;
        self.rev_comm = r.vid()?;
        self.op = r.vid()?;
        let n = r.u32()? as usize;
        self.acc = (0..n).map(|_| r.u64().map(|x| x as i64)).collect::<AppResult<_>>()?;
        r.done()
    }
}
