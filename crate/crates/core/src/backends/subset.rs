//! Presence and behavior check for the functions checkpointing depends on.
//!
//! Must be called collectively on every rank of the world, because the
//! sharing category exercises `alltoall` over the world communicator.

use std::fmt;

use super::{
    Backend, BackendError, Combiner, Func, FuncSet, Source, TagSel, CATEGORY_DECODE, CATEGORY_PENDING,
    CATEGORY_SHARE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    /// Detect and complete pending point-to-point traffic.
    Pending,
    /// Decode communicators, groups and datatypes.
    Decode,
    /// Exchange messages among ranks.
    Share,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Pending, Category::Decode, Category::Share];

    pub fn functions(self) -> FuncSet {
        match self {
            Category::Pending => CATEGORY_PENDING,
            Category::Decode => CATEGORY_DECODE,
            Category::Share => CATEGORY_SHARE,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            Category::Pending => 1,
            Category::Decode => 2,
            Category::Share => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryResult {
    pub category: Category,
    /// Required functions absent from the backend surface.
    pub missing: Vec<Func>,
    /// First behavioral failure, if the functions exist but misbehave.
    pub failure: Option<String>,
}

impl CategoryResult {
    pub fn passed(&self) -> bool {
        self.missing.is_empty() && self.failure.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetReport {
    pub categories: Vec<CategoryResult>,
}

impl SubsetReport {
    pub fn passed(&self) -> bool {
        self.categories.iter().all(CategoryResult::passed)
    }

    pub fn get(&self, c: Category) -> &CategoryResult {
        self.categories.iter().find(|r| r.category == c).expect("every category is reported")
    }

    /// The first missing function, as a `SubsetViolation`.
    pub fn violation(&self) -> Option<BackendError> {
        self.categories
            .iter()
            .flat_map(|r| r.missing.first())
            .next()
            .map(|f| BackendError::SubsetViolation(*f))
    }
}

impl fmt::Display for SubsetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.categories {
            write!(f, "category{}={} ", r.category.number(), if r.passed() { "pass" } else { "fail" })?;
            if !r.missing.is_empty() {
                let names: Vec<_> = r.missing.iter().map(|m| m.name()).collect();
                write!(f, "(missing {}) ", names.join(","))?;
            }
            if let Some(e) = &r.failure {
                write!(f, "({e}) ")?;
            }
        }
        Ok(())
    }
}

const PROBE_TAG: i32 = 0x5eed;

fn check_pending(b: &mut dyn Backend) -> Result<(), String> {
    let me = b.comm_self().map_err(|e| e.to_string())?;
    let int = b.resolve_constant("INT").map_err(|e| e.to_string())?;
    let value = 0x1234_5678i32.to_le_bytes();
    b.send(&value, 1, int, 0, PROBE_TAG, me).map_err(|e| e.to_string())?;
    let st = b
        .iprobe(Source::Any, TagSel::Any, me)
        .map_err(|e| e.to_string())?
        .ok_or("sent message is not visible to iprobe")?;
    if st.tag != PROBE_TAG || st.bytes != 4 {
        return Err(format!("iprobe reported {st:?}"));
    }
    let mut got = [0u8; 4];
    b.recv(&mut got, 1, int, Source::Rank(0), TagSel::Tag(PROBE_TAG), me)
        .map_err(|e| e.to_string())?;
    if got != value {
        return Err("recv returned a different payload".into());
    }
    if b.iprobe(Source::Any, TagSel::Any, me).map_err(|e| e.to_string())?.is_some() {
        return Err("received message is still visible to iprobe".into());
    }
    // Completed isend: a self-send is complete once buffered.
    let req = b.isend(&value, 1, int, 0, PROBE_TAG, me).map_err(|e| e.to_string())?;
    let mut done = None;
    for _ in 0..1000 {
        done = b.test(req).map_err(|e| e.to_string())?;
        if done.is_some() {
            break;
        }
    }
    if done.is_none() {
        return Err("test never reported the isend as done".into());
    }
    b.recv(&mut got, 1, int, Source::Any, TagSel::Any, me).map_err(|e| e.to_string())?;
    Ok(())
}

fn check_decode(b: &mut dyn Backend) -> Result<(), String> {
    let world = b.comm_world().map_err(|e| e.to_string())?;
    let n = b.comm_size(world).map_err(|e| e.to_string())?;
    let g = b.comm_group(world).map_err(|e| e.to_string())?;
    let ranks: Vec<u32> = (0..=n).collect();
    let got = b.group_translate_ranks(g, &ranks, g).map_err(|e| e.to_string())?;
    let expect: Vec<Option<u32>> = (0..n).map(Some).chain([None]).collect();
    b.group_free(g).map_err(|e| e.to_string())?;
    if got != expect {
        return Err(format!("translate_ranks returned {got:?}"));
    }
    let double = b.resolve_constant("DOUBLE").map_err(|e| e.to_string())?;
    let v = b.type_vector(3, 2, 5, double).map_err(|e| e.to_string())?;
    let env = b.type_get_envelope(v).map_err(|e| e.to_string())?;
    let contents = b.type_get_contents(v).map_err(|e| e.to_string())?;
    b.type_free(v).map_err(|e| e.to_string())?;
    if env.combiner != Combiner::Vector || contents.integers != [3, 2, 5] || contents.datatypes != [double] {
        return Err(format!("vector decoded as {env:?} / {contents:?}"));
    }
    Ok(())
}

fn check_share(b: &mut dyn Backend) -> Result<(), String> {
    let world = b.comm_world().map_err(|e| e.to_string())?;
    let n = b.comm_size(world).map_err(|e| e.to_string())? as usize;
    let r = b.comm_rank(world).map_err(|e| e.to_string())?;
    let send: Vec<u8> = (0..n).flat_map(|_| r.to_le_bytes()).collect();
    let mut recv = vec![0u8; 4 * n];
    b.alltoall(&send, &mut recv, world).map_err(|e| e.to_string())?;
    let got: Vec<u32> = recv.chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let expect: Vec<u32> = (0..n as u32).collect();
    if got != expect {
        return Err(format!("alltoall delivered {got:?}"));
    }
    Ok(())
}

/// Check that `b` provides each required category and that its functions
/// behave. Categories with missing functions are not exercised.
pub fn drain_primitives_check(b: &mut dyn Backend) -> SubsetReport {
    let surface = b.surface();
    let categories = Category::ALL
        .iter()
        .map(|&category| {
            let missing = surface.missing(category.functions());
            let failure = if missing.is_empty() {
                let run = match category {
                    Category::Pending => check_pending,
                    Category::Decode => check_decode,
                    Category::Share => check_share,
                };
                run(b).err()
            } else {
                None
            };
            CategoryResult { category, missing, failure }
        })
        .collect();
    SubsetReport { categories }
}
