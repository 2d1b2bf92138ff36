//! The mini-app suite and its name-keyed registry.

mod halo;
mod ring;
mod splittree;
mod storm;

use std::collections::BTreeMap;

use vidmpi_core::vid::VirtualId;
use vidmpi_core::Runtime;

use crate::HarnessError;

pub use halo::Halo;
pub use ring::Ring;
pub use splittree::{register_sum_mod_97, SplitTree};
pub use storm::{storm_plan, storm_steps, Storm, StormMessage, StormOutput};

pub type AppResult<T> = Result<T, HarnessError>;

/// Parameters every app is built from. Output depends on nothing else.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AppParams {
    pub seed: u64,
    pub world_size: u32,
    pub rank: u32,
}

/// A deterministic step-structured application written against the
/// wrapper API.
pub trait MiniApp: Send {
    fn name(&self) -> &'static str;
    fn steps(&self) -> u64;
    /// Create communicators, datatypes and so on. Not called after a restart.
    fn setup(&mut self, rt: &mut Runtime) -> AppResult<()>;
    fn step(&mut self, rt: &mut Runtime, step: u64) -> AppResult<()>;
    /// Complete outstanding work, release objects and return this rank's
    /// final state bytes.
    fn finish(&mut self, rt: &mut Runtime) -> AppResult<Vec<u8>>;
    fn save_state(&self) -> Vec<u8>;
    fn load_state(&mut self, bytes: &[u8]) -> AppResult<()>;
}

type Factory = fn(AppParams) -> Box<dyn MiniApp>;

pub struct AppRegistry {
    apps: BTreeMap<&'static str, Factory>,
}

impl Default for AppRegistry {
    fn default() -> Self {
        register_sum_mod_97();
        let mut r = AppRegistry { apps: BTreeMap::new() };
        r.register("ring", |p| Box::new(Ring::new(p)));
        r.register("halo", |p| Box::new(Halo::new(p)));
        r.register("splittree", |p| Box::new(SplitTree::new(p)));
        r.register("storm", |p| Box::new(Storm::new(p)));
        r
    }
}

impl AppRegistry {
    pub fn register(&mut self, name: &'static str, f: Factory) {
        self.apps.insert(name, f);
    }

    pub fn create(&self, name: &str, params: AppParams) -> AppResult<Box<dyn MiniApp>> {
        self.apps.get(name).map(|f| f(params)).ok_or_else(|| HarnessError::UnknownApp(name.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.apps.keys().copied()
    }
}

pub const APP_NAMES: [&str; 4] = ["ring", "halo", "splittree", "storm"];

// ---- state encoding shared by the apps --------------------------------

#[derive(Default)]
pub(crate) struct StateWriter(pub Vec<u8>);

impl StateWriter {
    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn vid(&mut self, v: VirtualId) -> &mut Self {
        self.u32(v.raw())
    }
    pub fn vids(&mut self, v: &[VirtualId]) -> &mut Self {
        self.u32(v.len() as u32);
        v.iter().for_each(|x| {
            self.vid(*x);
        });
        self
    }
    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.0.extend_from_slice(v);
        self
    }
}

pub(crate) struct StateReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> StateReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        StateReader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> AppResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(HarnessError::BadState("application state ends early".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u32(&mut self) -> AppResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> AppResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn vid(&mut self) -> AppResult<VirtualId> {
        Ok(VirtualId::from_raw(self.u32()?))
    }
    pub fn vids(&mut self) -> AppResult<Vec<VirtualId>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.vid()).collect()
    }
    pub fn bytes(&mut self) -> AppResult<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
    pub fn done(&self) -> AppResult<()> {
        if self.pos != self.buf.len() {
            return Err(HarnessError::BadState("trailing bytes in application state".into()));
        }
        Ok(())
    }
}
