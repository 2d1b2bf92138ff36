//! The application-facing call surface. Each wrapper translates its vid
//! arguments to backend handles on entry, records creation recipes, keeps
//! per-peer message counts and translates handle results back to vids.

mod constants;
mod counters;
mod p2p;
mod runtime;
mod types;

pub use constants::{constant_names, reserved_slot, ConstEntry, ConstState, ConstantMap};
pub use counters::{CounterTable, PeerCount};
pub use runtime::Runtime;
pub use types::Contents;
