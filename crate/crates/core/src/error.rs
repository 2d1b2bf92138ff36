use crate::backends::BackendError;
use crate::checkpoint::ImageError;
use crate::vid::{VidError, VirtualId};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Vid(#[from] VidError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("unknown reduction function `{0}`")]
    UnknownFunction(String),
    #[error("datatype {0:?} committed twice")]
    CommitTwice(VirtualId),
    #[error("request {0:?} was already completed and freed")]
    TestOnFreed(VirtualId),
    #[error("{0:?} is still referenced by {1:?}")]
    StillReferenced(VirtualId, VirtualId),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{0} drained messages were never received")]
    ShadowNotEmpty(usize),
    #[error("drain stalled: expected {expected} messages, received {received}")]
    DrainTimeout { expected: u64, received: u64 },
    #[error("image set incomplete: found {found} of {expected} rank images")]
    ImageSetIncomplete { found: usize, expected: usize },
    #[error("replay of {vid:?} failed: {reason}")]
    ReplayFailure { vid: VirtualId, reason: String },
    #[error("re-created {vid:?} has members {decoded:?}, recorded {recorded:?}")]
    MembershipMismatch { vid: VirtualId, recorded: Vec<u32>, decoded: Vec<u32> },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
