pub mod backends;
pub mod checkpoint;
pub mod error;
pub mod reduce;
pub mod restart;
pub mod typemap;
pub mod vid;
pub mod wrappers;

pub use error::{Error, Result};
pub use wrappers::Runtime;
