pub mod actions;
pub mod cablesim;
pub mod error;
pub mod pipeline;
pub mod policy;
pub mod regress;
pub mod sysid;

pub use error::{Error, Result};
