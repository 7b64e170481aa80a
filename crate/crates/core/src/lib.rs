pub mod ding;
pub mod error;
pub mod flows;
pub mod geometry;
pub mod pair;
pub mod sampler;
pub mod par;
pub mod sections;
pub mod stability;

pub use error::{Error, Result};
