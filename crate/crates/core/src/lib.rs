pub mod bench;
pub mod error;
pub mod estimate;
pub mod fisher;
pub mod lan;
pub mod matcore;
pub mod model;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod spectra;

pub use error::{Error, Result};
