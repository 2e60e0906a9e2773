pub mod enumerate;
pub mod error;
pub mod euler;
pub mod locarch;
pub mod locpadic;
pub mod picard;
pub mod primes;
pub mod qcounts;
pub mod rootsys;

pub use error::{Error, Result};
