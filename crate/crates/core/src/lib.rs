//! Lattice coding and simulation for the multiple-access relay channel
//! under dynamic decode-and-forward.

pub mod channel;
pub mod codec;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod mapper;
pub mod rates;
pub mod rng;
pub mod sim;
pub mod sphere;

pub use error::{Error, Result};
