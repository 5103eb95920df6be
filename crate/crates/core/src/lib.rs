//! Coupled conditional GANs for learning a shared embedding between two
//! image domains (profile and frontal views), with cross-domain
//! verification, identification and cross-decoder frontalization.

pub mod baselines;
pub mod checkpoint;
pub mod datamodel;
pub mod error;
pub mod evaluation;
pub mod frontalizer;
pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod losses;
pub mod networks;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};

/// Build version, `git describe` style when built from a checkout.
pub const VERSION: &str = env!("CPGAN_VERSION");
