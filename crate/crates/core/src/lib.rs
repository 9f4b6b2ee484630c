//! Wave-particle duality as a witness of contextuality.
//!
//! The crate models a Mach-Zehnder interferometer as a dual-rail qubit in the
//! language of generalized probabilistic theories (GPTs): preparations are real
//! state vectors, detector outcomes are effect vectors, and probabilities are
//! their dot products. On top of that it provides
//!
//! * fringe visibility and path distinguishability, the quantum tradeoff
//!   `V^2 + P^2 <= 1` and the noncontextual bound `V + P <= 1` ([`duality`]),
//! * checks and constructions for A1xA1 reflection orbits ([`orbit`]),
//! * a linear-program decision procedure for noncontextual ontological models
//!   with Farkas certificates and exact rational re-solves ([`ontic`], [`lp`]),
//! * theory-agnostic GPT tomography from finite-shot counts ([`tomography`]),
//! * secondary-state construction and the final witness report
//!   ([`secondary`]), wired end to end in [`pipeline`].
//!
//! Data-parallel sweeps go through [`exec::Exec`]; with the `parallel` feature
//! disabled every sweep runs sequentially with identical output.

pub mod duality;
pub mod error;
pub mod exec;
pub mod gpt;
pub mod interferometer;
pub mod lp;
pub mod ontic;
pub mod orbit;
pub mod pipeline;
pub mod secondary;
pub mod tomography;

pub use error::{Error, Result};
pub use exec::Exec;
pub use gpt::{BinaryMeasurement, GptVector, StateSpaceModel, VectorKind};
