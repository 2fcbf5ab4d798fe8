//! Boltzmann machine learning where the model expectations come from a
//! variational imaginary-time-evolved pure state on a simulated register.
//!
//! Pipeline: [`ising`] defines the energy model and exact oracles,
//! [`ansatz`] the parametrized circuit, [`varqite`] evolves `|++⋯+>` to the
//! pure state whose basis distribution is the Gibbs distribution, and
//! [`learner`] uses that state for the KL-divergence gradient.
//! [`experiment`] orchestrates repeated training runs and writes CSVs.

pub mod ansatz;
pub mod check;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod io;
pub mod ising;
pub mod learner;
pub mod statevector;
pub mod varqite;

pub use error::{Error, Result};
