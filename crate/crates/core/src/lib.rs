//! Bermudan and American option pricing under the rough (Volterra) Heston
//! model through its lifted, multi-factor Markovian approximation.
//!
//! The fractional kernel is replaced by a sum of exponentials
//! ([`kernel`]), the resulting factor model is simulated ([`simulate`]) and
//! priced by least-squares Monte Carlo ([`lsm`]). Riccati–Volterra solvers
//! ([`riccati`]) give the Fourier–Laplace transform of the model, used by a
//! Fourier European pricer ([`fourier`]) as an independent oracle.

pub mod error;
pub mod fourier;
pub mod kernel;
pub mod lsm;
pub mod model;
pub mod optimize;
pub mod quad;
pub mod riccati;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::{FractionalKernel, GeometricPartition, KernelChoice, MultiExpKernel};
pub use model::HestonParams;
pub use simulate::{PathBatch, SimGrid};
pub use stats::McEstimate;
pub use lsm::{BasisSpec, ExerciseGrid, PricingResult};
pub use fourier::{EuropeanSpec, OptionKind};
