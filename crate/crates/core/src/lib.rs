//! Random walks in balanced, uniformly elliptic, time-dependent random
//! environments on `Z^d`: exact path simulation, quenched kernels, the
//! invariant density, and quantitative checks of the associated limit
//! theorems and Harnack-type estimates.

pub mod density;
pub mod env;
pub mod error;
pub mod gauss;
pub mod kernel;
pub mod stats;
pub mod theorems;
pub mod walker;

pub use density::DensityField;
pub use env::{EnvParams, Model, Point, RateField};
pub use error::{Error, Result};
pub use kernel::{KernelSlice, SiteSet, SolverOptions};
pub use walker::{PathSample, SpaceTime};
