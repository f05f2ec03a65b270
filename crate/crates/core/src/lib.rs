//! Stochastic matrix-product-state trajectories for open spin chains.
//!
//! The crate unravels time-local master equations, including ones whose decay
//! rates turn temporarily negative, into jump trajectories that are reweighted
//! by an influence martingale. The building blocks are:
//!
//! * [`tensor`]: dense tensors, contractions, QR/LQ, truncated SVD, `exp(sH)v`
//! * [`mps`] / [`mpo`]: matrix product states and the transverse-field Ising MPO
//! * [`tdvp`]: one- and two-site TDVP sweeps for the coherent step
//! * [`noise`]: jump channels, rate schedules, the positivity shift, dissipators
//! * [`tjm`]: the trajectory stepper and martingale bookkeeping
//! * [`oracle`]: dense master-equation and dense-trajectory reference solvers
//! * [`ensemble`]: parallel trajectory orchestration and weighted statistics
//! * [`config`]: run configuration
//! * [`validation`]: executable acceptance checks

pub mod config;
pub mod ensemble;
pub mod error;
pub mod mpo;
pub mod mps;
pub mod noise;
pub mod ops;
pub mod oracle;
pub mod tdvp;
pub mod tensor;
pub mod tjm;
pub mod validation;

pub use config::{parse_config, Mode, SimConfig};
pub use ensemble::{run_ensemble, weighted_observable, EnsembleOptions, EnsembleResult, TrajectoryMode};
pub use error::{Error, Result};
pub use mpo::MpOperator;
pub use mps::MpsState;
pub use noise::{ChannelKind, NoiseChannel, NoiseModel, RateSchedule};
pub use tensor::{DenseTensor, C64};
pub use tjm::{Observable, SimulationContext, TrajectoryRecord};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

