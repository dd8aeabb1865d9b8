//! Matrix-vector multiplication carried out by radio physics, simulated.
//!
//! Weights and inputs are placed on OFDM subcarriers, multiplied by a frequency mixer, and the
//! products are read back from a narrow slice of the mixer output spectrum. The crate covers the
//! transform conventions, front-end models, the MVM pipeline, channel calibration, an energy
//! model and a small complex-valued network runtime.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the crate root fix the
//! scalar to `f64`.

pub mod channel;
pub mod containers;
pub mod energy;
pub mod error;
pub mod frontend;
pub mod inference;
pub mod lstsq;
pub mod matrix;
pub mod mnist;
pub mod mvm;
pub mod ofdm;
pub mod rng;
pub mod scalar;
pub mod sync;

pub use error::{Error, FormatError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use scalar::Real;

pub type Complex64 = num_complex::Complex<f64>;
pub type Matrix = matrix::CMatrix<f64>;
pub type Waveform = frontend::IqWaveform<f64>;
pub type Passband = frontend::PassbandWaveform<f64>;
pub type Grid = ofdm::OfdmGrid<f64>;
pub type Preamble = sync::Preamble<f64>;
pub type Channel = channel::ChannelResponse<f64>;
pub type Csi = channel::CsiEstimate<f64>;
pub type Model = inference::ComplexFcModel<f64>;
pub type Dataset = containers::VectorSet<f64>;
