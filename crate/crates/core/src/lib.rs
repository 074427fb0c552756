pub mod eigen;
pub mod error;
pub mod green;
pub mod io;
pub mod localization;
pub mod lyapunov;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod tolerance;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instances of the generic types.
pub type Realization = model::DisorderRealization<f64>;
pub type Operator = model::BlockOperator<f64>;
pub type Transfer = transfer::TransferMatrix<f64>;
pub type Segment = transfer::CocycleSegment<f64>;
pub type Frame = lyapunov::LagrangianFrame<f64>;
pub type Green = green::GreenBlock<f64>;
pub type Eigenpair = localization::EigenPair<f64>;
pub type EigenSpectrum = localization::Spectrum<f64>;
