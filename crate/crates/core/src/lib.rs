#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod likelihood;
pub mod metrics;
pub mod prior;
pub mod quadrature;
pub mod sampler;
pub mod simulate;
pub mod spectral;
pub mod toeplitz;

pub use error::{Error, Result};
pub use likelihood::TimeSeries;
pub use prior::PriorSpec;
pub use spectral::FexpModel;
