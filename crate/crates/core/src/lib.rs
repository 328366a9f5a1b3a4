//! Real, complex and hybrid real/complex neural networks for STFT-domain
//! speech enhancement, built on a small reverse-mode autodiff core.

pub mod arch;
pub mod autodiff;
pub mod checkpoint;
pub mod complexity;
pub mod convert;
pub mod dsp;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod pipeline;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{ComplexTensor, Shape, Tensor};
