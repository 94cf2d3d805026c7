//! Functional flow matching on discretized 1-D function spaces.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numerical piece of
//! the pipeline:
//!
//! * [`tensor`], [`tape`] and [`dft`]: dense arrays, a define-by-run reverse
//!   mode autodiff tape and real discrete Fourier transforms.
//! * [`gaussian`]: grids, covariance kernels and Gaussian reference measures.
//! * [`path`]: conditional Gaussian probability paths (OT and VP), their
//!   vector fields and the exact marginal field for finite-support data.
//! * [`operator`]: the spectral neural operator that models the vector field.
//! * [`train`]: conditional flow-matching losses, Adam and the training loop.
//! * [`sampler`]: Dormand-Prince / RK4 integration of the learned flow,
//!   super-resolution and observation-guided sampling.
//! * [`data`] and [`eval`]: synthetic datasets, preprocessing and the
//!   pointwise/density/spectrum metrics.
//! * [`verify`]: executable checks of the marginal-field and loss-equivalence
//!   properties on finite-support data.
//!
//! The default `std` feature only enables runtime CPU feature detection in the
//! GEMM kernels and `std::error::Error` for [`Error`].

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

mod error;
pub mod math;

pub mod batch;
pub mod data;
pub mod dft;
pub mod eval;
pub mod field;
pub mod gaussian;
pub mod operator;
pub mod path;
pub mod rng;
pub mod sampler;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod verify;

pub use batch::FunctionBatch;
pub use error::{Error, Result};
pub use gaussian::{GaussianMeasure, Grid, GridKind, KernelFamily, KernelSpec, MeasureOptions};
pub use operator::{OperatorConfig, OperatorParams};
pub use path::PathParametrization;
pub use tensor::Tensor;
