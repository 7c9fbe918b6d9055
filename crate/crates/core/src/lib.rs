//! Unsupervised full-resolution training for Sentinel-2 10 m / 20 m band
//! fusion.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`). Production
//! paths use the `f32` aliases below; gradient and oracle checks run the same
//! code in `f64`.

pub mod detail;
pub mod error;
pub mod filter;
pub mod metrics;
pub mod mtf;
pub mod net;
pub mod raster;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use raster::{load_stack, save_stack, BandId, NormStats};
pub use scalar::Real;

pub type BandStack = raster::Stack<f32>;
pub type BandStack64 = raster::Stack<f64>;
pub type MtfKernel = mtf::MtfKernel<f32>;
pub type KernelBank = mtf::KernelBank<f32>;
pub type Tensor = net::Tensor<f32>;
pub type FusionNet = net::FusionNet<f32>;
pub type FusionNet64 = net::FusionNet<f64>;
pub type DetailBundle = detail::DetailBundle<f32>;
