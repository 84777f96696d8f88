//! Wavelet-guided GAN super-resolution toolkit.

pub mod autodiff;
pub mod imaging;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod plane;
pub mod trainer;
pub mod wavelet;

pub use plane::Plane;
