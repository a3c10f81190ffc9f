//! Spherical Gaussian edge reconstruction.
//!
//! Fixed-radius isotropic Gaussians are fitted to multi-view 2-D edge maps
//! through a differentiable splatting renderer, then turned into cubic
//! rational Bézier curves by randomized line fitting followed by a global
//! weighted-Chamfer optimization.

pub mod adam;
pub mod curves;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod kdtree;
pub mod losses;
pub mod metrics;
pub mod scene;
pub mod splat;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{Camera, Intrinsics, RationalBezier, Vec3, WireframeModel};
pub use image::EdgeMap;
pub use splat::{SphericalGaussian, SphericalGaussianSet};
