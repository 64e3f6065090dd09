//! Normal distribution, quadrature, root finding and random streams.

pub mod normal;
pub mod quadrature;
pub mod rng;
pub mod roots;

pub use normal::{normal_cdf, normal_pdf, normal_quantile};
pub use quadrature::{
    adaptive_partition, integrate_1d, integrate_1d_with_breaks, integrate_2d,
    integrate_2d_with_breaks, Estimate, Interval, QuadratureSpec, Rect,
};
pub use rng::path_stream;
pub use roots::{brent, find_root, RootSpec};
