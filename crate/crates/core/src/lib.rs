//! Continuum Widom-Rowlinson model under independent spin-flip dynamics.
//!
//! The crate is organised bottom-up: [`geometry`] holds points, windows and the
//! disc-graph cluster decomposition, [`model`] the closed-form constants,
//! [`sampler`] the point-process and WRM samplers, [`kernels`] the
//! cluster-representation conditional kernels (plus a quadrature oracle),
//! [`probes`] the quasilocality and percolation experiments, and [`report`] /
//! [`render`] the serialisable outputs.

pub mod error;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod model;
pub mod numeric;
pub mod probes;
pub mod render;
pub mod report;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use geometry::{
    cluster_decompose, connects, set_distance, ClusterDecomposition, ColoredConfiguration,
    GreyConfiguration, Horizon, Operand, Point, Region, Spin, Window,
};
pub use model::{flip_kernel, GibbsClass, IntensityClass, ModelParams, RegimeCase, Time};
pub use rng::RngStream;
