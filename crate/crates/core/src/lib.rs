//! Geodesic attention on the oblique manifold and the Lorentz hyperboloid.
//!
//! * [`oblique`]: unit-column matrices, arccos distances, tangent projection
//!   and retraction.
//! * [`lorentz`]: the hyperboloid of curvature `-c`, exponential and
//!   logarithmic maps at the origin, clipped `arcosh` distances.
//! * [`attention`]: attention kernels whose similarity is a geodesic distance,
//!   plus a dot-product baseline.
//! * [`diffcheck`]: finite-difference gradient checks and a scalar-loop
//!   reference for the kernels.
//! * [`experiments`]: tree-embedding distortion and constrained descent.
//! * [`verify`] and [`bench`]: the self-check suite and kernel timings.
//!
//! Everything is generic over [`Scalar`] (`f32`, `f64`). The clip constants
//! are tuned for double precision (`1 + 1e-15` is not representable in
//! `f32`), so the aliases below fix `f64`.

pub mod attention;
pub mod bench;
pub mod diffcheck;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lorentz;
pub mod oblique;
pub mod scalar;
pub mod verify;

pub use attention::AttentionConfig;
pub use error::{GeoError, Result};
pub use linalg::Matrix;
pub use lorentz::{Curvature, LorentzPoint, TangentAtOrigin};
pub use oblique::{ObliqueMatrix, ObliqueTangent};
pub use scalar::Scalar;

pub type MatrixF64 = Matrix<f64>;
pub type ObliqueMatrixF64 = ObliqueMatrix<f64>;
pub type ObliqueTangentF64 = ObliqueTangent<f64>;
pub type LorentzPointF64 = LorentzPoint<f64>;
pub type TangentAtOriginF64 = TangentAtOrigin<f64>;
pub type CurvatureF64 = Curvature<f64>;
pub type AttentionConfigF64 = AttentionConfig<f64>;
