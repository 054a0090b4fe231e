//! Radial variational inference.
//!
//! Approximates a posterior `π ∝ exp(-V)` on `R^d` by the pushforward of the
//! standard Gaussian under a radial map `T_λ(x) = g_λ(‖x‖) x / ‖x‖`, where
//! `g_λ` is a nonnegative combination of clamped ramps. The weights are
//! fitted by projected stochastic gradient descent in the Gram metric of the
//! dictionary. A Gaussian preconditioner (Laplace or Gaussian VI) can be
//! composed in front to handle anisotropic targets.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below name the double-precision instantiations.

pub mod basis;
pub mod error;
pub mod gram;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod oracles;
pub mod projection;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod specfun;
pub mod targets;
pub mod whitening;

pub use basis::{Dictionary, Weights};
pub use error::{Error, Result};
pub use gram::GramMatrix;
pub use optimizer::{radvi_run, OptimizerConfig};
pub use oracles::RadialOracle;
pub use scalar::Real;
pub use targets::{build_target, Family, Target, TargetModel, TargetSpec};
pub use whitening::{CompositeMap, WhiteningTransform};

pub type DictionaryF64 = Dictionary<f64>;
pub type DictionaryF32 = Dictionary<f32>;
pub type WeightsF64 = Weights<f64>;
pub type WeightsF32 = Weights<f32>;
pub type GramMatrixF64 = GramMatrix<f64>;
pub type GramMatrixF32 = GramMatrix<f32>;
pub type TargetModelF64 = TargetModel<f64>;
pub type TargetModelF32 = TargetModel<f32>;
pub type TargetSpecF64 = TargetSpec<f64>;
pub type RadialOracleF64 = RadialOracle<f64>;
pub type WhiteningTransformF64 = WhiteningTransform<f64>;
pub type CompositeMapF64 = CompositeMap<f64>;
