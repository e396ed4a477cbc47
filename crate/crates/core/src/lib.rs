//! Markov chains of normalized random matrix products on complex projective
//! space, the quantum channels that average them, and empirical convergence
//! diagnostics.
//!
//! The chain moves a ray `x` in P(C^k) by drawing a matrix `v` from a finite
//! weighted family with probability proportional to `||v x||^2` and jumping
//! to the ray of `v x`. The crate provides:
//!
//! - validation and I/O for the defining weighted matrix families
//!   ([`kraus`]),
//! - spectral analysis of the averaged evolution: period, gap, invariant
//!   state, minimal invariant subspace ([`channel`]),
//! - checkers for the purification and fixed-point-uniqueness assumptions
//!   ([`purification`], [`channel::check_phi_erg`]),
//! - trajectory sampling with renormalized products, maximum-likelihood
//!   state estimators and Lyapunov exponents ([`trajectory`]),
//! - exact Wasserstein-1 distances between empirical measures on projective
//!   space ([`transport`]),
//! - reproducible experiment drivers emitting CSV/JSON ([`experiments`]).

pub mod channel;
mod error;
pub mod experiments;
pub mod kraus;
pub mod numerics;
pub mod projective;
pub mod purification;
pub mod stats;
pub mod trajectory;
pub mod transport;

pub use channel::{DensityMatrix, PhiErgReport, SpectralReport, SuperOperator};
pub use error::{Error, Result};
pub use kraus::{KrausElement, KrausMeasure, TransitionDistribution, ValidationReport};
pub use numerics::{C64, CMatrix, CVector, SvdResult};
pub use projective::ProjectivePoint;
pub use purification::{ContractivityReport, PurReport, PurVerdict};
pub use trajectory::{LyapunovReport, StartState, TrajectoryState};
pub use transport::EmpiricalMeasure;
