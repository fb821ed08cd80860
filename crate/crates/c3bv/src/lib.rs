//! Simulation library for content-creator competition on a recommendation
//! platform with ridge-regularized user estimation.
//!
//! The model: a platform observes noisy ratings, estimates each user's
//! latent feature vector by ridge regression, and recommends the top-K
//! contents by estimated match score. Content creators are strategic: they
//! reposition their embeddings on the nonnegative unit sphere via local
//! better-response updates to maximize mechanism rewards. The central
//! question is how the regularization strength trades estimation bias
//! against variance, and how that tradeoff shifts once creators react.
//!
//! Main entry points:
//! - [`game::GameInstance`]: one frozen setting (users, contents, noise,
//!   mechanism, attention, λ).
//! - [`estimator::estimate_users`]: closed-form ridge estimates.
//! - [`dynamics::run_dynamics`]: local better-response iteration.
//! - [`prent::PreNtParams`]: closed-form theory for the stylized
//!   two-group, single-user game.
//! - [`sweep::run_sweep`]: λ grids over mechanisms and noise replicates.

pub mod data;
pub mod dynamics;
pub mod envgen;
pub mod error;
pub mod estimator;
pub mod export;
pub mod game;
pub mod mechanisms;
pub mod nmf;
pub mod prent;
pub mod rng;
pub mod space;
pub mod sweep;
pub mod welfare;

pub use error::{C3bvError, Result};
pub use game::{GameInstance, NoiseModel, RatingMatrix, RowMatrix};
pub use mechanisms::MechanismId;
pub use prent::{McEstimate, NoiseRealization, PreNtParams};
pub use space::{match_score, UnitNonnegVec, Vector};
pub use welfare::AttentionWeights;
