//! Budget-constrained coupon allocation toolkit.
//!
//! End-to-end pipeline for deciding which coupon (if any) each customer of an
//! e-commerce platform should receive under a total budget:
//!
//! - [`domain`] — shared domain types (coupon catalog, experiment datasets,
//!   allocation plans) with validation and deterministic seeding.
//! - [`synthgen`] — synthetic randomized coupon experiments with known
//!   ground-truth treatment effects, used as the test oracle throughout.
//! - [`uplift`] — per-customer, per-coupon treatment-effect (CATE) estimation
//!   via an S-learner over pluggable base regressors (ridge, boosted trees).
//! - [`segmentation`] — Gaussian-mixture clustering of estimated uplift
//!   vectors plus per-cluster means, standard errors, and bootstrap
//!   covariances.
//! - [`solver`] — a primal simplex LP solver with duality checks and a
//!   Frank-Wolfe loop for concave quadratic objectives.
//! - [`allocation`] — the three allocation models (multiple-choice knapsack,
//!   mean-variance, robust LP with budgeted uncertainty), plus realization of
//!   fractional cluster allocations into customer-level plans.
//! - [`evaluation`] — offline evaluation: transformed-outcome uplift, uplift
//!   curves / AUUC, budget sweeps, and cross-validation.

pub mod allocation;
pub mod domain;
pub mod evaluation;
pub mod segmentation;
pub mod solver;
pub mod synthgen;
pub mod uplift;

mod error;

pub use error::{Error, Result};
