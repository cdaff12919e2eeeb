//! Data-driven linear programming for discounted optimal control of affine
//! stochastic systems.
//!
//! The library covers the full pipeline:
//!
//! * [`model`] — affine dynamics `x⁺ = Ax + Bu + c + ξ` with generalized
//!   quadratic stage costs, coordinate augmentation, simulation and datasets;
//! * [`fixedpoint`] — closed-form fixed points of the Bellman, Q-function and
//!   relaxed Bellman operators via an augmented Riccati equation, plus the
//!   optimal affine policy;
//! * [`excitation`] — persistency-of-excitation certificates and the affine
//!   variant of Willems' fundamental lemma;
//! * [`synthesis`] — construction of Bellman-inequality constraint rows from
//!   short trajectories, including estimators that avoid reinitialization;
//! * [`lp`] — finite linear programs over the generalized-quadratic family and
//!   a dense simplex solver, with policy extraction from the solution;
//! * [`numerics`] — the shared dense linear-algebra conventions
//!   (half-vectorization, Hankel matrices, numerical rank, linear solves).
//!
//! A quick taste: simulate a scalar system and compute its optimal policy in
//! closed form.
//!
//! ```
//! use affinelp::model::{AffineSystem, StageCost, simulate};
//! use affinelp::fixedpoint::optimal_policy;
//! use nalgebra::{DMatrix, DVector};
//! use rand::SeedableRng;
//!
//! let sys = AffineSystem::new(
//!     DMatrix::from_row_slice(1, 1, &[0.8]),
//!     DMatrix::from_row_slice(1, 1, &[1.0]),
//!     DVector::from_row_slice(&[0.3]),
//!     DVector::zeros(1),
//!     affinelp::numerics::SymMatrix::zeros(1),
//!     0.9,
//! )?;
//! let cost = StageCost::identity(1, 1);
//! let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
//! let inputs = DMatrix::from_row_slice(1, 4, &[1.0, -1.0, 2.0, 0.5]);
//! let data = simulate(&sys, &DVector::zeros(1), &inputs, &mut rng)?;
//! assert_eq!(data.len(), 4);
//! let policy = optimal_policy(&sys, &cost)?;
//! assert!(policy.gain()[(0, 0)].abs() < 1.0);
//! # Ok::<(), affinelp::Error>(())
//! ```

pub mod excitation;
pub mod fixedpoint;
pub mod io;
pub mod lp;
pub mod model;
pub mod numerics;
pub mod synthesis;

mod error;

pub use error::{Error, Result};

// The user guide chapters double as doctests so the book stays in sync with
// the crate; `cfg(doctest)` keeps them out of ordinary builds.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/systems-and-costs.md")]
    mod systems_and_costs {}
    #[doc = include_str!("../../../book/src/fixed-points.md")]
    mod fixed_points {}
    #[doc = include_str!("../../../book/src/excitation.md")]
    mod excitation {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/linear-programs.md")]
    mod linear_programs {}
}
