//! Optimal exercise of perpetual American calls and puts when the dividend
//! and volatility rates depend on the running maximum `S` and the running
//! maximum drawdown `Y` of the asset price.
//!
//! The crate computes the exercise boundaries (explicit or as solutions of
//! first-order boundary equations), assembles the piecewise value functions,
//! solves the coefficient system in the normal-reflection regions, and checks
//! the result against Monte Carlo simulation of the path-dependent dynamics.
//!
//! ```
//! use ddstop::coefficients::{ModelSpec, Payoff};
//! use ddstop::solver2d::{call_boundary_2d, put_asymptote};
//!
//! let put = ModelSpec::reference(Payoff::Put, 1.0);
//! assert!((put_asymptote(&put).unwrap() - 2.0 / 3.0).abs() < 1e-12);
//! let call = ModelSpec::reference(Payoff::Call, 1.0);
//! assert!((call_boundary_2d(&call, 2.0).unwrap() - 3.0).abs() < 1e-12);
//! ```

pub mod cli;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod montecarlo;
pub mod numerics;
pub mod power;
pub mod reflection;
pub mod solver2d;
pub mod solver3d;
pub mod switching;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/boundaries-2d.md")]
    mod boundaries_2d {}
    #[doc = include_str!("../../../book/src/surfaces-3d.md")]
    mod surfaces_3d {}
    #[doc = include_str!("../../../book/src/reflection.md")]
    mod reflection {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
