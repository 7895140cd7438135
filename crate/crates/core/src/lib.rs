//! Numerical laboratory for statistical limit laws of chaotic interval maps.
//!
//! The crate simulates deterministic dynamical systems (doubling, Gauss and
//! intermittent maps), realizes the martingale-coboundary decomposition of
//! Hölder observables through transfer operators, builds the associated path
//! processes, and measures distances between path ensembles — most notably
//! the exact Prokhorov distance between equal-size empirical measures — so
//! that empirical convergence rates can be compared against theoretical rate
//! formulas for the weak invariance principle and for fast-slow
//! homogenization.
//!
//! Module overview:
//!
//! * [`rng`] — counter-based splittable random streams for reproducible
//!   parallel Monte Carlo.
//! * [`maps`] — the interval maps, orbit generation, invariant-measure
//!   sampling and the first-return machinery on `[1/2, 1]`.
//! * [`transfer`] — transfer operators (exact branch formulas and an Ulam
//!   discretization), the Gordin decomposition `v = m + χ∘T − χ`, and three
//!   independent variance estimators.
//! * [`paths`] — interpolated path processes `W_n`, the time-changed
//!   martingale path `X_n`, Brownian references and path functionals.
//! * [`distances`] — exact empirical Prokhorov distance via threshold search
//!   plus maximum bipartite matching, Kolmogorov distance, and moment-based
//!   Prokhorov bounds.
//! * [`fastslow`] — the fast-slow recursion, the limiting SDE in Itô form,
//!   and the unit-diffusion transform.
//! * [`rates`] — theoretical rate formulas and log-log rate fitting.

pub mod distances;
pub mod fastslow;
pub mod maps;
pub mod paths;
pub mod rates;
pub mod rng;
pub mod transfer;
