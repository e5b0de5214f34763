//! Lattice approximation of two-player differential games.
//!
//! The dynamics `ẋ = f(t, x, u, v)` are replaced by a continuous-time Markov
//! chain on `hℤ^d` whose drift equals `f`. The chain's value functions solve
//! a countable system of ODEs ([`hjb`]), and a pair of extremal-shift
//! strategies transfers a near-optimal model strategy back to the original
//! game ([`shift`]). A viscous finite-difference comparator ([`viscous`]) and
//! the explicit error constants ([`bounds`]) round out the toolkit.

pub mod bounds;
pub mod error;
pub mod game;
pub mod hjb;
pub mod io;
pub mod lattice;
pub mod rng;
pub mod shift;
pub mod sim;
pub mod viscous;

pub use error::{Error, Result};
pub use game::{catalog, Control, Drift, GameSpec, Payoff};
pub use hjb::{
    solve_backward, truncate_domain, weighted_norm, BoundaryPolicy, Scheme, SolveResult,
    SolverOptions, ValueGrid, ValueKind,
};
pub use lattice::LatticeDomain;
