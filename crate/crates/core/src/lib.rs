//! Algorithmic core for simulating a Vlasov particle phase coupled through
//! drag to an incompressible generalized-Newtonian fluid on a periodic box.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, configuration files or the command line lives in the
//! companion `kinetofluid` crate.
//!
//! Module map:
//!
//! * [`constitutive`] - viscosity laws `G[s]` and the pointwise inequalities
//!   they satisfy (structure conditions, coercivity, monotonicity).
//! * [`fields`] - periodic grids, spectral differentiation, Leray
//!   projection, Sobolev norms.
//! * [`vlasov`] - characteristics, particle and phase-grid solvers, moments
//!   and the a-priori bound checks.
//! * [`fluid`] - IMEX spectral solver for the driven non-Newtonian Stokes
//!   system and its energy diagnostics.
//! * [`transport`] - Wasserstein-2 distances and the stability inequality.
//! * [`coupling`] - the fixed-point map and its Picard iteration.
#![no_std]
// `Float` supplies libm-backed methods; whenever any crate in the graph
// loads std (tests, rayon, std-enabled rand) the inherent ones shadow it
#![allow(unused_imports)]
// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod constitutive;
pub mod coupling;
mod error;
pub mod fft;
pub mod fields;
pub mod fluid;
pub mod numeric;
pub mod transport;
pub mod vlasov;

pub use error::{Error, Result};
