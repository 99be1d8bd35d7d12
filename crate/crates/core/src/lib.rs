//! Enumeration of expansive multisets: exact coefficient tables, saddle-point
//! tuning, the asymptotic counting formulas and a bivariate Boltzmann sampler.

pub mod arith;
pub mod asym;
pub mod boltz;
pub mod error;
pub mod llt;
pub mod model;
pub mod saddle;
pub mod series;

pub use error::{Error, Result};
pub use model::{coeff_c, ExpansiveSpec, Real, SlowlyVarying};
