//! Stochastic flows of continuous-state branching processes with immigration
//! and of generalized Fleming–Viot processes, together with the deterministic
//! oracles (cumulant semigroup, moment ODEs, block-counting chains) used to
//! check them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cbi_flow;
pub mod coalescent;
pub mod error;
pub mod fv_flow;
pub mod grid;
pub mod laplace;
pub mod mechanisms;
pub mod noise;
pub mod ode;
pub mod parallel;
mod quad;
pub mod scaling;
pub mod stats;

pub use error::{FlowError, Result};
