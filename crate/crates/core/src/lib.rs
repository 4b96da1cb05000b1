//! Horizon stability of expected-utility optimizers in Brownian markets.
//!
//! The crate is organised around the objects an experiment needs:
//!
//! * [`utility`]: utility functions, their conjugates and exit-safety probes.
//! * [`kim_omberg`]: the Ornstein–Uhlenbeck drift model whose value function
//!   explodes in finite time, solved through its Riccati system.
//! * [`counterexample`]: an exact complete market in which leaving the
//!   optimal strategy early drives expected utility to `-inf`.
//! * [`market_sim`]: reproducible path simulation, martingale-method values
//!   and numerical duality checks.
//! * [`conditions`]: Monte Carlo checkers for the sufficient conditions that
//!   rule the premature-exit phenomenon out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod numerics;
pub mod ode;
pub mod utility;
pub mod kim_omberg;
pub mod counterexample;
pub mod market_sim;
pub mod conditions;

pub use utility::{ExitSafetyReport, ExitVerdict, ProbeGrid, UtilitySpec};
