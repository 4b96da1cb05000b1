//! The guide's chapters as rustdoc modules, so `cargo test` runs every
//! listing in the book.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/utility.md")]
pub mod utility {}
#[doc = include_str!("../../../book/src/kim_omberg.md")]
pub mod kim_omberg {}
#[doc = include_str!("../../../book/src/counterexample.md")]
pub mod counterexample {}
#[doc = include_str!("../../../book/src/market_sim.md")]
pub mod market_sim {}
#[doc = include_str!("../../../book/src/conditions.md")]
pub mod conditions {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
