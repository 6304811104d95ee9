//! The guide in `book/src`, one module per chapter. Building the docs or
//! running `cargo test -p adaptive-dlm-book` executes every example.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/lag-basis.md")]
pub mod lag_basis {}

#[doc = include_str!("../../../book/src/adaptive-prior.md")]
pub mod adaptive_prior {}

#[doc = include_str!("../../../book/src/sampler.md")]
pub mod sampler {}

#[doc = include_str!("../../../book/src/effective-dimension.md")]
pub mod effective_dimension {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
