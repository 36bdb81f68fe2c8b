//! The user guide, mirrored from `book/`.
//!
//! Each module below carries one chapter of the mdbook in `book/src/` as
//! its documentation, so `cargo test --doc` executes every code fence of
//! the guide and the book can never drift out of sync with the API.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model-problems.md")]
pub mod model_problems {}

#[doc = include_str!("../../../book/src/finite-volume.md")]
pub mod finite_volume {}

#[doc = include_str!("../../../book/src/time-stepping.md")]
pub mod time_stepping {}

#[doc = include_str!("../../../book/src/multiresolution.md")]
pub mod multiresolution {}

#[doc = include_str!("../../../book/src/error-control.md")]
pub mod error_control {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
