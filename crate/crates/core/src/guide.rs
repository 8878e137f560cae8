//! The user guide, compiled from the `book/` sources.
//!
//! Each chapter of the mdbook is attached here verbatim as a module's
//! documentation, so every code snippet in the book is a doc-test:
//! `cargo test --doc` fails if the book drifts from the API. Read it
//! rendered (`mdbook build book`), through rustdoc, or as plain markdown
//! under `book/src/`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/scenario.md")]
pub mod scenario {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/transforms.md")]
pub mod transforms {}

#[doc = include_str!("../../../book/src/algorithms.md")]
pub mod algorithms {}

#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/configuration.md")]
pub mod configuration {}
