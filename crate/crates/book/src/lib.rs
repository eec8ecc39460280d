//! Compiles the guide's snippets as doc-tests. mdbook cannot link the
//! workspace crates itself, so each chapter is included here instead.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/graph.md")]
pub mod graph {}
#[doc = include_str!("../../../book/src/zkp.md")]
pub mod zkp {}
#[doc = include_str!("../../../book/src/membership.md")]
pub mod membership {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
