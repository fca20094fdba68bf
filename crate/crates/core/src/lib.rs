//! Contrastive representation learning with an entropic optimal-transport
//! regularizer, on a small dense-matrix stack.
//!
//! See the guide under `book/` for a walkthrough.

pub mod cli;
pub mod data;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod ot;
pub mod pipeline;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/entropic-transport.md")]
    mod entropic_transport {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
