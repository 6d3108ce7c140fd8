//! Generation of interception wrappers for C libraries.
//!
//! The pipeline mirrors how a wrapper is built by hand: scan the library's
//! headers for function declarations ([`declscan`]), select the functions to
//! wrap ([`filterset`]), check them against the symbols the library actually
//! defines ([`symreconcile`]), and emit link-time and runtime wrapper sources
//! ([`wrapgen`]). Profiles written by the measurement runtime are read and
//! rendered by [`profile`].

pub mod config;
pub mod declscan;
pub mod filterset;
pub mod fsutil;
pub mod linkcmd;
pub mod monitor;
pub mod pipeline;
pub mod profile;
pub mod symreconcile;
pub mod toolchain;
pub mod wrapgen;

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/declarations.md")]
    mod declarations {}
    #[doc = include_str!("../../../book/src/filters.md")]
    mod filters {}
    #[doc = include_str!("../../../book/src/reconciliation.md")]
    mod reconciliation {}
    #[doc = include_str!("../../../book/src/generation.md")]
    mod generation {}
    #[doc = include_str!("../../../book/src/linking.md")]
    mod linking {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
}
