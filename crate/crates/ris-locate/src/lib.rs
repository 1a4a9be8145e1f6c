//! Localization of a single user through a reconfigurable intelligent
//! surface (RIS) in a wideband mmWave downlink.
//!
//! The crate simulates the full measurement chain — geometry, multipath
//! channel synthesis, beamspace pilots — and recovers the user position in
//! two stages: a pursuit over random pilot soundings fixes the
//! transmitter-side and user-side beams, then a set of sparse Bayesian
//! solvers estimates the RIS-side angle difference and time of arrival from
//! phase-reconfigured observation blocks. `geometry` turns those estimates
//! back into a position.

pub mod beamspace;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod pipeline;
pub mod solvers;

pub use error::{Error, Result};

// Compile and run every code block of the guide as doctests, so the book
// cannot drift from the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/beamspace.md")]
    mod beamspace {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
