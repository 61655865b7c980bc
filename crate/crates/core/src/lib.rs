//! Forecasts and partial-identification bounds for pre-election polls where
//! respondents may name a set of parties instead of a single vote.
//!
//! - [`bounds`]: share intervals for parties and coalitions, with or without
//!   an allocation box.
//! - [`forecast`]: conventional and homogeneity point forecasts.
//! - [`mnl`]: the penalized multinomial logit underneath.
//! - [`ontic`]: undecided sets as categories of their own.
//! - [`sim`]: synthetic populations, coverage checks and brute-force oracles.
//!
//! The guide in `book/` walks through each of these.

pub mod bounds;
pub mod error;
pub mod forecast;
pub mod mnl;
pub mod ontic;
pub mod party;
pub mod sim;
pub mod survey;

pub use error::{Error, Result};

// Book chapters run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/surveys.md")]
    mod surveys {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/forecasts.md")]
    mod forecasts {}
    #[doc = include_str!("../../../book/src/ontic.md")]
    mod ontic {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
