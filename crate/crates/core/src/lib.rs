pub mod baselines;
pub mod classifier;
pub mod datagen;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod priors;
pub mod rng;
pub mod special;
pub mod vmf;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/special.md")]
    mod special {}
    #[doc = include_str!("../../../book/src/vmf.md")]
    mod vmf {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/priors.md")]
    mod priors {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/datagen.md")]
    mod datagen {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
