pub mod comms;
pub mod controllers;
pub mod diffcore;
pub mod envs;
mod error;
pub mod harness;
pub mod strategies;
pub mod worldmodel;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    struct Overview;
    #[doc = include_str!("../../../book/src/diffcore.md")]
    struct Diffcore;
    #[doc = include_str!("../../../book/src/envs.md")]
    struct Envs;
    #[doc = include_str!("../../../book/src/comms.md")]
    struct Comms;
    #[doc = include_str!("../../../book/src/worldmodel.md")]
    struct Worldmodel;
    #[doc = include_str!("../../../book/src/controllers.md")]
    struct Controllers;
    #[doc = include_str!("../../../book/src/strategies.md")]
    struct Strategies;
    #[doc = include_str!("../../../book/src/harness.md")]
    struct Harness;
}
