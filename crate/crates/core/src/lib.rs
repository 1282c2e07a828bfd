//! Probabilistic boolean tensor factorization of neg-raising judgments.

pub mod dataset;
mod error;
pub mod evaluation;
pub mod factorization;
pub mod math;
pub mod model;
pub mod normalization;
pub mod optim;
pub mod report;
pub mod response;

pub use error::{Error, Result};
pub use model::FittedModel;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/factorization.md")]
    pub mod factorization {}
    #[doc = include_str!("../../../book/src/response.md")]
    pub mod response {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    pub mod fitting {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/normalization.md")]
    pub mod normalization {}
    #[doc = include_str!("../../../book/src/report.md")]
    pub mod report {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
