//! Simulation and verification toolkit for leafed Galton-Watson forests with
//! edge lengths and for critical multitype Galton-Watson forests with
//! countably many types.
//!
//! The main entry points are [`leafed`] (leafed forests and their
//! exploration processes), [`multitype`] (multitype forests and spectral
//! data), [`reduction`] (multitype to leafed), [`spine`] (size-biased spines
//! and many-to-one checks), [`scaling`] (statistical checks of the scaling
//! limits) and [`laminations`] (the disk-lamination law).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod enumerated;
pub mod error;
pub mod explore;
pub mod laminations;
pub mod lawspec;
pub mod leafed;
pub mod multitype;
pub mod reduction;
pub mod rng;
pub mod scaling;
pub mod spine;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
