//! Reaction-diffusion simulator for a population whose climate envelope
//! shifts north across constricted domains.
//!
//! [`experiments::Executor`] drives the full pipeline: build a domain,
//! rasterize it, relax to the frozen-envelope steady state, run, and
//! classify the outcome. [`cli`] wraps it behind a flat `key=value`
//! configuration.

pub mod cli;
pub mod diagnostics;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod model;
pub mod solver;
