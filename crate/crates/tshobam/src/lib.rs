//! Simulation and verification laboratory for delayed bidirectional
//! associative-memory networks on time scales.
//!
//! The crate is layered bottom-up:
//! * [`timescale`]: computable time-scale calculus (jumps, Δ-integrals,
//!   Δ-derivatives, regressivity, the time-scale exponential);
//! * [`exprlang`]: a small closed-form scalar expression language used
//!   for coefficients, delays, inputs, and histories;
//! * [`model`]: the network description and its right-hand side and
//!   fixed-point operators;
//! * [`simulate`]: trajectory integration and almost-periodicity
//!   diagnostics;
//! * [`analysis`]: hypothesis checking, Picard iteration, exponential
//!   decay certificates, and Lyapunov-style monitoring;
//! * [`config`]: the serialized experiment description shared with the
//!   command-line driver.

pub mod analysis;
pub mod config;
pub mod exprlang;
pub mod model;
pub mod simulate;
pub mod timescale;
