//! Estimation and inference for incremental propensity score interventions.
//!
//! An incremental intervention multiplies each unit's odds of treatment by
//! a factor `delta`; the target is the mean outcome `psi(delta)` had
//! treatment followed the shifted propensities at every timepoint. The
//! crate provides the data model, nuisance learners, ground-truth oracles,
//! plug-in / IPW / cross-fit efficient estimators, pointwise and uniform
//! (multiplier bootstrap) inference with a test of no effect, and the
//! Kang-Schafer simulation harness.

pub mod dataset;
pub mod estimators;
pub mod inference;
pub mod intervention;
pub mod learners;
pub mod rng;
pub mod simulation;
