//! Haptic-glove driven in-hand manipulation for a multi-fingered robotic hand.
//!
//! The crate is organised bottom-up:
//!
//! * [`se3`] – rotations, poses, twists, pseudoinverse and null-space helpers.
//! * [`grasp`] – grasp matrix, object wrench and equilibrating/interaction force fields.
//! * [`hand`] – DH serial chains, hand profiles, fingertip and object Jacobians.
//! * [`controller`] – joint impedance law, torque saturation, squeeze targets and
//!   the resolved-rate outer loop.
//! * [`plant`] – a quasi-static sticking-contact simulator closing the loop.
//! * [`intent`] – glove signal to object twist estimation, intent integration,
//!   PCA and synthetic intent traces.
//! * [`predictor`] – sliding-window LSTM regressor trained with BPTT.
//! * [`pipeline`] – end-to-end glove → intent → (prediction) → simulation runs.

// Validation is written as `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod grasp;
pub mod hand;
pub mod intent;
pub mod io;
pub mod pipeline;
pub mod plant;
pub mod predictor;
pub mod se3;
pub mod signal;

pub use error::{Error, Result};
