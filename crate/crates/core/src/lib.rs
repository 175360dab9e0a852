//! Core pipeline for an sEMG-driven hand rehabilitation glove.
//!
//! Single-channel rectified sEMG is segmented into gesture windows, reduced to
//! five time-domain features and classified as grasp or release by a
//! K-nearest-neighbour model. Classified intents drive a rate-limited
//! pneumatic controller whose finger channels are evaluated through a forward
//! model of the rigid-shell / soft-chamber hybrid actuator. The [`session`]
//! module wires these stages into an instruction-driven exercise and the
//! [`service`] module publishes the resulting event stream to observers.

pub mod actuator;
pub mod classifier;
pub mod control;
pub mod corpus;
pub mod features;
mod gesture;
pub mod service;
pub mod session;
pub mod signal;

pub use gesture::{Gesture, ParseGestureError};
