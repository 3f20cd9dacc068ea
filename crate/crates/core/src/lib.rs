//! Impedance control for robots with elastic joints.
//!
//! The controller feeds back the measured external torque and the transmitted
//! joint torque so that the controlled robot behaves like another elastic-joint
//! robot with a chosen motor inertia and joint stiffness, while staying passive
//! from external torque to link velocity.
//!
//! - [`model`]: plant dynamics in momentum form.
//! - [`control`]: gain synthesis and control laws.
//! - [`transform`]: the coordinate change to the shaped closed loop.
//! - [`lti`]: transfer functions, frequency response and positive-realness.
//! - [`sim`]: fixed-step simulation with energy bookkeeping.

pub mod control;
pub mod error;
pub mod linalg;
pub mod lti;
pub mod model;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
