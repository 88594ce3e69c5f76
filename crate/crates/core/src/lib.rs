//! Two-scale structural analysis of space frames with geometrically complex
//! 3D joints.
//!
//! Joint geometry is discretized with the finite cell method on a Cartesian
//! grid, condensed into a superelement stiffness, assembled together with
//! Timoshenko beam elements, and the global solution is mapped back onto the
//! joint for resolved stress recovery.

mod error;

pub mod beam;
pub mod condense;
pub mod fcm;
pub mod geometry;
pub mod io;
pub mod scenario;
pub mod sparse;
pub mod twoscale;

pub use error::{Error, Result};
