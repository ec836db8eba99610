//! Pathline dynamics similarity for 2D unsteady flows.

pub mod advect;
pub mod distribution;
pub mod dynamics;
pub mod exec;
pub mod field;
pub mod linalg;
pub mod simfield;
pub mod store;

pub use linalg::{Mat2, Vec2};
