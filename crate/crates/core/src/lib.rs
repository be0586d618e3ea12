//! Curvature flows of planar networks with smooth and crystalline anisotropies.

pub mod anisotropy;
pub mod crystalline;
pub mod error;
pub mod geometry;
pub mod network;
pub mod poly_flow;
pub mod smooth_flow;

pub use error::{Error, Result};
pub use geometry::Vec2;
