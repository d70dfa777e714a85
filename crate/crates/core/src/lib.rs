//! Multi-object fish tracking by detection.
pub mod association;
pub mod cli;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod sim;
pub mod trajectory;
