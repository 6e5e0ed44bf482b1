//! Articulation inference and puzzle solving by interactive perception.

pub mod action_select;
pub mod bench;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod hypotheses;
pub mod kinematics;
pub mod puzzle;
pub mod sim;

pub use error::{Error, Result};
