//! Benchmark scenes, baselines, metrics and the experiment runner.

pub mod affordance;
pub mod baselines;
pub mod experiment;
pub mod manipulation;
pub mod scenes;

pub use scenes::{generate_scene, GeneratedScene, SceneKind, SceneSpec, Setting};
