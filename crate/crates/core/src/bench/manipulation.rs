//! Estimate-then-open protocol scored by the proportion opened.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action_select::{direction_sign, Desired};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig, TrajectoryRecord};
use crate::hypotheses::PriorWeights;
use crate::kinematics::JointClass;
use crate::puzzle::proportion_opened;
use crate::sim::{Task, World};

pub const ESTIMATION_INTERACTIONS: usize = 10;
pub const TOTAL_INTERACTIONS: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManipulationResult {
    pub best_class: JointClass,
    pub estimation_interactions: usize,
    pub goal_interactions: usize,
    /// Fraction of the way from the initial pose to the far limit.
    pub proportion_opened: f64,
    /// True goal-part joint value after every interaction.
    pub theta: Vec<f64>,
    pub trajectory: Vec<TrajectoryRecord>,
}

/// Estimates the task's part for up to `estimation` interactions (stopping
/// early once confident), then spends the rest of `total` on pushes toward
/// the task's opening direction.
pub fn run_manipulation<R: Rng + ?Sized>(
    world: &mut World,
    task: &Task,
    cfg: &EstimatorConfig,
    prior: Option<&PriorWeights>,
    estimation: usize,
    total: usize,
    rng: &mut R,
) -> Result<ManipulationResult> {
    let part = task.goal_part;
    let joint = world.part(part)?.joint;
    // measure along the true opening direction of the joint
    let sign = direction_sign(world, part, &task.open_direction)?;
    let far = if sign >= 0.0 { joint.theta_high } else { -joint.theta_low };
    let init = sign * joint.theta_cur;
    if !(far > init) {
        return Err(Error::DegenerateRange { init, max: far });
    }
    let mut est = Estimator::new(world, part, cfg.clone(), prior, rng)?;
    let mut theta = Vec::with_capacity(total);
    let mut used = 0;
    while used < estimation.min(total) {
        let step = est.step(world, rng)?;
        used += 1;
        theta.push(world.theta(part)?);
        if step.blocked_by.is_some() || est.is_confident() {
            break;
        }
    }
    let estimation_interactions = used;
    let best_class = est.posterior().argmax().0;
    let desired = Desired::Direction(task.open_direction);
    while used < total {
        est.goal_step(world, &desired, rng)?;
        used += 1;
        theta.push(world.theta(part)?);
    }
    let signed: Vec<f64> = theta.iter().map(|t| sign * t).collect();
    Ok(ManipulationResult {
        best_class,
        estimation_interactions,
        goal_interactions: used - estimation_interactions,
        proportion_opened: proportion_opened(&signed, init, far)?,
        theta,
        trajectory: est.trajectory,
    })
}

/// The default 10 + 5 protocol.
pub fn run_default_protocol<R: Rng + ?Sized>(
    world: &mut World,
    task: &Task,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<ManipulationResult> {
    run_manipulation(world, task, cfg, None, ESTIMATION_INTERACTIONS, TOTAL_INTERACTIONS, rng)
}
