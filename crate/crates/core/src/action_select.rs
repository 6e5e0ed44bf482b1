//! Informative and goal-conditioned action selection.
//!
//! A small particle filter over actions runs against a single hypothesis
//! drawn from the pool. Action particles start at random surface points
//! with one of the six axis directions, are scored by simulating them on the
//! hypothesis replica, resampled by score and jittered in position. The
//! best particle of the final round is returned.
//!
//! The hypothesis is reproduced from the current observation, so its cloud
//! shares point order with the real one and actions are tracked by point
//! index.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::hypotheses::{systematic_indices, ParticlePool};
use crate::sim::{Action, PartId, World};

pub const AXIS_DIRECTIONS: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

pub fn axis_direction(i: usize) -> Vec3 {
    let d = AXIS_DIRECTIONS[i];
    Vec3::new(d[0], d[1], d[2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionSelectConfig {
    pub n_action_particles: usize,
    pub n_updates: usize,
    /// Std of the position jitter between rounds (m).
    pub position_noise_std: f64,
    /// Sample the final action by weight instead of taking the argmax.
    pub sample_final: bool,
    /// Added to the goal distance before inversion.
    pub goal_epsilon: f64,
}

impl Default for ActionSelectConfig {
    fn default() -> Self {
        Self {
            n_action_particles: 100,
            n_updates: 3,
            position_noise_std: 0.02,
            sample_final: false,
            goal_epsilon: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionParticle {
    pub point_index: usize,
    pub direction_index: usize,
    pub score: f64,
}

/// What a goal-conditioned action should achieve, in hypothesis joint
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Desired {
    /// Drive the joint to this value.
    JointValue(f64),
    /// Move the part surface along this world direction as far as possible.
    Direction(Vec3),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// The action expressed on the real observed cloud.
    pub action: Action,
    pub score: f64,
    /// Joint displacement the action causes on the hypothesis.
    pub predicted_displacement: f64,
    /// Pool index of the hypothesis the action was optimized for.
    pub hypothesis: usize,
    pub best_per_round: Vec<f64>,
}

/// Score of one rollout on the hypothesis replica.
pub trait ActionObjective: Sync {
    fn score(&self, theta_before: f64, theta_after: f64) -> f64;
}

/// Deformation `|θ_{t+1} − θ_t|`.
pub struct Deformation;

impl ActionObjective for Deformation {
    fn score(&self, before: f64, after: f64) -> f64 {
        (after - before).abs()
    }
}

/// `1 / (|θ_{t+1} − θ*| + ε)`.
pub struct GoalCloseness {
    pub target: f64,
    pub epsilon: f64,
}

impl ActionObjective for GoalCloseness {
    fn score(&self, _before: f64, after: f64) -> f64 {
        1.0 / ((after - self.target).abs() + self.epsilon)
    }
}

/// Sign of the surface motion along `direction` under positive joint motion
/// of `target` in `replica` (0 when the surface does not move along it).
pub fn direction_sign(replica: &World, target: PartId, direction: &Vec3) -> Result<f64> {
    let part = replica.part(target)?;
    let theta = part.joint.theta_cur;
    let delta = 1e-3;
    let a = crate::geometry::transform_cloud(&part.rest_cloud, &part.joint.spec.transform_at(theta));
    let b = crate::geometry::transform_cloud(
        &part.rest_cloud,
        &part.joint.spec.transform_at(theta + delta),
    );
    let projected = (b.centroid() - a.centroid()).dot(direction);
    Ok(if projected > 1e-9 {
        1.0
    } else if projected < -1e-9 {
        -1.0
    } else {
        0.0
    })
}

/// Joint-value goal equivalent to `desired` on this replica.
pub fn goal_value(replica: &World, target: PartId, desired: &Desired) -> Result<f64> {
    match desired {
        Desired::JointValue(v) => Ok(*v),
        Desired::Direction(dir) => {
            let joint = replica.part(target)?.joint;
            let sign = direction_sign(replica, target, dir)?;
            Ok(joint.theta_cur + sign * joint.kind().theta_max())
        }
    }
}

fn check_cloud(replica: &World, target: PartId, observed: &PointCloud) -> Result<PointCloud> {
    let cloud = replica.observe_part(target)?;
    if cloud.len() != observed.len() {
        return Err(Error::InvalidWorld(format!(
            "replica cloud has {} points, observation {}",
            cloud.len(),
            observed.len()
        )));
    }
    Ok(cloud)
}

fn rollout(replica: &World, target: PartId, cloud: &PointCloud, a: &ActionParticle) -> Result<(f64, f64)> {
    let action = Action {
        point: cloud.points()[a.point_index],
        direction: axis_direction(a.direction_index),
    };
    let m = replica.preview(target, &action)?;
    Ok((m.theta_before, m.theta_after))
}

/// Runs the action filter against one hypothesis replica.
pub fn optimize_action<R: Rng + ?Sized, O: ActionObjective>(
    replica: &World,
    target: PartId,
    observed: &PointCloud,
    objective: &O,
    cfg: &ActionSelectConfig,
    rng: &mut R,
) -> Result<(ActionParticle, f64, Vec<f64>)> {
    let cloud = check_cloud(replica, target, observed)?;
    let n = cfg.n_action_particles.max(1);
    let mut particles: Vec<ActionParticle> = (0..n)
        .map(|_| ActionParticle {
            point_index: rng.random_range(0..cloud.len()),
            direction_index: rng.random_range(0..AXIS_DIRECTIONS.len()),
            score: 0.0,
        })
        .collect();
    let jitter = Normal::new(0.0, cfg.position_noise_std.max(0.0)).expect("finite std");
    let mut best_per_round = Vec::with_capacity(cfg.n_updates);
    let rounds = cfg.n_updates.max(1);
    let mut displacements = vec![0.0; n];
    for round in 0..rounds {
        let results: Vec<(f64, f64)> = particles
            .par_iter()
            .map(|a| rollout(replica, target, &cloud, a))
            .collect::<Result<_>>()?;
        for ((a, (before, after)), d) in particles.iter_mut().zip(&results).zip(&mut displacements) {
            a.score = objective.score(*before, *after);
            *d = after - before;
        }
        let best = argmax(&particles);
        best_per_round.push(particles[best].score);
        if round + 1 == rounds {
            break;
        }
        let elite = particles[best];
        let scores: Vec<f64> = particles.iter().map(|a| a.score).collect();
        let picks = systematic_indices(&scores, n, rng.random::<f64>())
            .unwrap_or_else(|_| (0..n).collect());
        let mut next: Vec<ActionParticle> = Vec::with_capacity(n);
        next.push(elite);
        for &i in picks.iter().skip(1) {
            let mut a = particles[i];
            if cfg.position_noise_std > 0.0 {
                let p = cloud.points()[a.point_index]
                    + Vec3::from_fn(|_, _| jitter.sample(rng));
                a.point_index = cloud.nearest(&p).0;
            }
            next.push(a);
        }
        particles = next;
    }
    let chosen = if cfg.sample_final {
        let scores: Vec<f64> = particles.iter().map(|a| a.score).collect();
        match WeightedIndex::new(&scores) {
            Ok(w) => w.sample(rng),
            Err(_) => argmax(&particles),
        }
    } else {
        argmax(&particles)
    };
    Ok((particles[chosen], displacements[chosen], best_per_round))
}

/// Index of the highest score; ties go to the lowest index.
fn argmax(particles: &[ActionParticle]) -> usize {
    let mut best = 0;
    for (i, a) in particles.iter().enumerate() {
        if a.score > particles[best].score {
            best = i;
        }
    }
    best
}

fn select_with<R: Rng + ?Sized>(
    pool: &ParticlePool,
    world: &World,
    cfg: &ActionSelectConfig,
    rng: &mut R,
    desired: Option<&Desired>,
) -> Result<Selection> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let k = pool.sample_index(rng)?;
    let observed = world.observe_part(pool.target)?;
    let observed = &observed;
    let replica = &pool.particles[k].reproduce(world, pool.target)?;
    let (best, displacement, rounds) = match desired {
        None => optimize_action(replica, pool.target, observed, &Deformation, cfg, rng)?,
        Some(d) => {
            let objective = GoalCloseness {
                target: goal_value(replica, pool.target, d)?,
                epsilon: cfg.goal_epsilon,
            };
            optimize_action(replica, pool.target, observed, &objective, cfg, rng)?
        }
    };
    Ok(Selection {
        action: Action {
            point: observed.points()[best.point_index],
            direction: axis_direction(best.direction_index),
        },
        score: best.score,
        predicted_displacement: displacement,
        hypothesis: k,
        best_per_round: rounds,
    })
}

/// Action that maximally deforms the target under one sampled hypothesis.
pub fn select_informative_action<R: Rng + ?Sized>(
    pool: &ParticlePool,
    world: &World,
    cfg: &ActionSelectConfig,
    rng: &mut R,
) -> Result<Selection> {
    select_with(pool, world, cfg, rng, None)
}

/// Action whose simulated outcome lands closest to `desired`.
pub fn select_goal_action<R: Rng + ?Sized>(
    pool: &ParticlePool,
    world: &World,
    desired: &Desired,
    cfg: &ActionSelectConfig,
    rng: &mut R,
) -> Result<Selection> {
    select_with(pool, world, cfg, rng, Some(desired))
}
