//! Opening objects whose parts block each other.
//!
//! The solver keeps a LIFO queue of parts of interest. The part on top is
//! estimated first; if it runs into another movable part, that part is pushed
//! with an unknown desired configuration. Once a part has an estimate, the
//! solver picks the joint value that takes it farthest from the part it
//! blocks and drives it there with goal-conditioned actions.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_3;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action_select::{direction_sign, Desired};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig, TrajectoryRecord};
use crate::geometry::{chamfer, fit_bounding_box, transform_cloud, PointCloud, Vec3};
use crate::kinematics::THETA_MAX_REVOLUTE;
use crate::sim::{PartId, Task, World, CONTACT_TOLERANCE};

/// Poses checked when confirming that a part no longer blocks its parent.
pub const SWEEP_SAMPLES: usize = 50;
/// A joint goal counts as reached within this fraction of the joint's `θmax`.
pub const REACH_TOLERANCE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiDesired {
    Known(Desired),
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiStatus {
    Unsolved,
    Solved,
}

/// One entry of the parts-of-interest queue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoiEntry {
    pub part: PartId,
    pub desired: PoiDesired,
    pub status: PoiStatus,
    /// The part this entry was found blocking.
    pub parent: Option<PartId>,
    /// Goal configurations tried so far without clearing the parent.
    pub attempts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuzzleConfig {
    pub max_interactions: usize,
    pub goal_part: PartId,
    /// World direction the goal part's surface moves when opening.
    pub open_direction: Vec3,
    pub open_threshold: f64,
    pub n_theta_samples: usize,
    /// Pick uniformly among joint values within 5% of the best separation
    /// instead of the single best one.
    pub random_near_optimal: bool,
    /// Goal configurations tried per entry before it is dropped unsolved.
    pub max_attempts: usize,
}

impl Default for PuzzleConfig {
    fn default() -> Self {
        Self {
            max_interactions: 100,
            goal_part: 1,
            open_direction: Vec3::new(0.0, -1.0, 0.0),
            open_threshold: FRAC_PI_3,
            n_theta_samples: 11,
            random_near_optimal: false,
            max_attempts: 3,
        }
    }
}

impl PuzzleConfig {
    pub fn for_task(task: &Task) -> Self {
        Self {
            goal_part: task.goal_part,
            open_direction: task.open_direction,
            open_threshold: task.open_threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config { field: field.into(), message: message.into() })
        };
        if self.n_theta_samples < 2 {
            return bad("n_theta_samples", "must be at least 2");
        }
        if !(self.open_threshold > 0.0 && self.open_threshold <= THETA_MAX_REVOLUTE) {
            return bad("open_threshold", "must lie in (0, θmax]");
        }
        if !(self.open_direction.norm() > 0.0) {
            return bad("open_direction", "must be non-zero");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DependencyEvent {
    /// The part ran into `by` and `by` was queued.
    Interrupted { by: PartId },
    /// A goal joint value was computed for the part.
    Resolved { theta: f64 },
    /// The part no longer blocks its parent, or the goal part opened.
    Solved,
    /// Goal configurations were exhausted without clearing the parent.
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub part: PartId,
    pub desired: PoiDesired,
    pub event: DependencyEvent,
    /// Interactions used when the event happened.
    pub step: usize,
}

/// Trajectory line with queue snapshot and the dependency events it caused.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuzzleRecord {
    #[serde(flatten)]
    pub interaction: TrajectoryRecord,
    pub queue: Vec<PartId>,
    pub events: Vec<TraceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuzzleResult {
    pub outcome: Outcome,
    pub interactions_used: usize,
    pub dependency_trace: Vec<TraceEntry>,
    /// Ground-truth goal joint value after every interaction.
    pub goal_theta: Vec<f64>,
    pub trajectory: Vec<PuzzleRecord>,
}

impl PuzzleResult {
    pub fn solved(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// `n` evenly spaced values over `[low, high]`.
pub fn theta_grid(low: f64, high: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![low];
    }
    (0..n).map(|i| low + (high - low) * i as f64 / (n - 1) as f64).collect()
}

/// Separation of `part` in `replica` from `collided` at each grid value.
pub fn separation_profile(
    replica: &World,
    part: PartId,
    collided: &PointCloud,
    n: usize,
) -> Result<Vec<(f64, f64)>> {
    if collided.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let p = replica.part(part)?;
    let joint = p.joint;
    Ok(theta_grid(joint.theta_low, joint.theta_high, n)
        .into_iter()
        .map(|theta| {
            let posed = transform_cloud(&p.rest_cloud, &joint.spec.transform_at(theta));
            (theta, chamfer(&posed, collided))
        })
        .collect())
}

/// Joint value in `[θlow, θhigh]` that takes `part` farthest from `collided`.
/// Ties go to the value nearest 0.
pub fn resolve_direction(replica: &World, part: PartId, collided: &PointCloud, n: usize) -> Result<f64> {
    let profile = separation_profile(replica, part, collided, n)?;
    Ok(pick_best(&profile))
}

fn pick_best(profile: &[(f64, f64)]) -> f64 {
    let mut best = profile[0];
    for &(theta, d) in &profile[1..] {
        if d > best.1 || (d == best.1 && theta.abs() < best.0.abs()) {
            best = (theta, d);
        }
    }
    best.0
}

/// Grid values within 5% of the best separation.
fn near_optimal(profile: &[(f64, f64)]) -> Vec<f64> {
    let max = profile.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    profile.iter().filter(|p| p.1 >= 0.95 * max).map(|p| p.0).collect()
}

/// Uniform choice among grid values within 5% of the best separation.
pub fn resolve_direction_near_optimal<R: Rng + ?Sized>(
    replica: &World,
    part: PartId,
    collided: &PointCloud,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let near = near_optimal(&separation_profile(replica, part, collided, n)?);
    Ok(near[rng.random_range(0..near.len())])
}

/// `max_t (θ_t − θinit) / (θmax − θinit)`, clamped to `[0, 1]`.
pub fn proportion_opened(trajectory: &[f64], theta_init: f64, theta_max: f64) -> Result<f64> {
    if !(theta_max > theta_init) {
        return Err(Error::DegenerateRange { init: theta_init, max: theta_max });
    }
    let best = trajectory
        .iter()
        .map(|t| (t - theta_init) / (theta_max - theta_init))
        .fold(0.0, f64::max);
    Ok(best.clamp(0.0, 1.0))
}

/// True if `parent`, swept over its hypothesized limits in `replica`, never
/// touches the observed box of `part`.
pub fn parent_clears(replica: &World, parent: PartId, part_cloud: &PointCloud) -> Result<bool> {
    let p = replica.part(parent)?;
    let obstacle = fit_bounding_box(part_cloud);
    let rest = p.rest_box();
    let j = p.joint;
    Ok(theta_grid(j.theta_low, j.theta_high, SWEEP_SAMPLES)
        .into_iter()
        .all(|theta| !rest.transformed(&j.spec.transform_at(theta)).intersects(&obstacle, CONTACT_TOLERANCE)))
}

struct Solver<'a> {
    world: &'a mut World,
    cfg: &'a PuzzleConfig,
    est_cfg: &'a EstimatorConfig,
    rng: ChaCha8Rng,
    estimators: BTreeMap<PartId, Estimator>,
    queue: Vec<PoiEntry>,
    used: usize,
    trace: Vec<TraceEntry>,
    records: Vec<PuzzleRecord>,
    goal_theta: Vec<f64>,
}

impl Solver<'_> {
    fn event(&mut self, entry: &PoiEntry, event: DependencyEvent, pending: &mut Vec<TraceEntry>) {
        let t = TraceEntry { part: entry.part, desired: entry.desired, event, step: self.used };
        self.trace.push(t);
        pending.push(t);
    }

    fn estimator(&mut self, part: PartId) -> Result<&mut Estimator> {
        if !self.estimators.contains_key(&part) {
            let est = Estimator::new(self.world, part, self.est_cfg.clone(), None, &mut self.rng)?;
            self.estimators.insert(part, est);
        }
        Ok(self.estimators.get_mut(&part).expect("inserted above"))
    }

    /// Replica of the most probable hypothesis for `part` on the current world.
    fn map_replica(&mut self, part: PartId) -> Result<World> {
        let est = self.estimator(part)?;
        let particle = est.pool.particles[est.map_particle()].clone();
        particle.reproduce(self.world, part)
    }

    /// Replica of a particle drawn uniformly from the most probable class.
    fn sampled_replica(&mut self, part: PartId) -> Result<World> {
        let est = self.estimators.get(&part).expect("estimated before resolving");
        let (class, _) = est.posterior().argmax();
        let members: Vec<usize> = (0..est.pool.len()).filter(|&k| est.pool.class_of(k) == class).collect();
        let k = members[self.rng.random_range(0..members.len())];
        est.pool.particles[k].reproduce(self.world, part)
    }

    fn resolve(&mut self, entry: &PoiEntry) -> Result<f64> {
        let Some(parent) = entry.parent else {
            return Err(Error::InvalidWorld(format!("part {} has no parent to resolve against", entry.part)));
        };
        let replica = self.sampled_replica(entry.part)?;
        let collided = self.world.observe_part(parent)?;
        let joint = replica.part(entry.part)?.joint;
        let mut profile = separation_profile(&replica, entry.part, &collided, self.cfg.n_theta_samples)?;
        // a goal at the current pose would stall immediately
        let tol = REACH_TOLERANCE * joint.kind().theta_max();
        if profile.iter().any(|p| (p.0 - joint.theta_cur).abs() > tol) {
            profile.retain(|p| (p.0 - joint.theta_cur).abs() > tol);
        }
        Ok(if self.cfg.random_near_optimal {
            let near = near_optimal(&profile);
            near[self.rng.random_range(0..near.len())]
        } else {
            pick_best(&profile)
        })
    }

    fn queued(&self, part: PartId) -> bool {
        self.queue.iter().any(|e| e.part == part)
    }

    /// One real interaction on the top entry.
    fn tick(&mut self) -> Result<()> {
        let mut entry = *self.queue.last().expect("caller checks for an empty queue");
        let mut events = Vec::new();
        let part = entry.part;
        let max_est = self.est_cfg.max_interactions;
        let estimating = {
            let est = self.estimator(part)?;
            est.interactions < max_est && !est.is_confident()
        };

        let mut goal = None;
        if !estimating {
            if entry.desired == PoiDesired::Unknown {
                let theta = self.resolve(&entry)?;
                entry.desired = PoiDesired::Known(Desired::JointValue(theta));
                self.event(&entry, DependencyEvent::Resolved { theta }, &mut events);
            }
            if let PoiDesired::Known(d) = entry.desired {
                goal = Some(d);
            }
        }

        let before = self.world.observe_part(part)?.centroid();
        let world = &mut *self.world;
        let est = self.estimators.get_mut(&part).expect("created above");
        let interaction = match &goal {
            None => est.step(world, &mut self.rng)?,
            Some(d) => est.goal_step(world, d, &mut self.rng)?,
        };
        self.used += 1;
        self.goal_theta.push(self.world.theta(self.cfg.goal_part)?);
        let moved = (self.world.observe_part(part)?.centroid() - before).norm();

        if let Some(blocker) = interaction.blocked_by.filter(|b| !self.queued(*b)) {
            self.event(&entry, DependencyEvent::Interrupted { by: blocker }, &mut events);
            *self.queue.last_mut().expect("non-empty") = entry;
            self.queue.push(PoiEntry {
                part: blocker,
                desired: PoiDesired::Unknown,
                status: PoiStatus::Unsolved,
                parent: Some(part),
                attempts: 0,
            });
        } else if let (Some(Desired::JointValue(target)), Some(parent)) = (goal, entry.parent) {
            let est = &self.estimators[&part];
            let particle = &est.pool.particles[est.map_particle()];
            let joint = particle.joint(part);
            let close = (joint.theta_cur - target).abs() <= REACH_TOLERANCE * joint.kind().theta_max().max(1e-9);
            let stalled = moved < self.est_cfg.motion_threshold;
            if close || stalled {
                let replica = self.map_replica(parent)?;
                let cloud = self.world.observe_part(part)?;
                if parent_clears(&replica, parent, &cloud)? {
                    entry.status = PoiStatus::Solved;
                    self.event(&entry, DependencyEvent::Solved, &mut events);
                    self.queue.pop();
                } else {
                    entry.attempts += 1;
                    if entry.attempts >= self.cfg.max_attempts {
                        self.event(&entry, DependencyEvent::Dropped, &mut events);
                        self.queue.pop();
                    } else {
                        entry.desired = PoiDesired::Unknown;
                        *self.queue.last_mut().expect("non-empty") = entry;
                    }
                }
            } else {
                *self.queue.last_mut().expect("non-empty") = entry;
            }
        } else {
            *self.queue.last_mut().expect("non-empty") = entry;
        }

        let mut record = self.estimators[&part].trajectory.last().cloned().expect("interaction logged");
        record.step = self.used;
        self.records.push(PuzzleRecord {
            interaction: record,
            queue: self.queue.iter().map(|e| e.part).collect(),
            events,
        });
        Ok(())
    }
}

/// Runs the dependency-aware solver on `world` until the goal part opens past
/// the threshold or the interaction budget runs out.
pub fn solve_puzzle(
    world: &mut World,
    cfg: &PuzzleConfig,
    est_cfg: &EstimatorConfig,
    seed: u64,
) -> Result<PuzzleResult> {
    cfg.validate()?;
    est_cfg.validate()?;
    let door = cfg.goal_part;
    if !world.part(door)?.movable {
        return Err(Error::InvalidWorld(format!("goal part {door} is not movable")));
    }
    // success is judged on the true joint, as the benchmark defines it
    let open_sign = direction_sign(world, door, &cfg.open_direction)?;
    let theta0 = world.theta(door)?;
    let root = PoiEntry {
        part: door,
        desired: PoiDesired::Known(Desired::Direction(cfg.open_direction)),
        status: PoiStatus::Unsolved,
        parent: None,
        attempts: 0,
    };
    let mut s = Solver {
        world,
        cfg,
        est_cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
        estimators: BTreeMap::new(),
        queue: vec![root],
        used: 0,
        trace: Vec::new(),
        records: Vec::new(),
        goal_theta: Vec::new(),
    };
    let outcome = loop {
        if (s.world.theta(door)? - theta0) * open_sign >= cfg.open_threshold {
            let mut events = Vec::new();
            let mut done = root;
            done.status = PoiStatus::Solved;
            s.event(&done, DependencyEvent::Solved, &mut events);
            if let Some(last) = s.records.last_mut() {
                last.events.extend(events);
            }
            break Outcome::Success;
        }
        if s.used >= cfg.max_interactions {
            break Outcome::Failure;
        }
        if s.queue.is_empty() {
            s.queue.push(root);
        }
        s.tick()?;
    };
    Ok(PuzzleResult {
        outcome,
        interactions_used: s.used,
        dependency_trace: s.trace,
        goal_theta: s.goal_theta,
        trajectory: s.records,
    })
}
