//! Quasi-static articulated-object simulator.
//!
//! One actuation moves exactly one part. A force `direction` applied at
//! `point` drives the part's joint by `STEP_GAIN · (direction · v̂(point))`,
//! where `v̂` is the unit velocity of the point under positive joint motion.
//! The motion is integrated in [`SUBSTEPS`] equal substeps; at each substep
//! the moving part's box is tested against its collision partners and motion
//! stops at the last collision-free substep. Limits clamp the target.
//!
//! Gravity is zero, so an unactuated world never changes. Part mass is
//! carried for bookkeeping only and does not scale the response.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    fit_bounding_box, sample_box_surface, transform_cloud, BoundingBox, PointCloud, Vec3,
};
use crate::kinematics::{forward_transform, JointState, JointType};

pub type PartId = usize;

/// Joint displacement per actuation at perfect alignment (rad or m).
pub const STEP_GAIN: f64 = 0.1;
pub const SUBSTEPS: usize = 10;
/// Maximum distance between an action point and the part surface (m).
pub const ON_PART_TOLERANCE: f64 = 1e-3;
/// Penetration depth below which touching boxes are not in contact.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub id: PartId,
    pub name: String,
    /// Surface samples at `theta = 0`, world frame.
    pub rest_cloud: Arc<PointCloud>,
    pub joint: JointState,
    pub mass: f64,
    pub movable: bool,
    /// The part this joint attaches to; `None` means the world.
    pub parent: Option<PartId>,
}

impl Part {
    pub fn current_cloud(&self) -> PointCloud {
        transform_cloud(&self.rest_cloud, &forward_transform(&self.joint))
    }

    pub fn rest_box(&self) -> BoundingBox {
        fit_bounding_box(&self.rest_cloud)
    }

    pub fn box_at(&self, theta: f64) -> BoundingBox {
        self.rest_box().transformed(&self.joint.spec.transform_at(theta))
    }

    pub fn current_box(&self) -> BoundingBox {
        self.box_at(self.joint.theta_cur)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub point: Vec3,
    pub direction: Vec3,
}

impl Action {
    /// Builds an action, normalizing `direction`.
    pub fn new(point: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n.is_finite() && n > 1e-12) || !point.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidAction(format!(
                "point {point:?} / direction {direction:?}"
            )));
        }
        Ok(Self {
            point,
            direction: direction / n,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub moving: PartId,
    pub blocking: PartId,
    /// Joint value at which the moving part stopped.
    pub contact_theta: f64,
}

/// Result of previewing one actuation without committing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Motion {
    pub part: PartId,
    pub theta_before: f64,
    pub theta_after: f64,
    pub contacts: Vec<Contact>,
}

impl Motion {
    pub fn displacement(&self) -> f64 {
        self.theta_after - self.theta_before
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub target: PartId,
    pub action: Action,
    pub delta_theta: Vec<f64>,
    pub theta_cur: Vec<f64>,
    pub contacts: Vec<Contact>,
    pub observed: Vec<PointCloud>,
}

impl StepOutcome {
    pub fn target_displacement(&self) -> f64 {
        self.delta_theta[self.target]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub parts: Vec<Part>,
    pub collision_pairs: BTreeSet<(PartId, PartId)>,
    pub rng_seed: u64,
}

fn ordered(a: PartId, b: PartId) -> (PartId, PartId) {
    (a.min(b), a.max(b))
}

impl World {
    pub fn new(
        parts: Vec<Part>,
        pairs: impl IntoIterator<Item = (PartId, PartId)>,
        rng_seed: u64,
    ) -> Result<Self> {
        let world = Self {
            parts,
            collision_pairs: pairs.into_iter().map(|(a, b)| ordered(a, b)).collect(),
            rng_seed,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.parts.iter().enumerate() {
            if p.id != i {
                return Err(Error::InvalidWorld(format!("part at index {i} has id {}", p.id)));
            }
            if !(p.mass > 0.0) {
                return Err(Error::InvalidWorld(format!("part {i} mass must be positive")));
            }
            if !p.joint.is_valid() {
                return Err(Error::InvalidWorld(format!("part {i} joint state {:?}", p.joint)));
            }
            if !p.movable && p.joint.kind() != JointType::Fixed {
                return Err(Error::InvalidWorld(format!("immovable part {i} needs a fixed joint")));
            }
            if let Some(parent) = p.parent {
                if parent >= self.parts.len() || parent == i {
                    return Err(Error::InvalidWorld(format!("part {i} has bad parent {parent}")));
                }
            }
        }
        for &(a, b) in &self.collision_pairs {
            if a == b || b >= self.parts.len() {
                return Err(Error::InvalidWorld(format!("bad collision pair ({a}, {b})")));
            }
            if self.parts[a].parent == Some(b) || self.parts[b].parent == Some(a) {
                return Err(Error::InvalidWorld(format!(
                    "parts {a} and {b} share a joint and cannot collide"
                )));
            }
        }
        Ok(())
    }

    pub fn part(&self, id: PartId) -> Result<&Part> {
        self.parts.get(id).ok_or(Error::UnknownPart(id))
    }

    fn part_mut(&mut self, id: PartId) -> Result<&mut Part> {
        self.parts.get_mut(id).ok_or(Error::UnknownPart(id))
    }

    pub fn theta(&self, id: PartId) -> Result<f64> {
        Ok(self.part(id)?.joint.theta_cur)
    }

    /// Sets a joint position, clamped to the joint limits.
    pub fn set_theta(&mut self, id: PartId, theta: f64) -> Result<()> {
        let joint = &mut self.part_mut(id)?.joint;
        joint.theta_cur = joint.clamp(theta);
        Ok(())
    }

    pub fn partners(&self, id: PartId) -> impl Iterator<Item = PartId> + '_ {
        self.collision_pairs.iter().filter_map(move |&(a, b)| {
            if a == id {
                Some(b)
            } else if b == id {
                Some(a)
            } else {
                None
            }
        })
    }

    pub fn observe(&self) -> Vec<PointCloud> {
        self.parts.iter().map(Part::current_cloud).collect()
    }

    pub fn observe_part(&self, id: PartId) -> Result<PointCloud> {
        Ok(self.part(id)?.current_cloud())
    }

    /// Distance from `point` to the current surface samples of part `id`.
    pub fn distance_to_part(&self, id: PartId, point: &Vec3) -> Result<f64> {
        let part = self.part(id)?;
        let local = forward_transform(&part.joint).inverse().apply(point);
        Ok(part.rest_cloud.distance_to(&local))
    }

    /// Computes the motion an action would cause without changing the world.
    pub fn preview(&self, target: PartId, action: &Action) -> Result<Motion> {
        let part = self.part(target)?;
        let distance = self.distance_to_part(target, &action.point)?;
        if distance > ON_PART_TOLERANCE {
            return Err(Error::PointNotOnPart {
                part: target,
                distance,
            });
        }
        let joint = &part.joint;
        let before = joint.theta_cur;
        let raw = match part.joint.spec.velocity_direction(&action.point) {
            Some(v) if part.movable => STEP_GAIN * action.direction.dot(&v),
            _ => 0.0,
        };
        let goal = joint.clamp(before + raw);
        if goal == before {
            return Ok(Motion {
                part: target,
                theta_before: before,
                theta_after: before,
                contacts: vec![],
            });
        }
        let partner_boxes: Vec<(PartId, BoundingBox)> = self
            .partners(target)
            .map(|id| (id, self.parts[id].current_box()))
            .collect();
        let rest_box = part.rest_box();
        let mut reached = before;
        for i in 1..=SUBSTEPS {
            let theta = if i == SUBSTEPS {
                goal
            } else {
                before + (goal - before) * (i as f64 / SUBSTEPS as f64)
            };
            let moving = rest_box.transformed(&joint.spec.transform_at(theta));
            let contacts: Vec<Contact> = partner_boxes
                .iter()
                .filter(|(_, b)| moving.intersects(b, CONTACT_TOLERANCE))
                .map(|&(id, _)| Contact {
                    moving: target,
                    blocking: id,
                    contact_theta: reached,
                })
                .collect();
            if !contacts.is_empty() {
                return Ok(Motion {
                    part: target,
                    theta_before: before,
                    theta_after: reached,
                    contacts,
                });
            }
            reached = theta;
        }
        Ok(Motion {
            part: target,
            theta_before: before,
            theta_after: reached,
            contacts: vec![],
        })
    }

    /// Applies an action and returns the motion only (no observation).
    pub fn step_part(&mut self, target: PartId, action: &Action) -> Result<Motion> {
        let motion = self.preview(target, action)?;
        self.part_mut(target)?.joint.theta_cur = motion.theta_after;
        Ok(motion)
    }

    pub fn apply_action(&mut self, target: PartId, action: &Action) -> Result<StepOutcome> {
        let motion = self.step_part(target, action)?;
        let mut delta_theta = vec![0.0; self.parts.len()];
        delta_theta[target] = motion.displacement();
        Ok(StepOutcome {
            target,
            action: *action,
            delta_theta,
            theta_cur: self.parts.iter().map(|p| p.joint.theta_cur).collect(),
            contacts: motion.contacts,
            observed: self.observe(),
        })
    }

    /// Perturbs the action by uniform `[-sigma, sigma]` offsets (point
    /// re-projected onto the part, direction renormalized), then applies it.
    pub fn perturb_action<R: Rng + ?Sized>(
        &self,
        target: PartId,
        action: &Action,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Action> {
        if sigma == 0.0 {
            return Ok(*action);
        }
        let mut offset = || Vec3::from_fn(|_, _| rng.random_range(-sigma..=sigma));
        let point = action.point + offset();
        let direction = action.direction + offset();
        let cloud = self.observe_part(target)?;
        let point = cloud.project(&point);
        Ok(Action::new(point, direction).unwrap_or(Action {
            point,
            direction: action.direction,
        }))
    }

    pub fn apply_noisy_action<R: Rng + ?Sized>(
        &mut self,
        target: PartId,
        action: &Action,
        sigma: f64,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        if sigma < 0.0 {
            return Err(Error::InvalidAction(format!("negative noise sigma {sigma}")));
        }
        let noisy = self.perturb_action(target, action, sigma, rng)?;
        self.apply_action(target, &noisy)
    }

    /// Independent copy of the world in which part `id` carries the joint
    /// `hyp`. The rest cloud is re-anchored so that the copy's part, posed
    /// at `hyp.theta_cur`, coincides with the current observation of `id`.
    pub fn clone_with_joint(&self, id: PartId, hyp: JointState) -> Result<World> {
        let observed = self.observe_part(id)?;
        let mut replica = self.clone();
        let part = replica.part_mut(id)?;
        let rest = transform_cloud(&observed, &forward_transform(&hyp).inverse());
        part.rest_cloud = Arc::new(rest);
        part.joint = hyp;
        part.movable = hyp.kind() != JointType::Fixed;
        Ok(replica)
    }

    pub fn to_scene_file(&self) -> SceneFile {
        SceneFile {
            parts: self
                .parts
                .iter()
                .map(|p| PartRecord {
                    id: p.id,
                    name: p.name.clone(),
                    cloud: CloudSource::Points {
                        points: p.rest_cloud.points().to_vec(),
                    },
                    joint: p.joint,
                    mass: p.mass,
                    movable: p.movable,
                    parent: p.parent,
                })
                .collect(),
            collision_pairs: self.collision_pairs.iter().map(|&(a, b)| [a, b]).collect(),
            rng_seed: self.rng_seed,
            task: None,
        }
    }
}

/// How a part's rest cloud is obtained when a scene file is loaded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CloudSource {
    BoxSurface {
        center: Vec3,
        half_extents: Vec3,
        n_points: usize,
        seed: u64,
    },
    Points {
        points: Vec<Vec3>,
    },
}

impl CloudSource {
    pub fn materialize(&self) -> Result<PointCloud> {
        match self {
            CloudSource::BoxSurface {
                center,
                half_extents,
                n_points,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                sample_box_surface(center, half_extents, *n_points, &mut rng)
            }
            CloudSource::Points { points } => PointCloud::new(points.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub id: PartId,
    pub name: String,
    pub cloud: CloudSource,
    pub joint: JointState,
    pub mass: f64,
    pub movable: bool,
    #[serde(default)]
    pub parent: Option<PartId>,
}

/// Goal metadata attached to benchmark scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// Part to estimate or open.
    pub goal_part: PartId,
    /// World direction the goal part's surface should move to open.
    pub open_direction: Vec3,
    /// Joint displacement from the initial pose that counts as open.
    pub open_threshold: f64,
}

/// The JSON scene document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub parts: Vec<PartRecord>,
    pub collision_pairs: Vec<[PartId; 2]>,
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
}

impl SceneFile {
    pub fn build(&self) -> Result<World> {
        let parts = self
            .parts
            .iter()
            .map(|r| {
                Ok(Part {
                    id: r.id,
                    name: r.name.clone(),
                    rest_cloud: Arc::new(r.cloud.materialize()?),
                    joint: r.joint,
                    mass: r.mass,
                    movable: r.movable,
                    parent: r.parent,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        World::new(
            parts,
            self.collision_pairs.iter().map(|p| (p[0], p[1])),
            self.rng_seed,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
