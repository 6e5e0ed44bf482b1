//! Procedural box-assembly scenes.
//!
//! Single-joint scenes pair a fixed body with one articulated part whose
//! true joint is the canonical proposal of the requested class. PuzzleBoxes
//! put a right-hinged door in front of a body and lock it with bolts and
//! latches; chained locks are themselves blocked by pins and caps.

use std::f64::consts::FRAC_PI_3;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_bounding_box, sample_box_surface, transform_cloud, PointCloud, Vec3};
use crate::kinematics::{propose_joints, JointClass, JointSpec, JointState, JointType};
use crate::sim::{CloudSource, Part, PartId, PartRecord, SceneFile, Task, World};

pub const PUZZLE_LEVELS: [(usize, usize); 5] = [(1, 1), (2, 1), (3, 1), (1, 2), (1, 3)];
pub const PART_POINTS: usize = 256;
pub const BODY_POINTS: usize = 200;
const GAP: f64 = 0.003;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Closed,
    HalfOpened,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SceneKind {
    /// Wall plus side-hinged leaf.
    Door,
    /// Box with a lid lifted off its top.
    BoxLid,
    /// Cabinet body plus drawer or sliding panel.
    Drawer,
    /// Body plus a door hinged on any side, or a fixed decorative panel.
    SafeLike,
    PuzzleBox { chain: usize, locks: usize, dummies: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub setting: Setting,
    /// True class of the articulated part for single-joint scenes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_class: Option<JointClass>,
    pub seed: u64,
}

impl SceneSpec {
    /// Single-joint scene for `class`, with the category that hosts it.
    pub fn single(class: JointClass, setting: Setting, seed: u64) -> Self {
        let kind = match class {
            JointClass::RevLeft | JointClass::RevRight => SceneKind::Door,
            JointClass::RevTop | JointClass::RevBottom | JointClass::Fixed => SceneKind::SafeLike,
            JointClass::PrisX | JointClass::PrisY => SceneKind::Drawer,
            JointClass::PrisZ => SceneKind::BoxLid,
        };
        Self { kind, setting, true_class: Some(class), seed }
    }

    pub fn puzzle(chain: usize, locks: usize, dummies: bool, seed: u64) -> Self {
        Self {
            kind: SceneKind::PuzzleBox { chain, locks, dummies },
            setting: Setting::Closed,
            true_class: None,
            seed,
        }
    }

    pub fn label(&self) -> String {
        match (self.kind, self.true_class) {
            (SceneKind::PuzzleBox { chain, locks, dummies }, _) => {
                format!("puzzlebox-{chain}x{locks}{}", if dummies { "-dummy" } else { "" })
            }
            (kind, Some(c)) => format!("{}-{}", kind_name(kind), c.name()),
            (kind, None) => kind_name(kind).to_string(),
        }
    }
}

impl SceneSpec {
    /// Parses `puzzlebox-CxL[-dummy]` or `CLASS[@half-opened]`, e.g.
    /// `puzzlebox-2x1`, `rev-left`, `pris-y@half-opened`.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("unrecognised scene {text:?}"));
        if let Some(rest) = text.strip_prefix("puzzlebox-") {
            let (dims, dummies) = match rest.strip_suffix("-dummy") {
                Some(d) => (d, true),
                None => (rest, false),
            };
            let (c, l) = dims.split_once('x').ok_or_else(bad)?;
            let chain = c.parse().map_err(|_| bad())?;
            let locks = l.parse().map_err(|_| bad())?;
            return Ok(Self::puzzle(chain, locks, dummies, seed));
        }
        let (class, setting) = match text.split_once('@') {
            None | Some((_, "closed")) => (text.split('@').next().unwrap_or(text), Setting::Closed),
            Some((c, "half-opened")) => (c, Setting::HalfOpened),
            Some(_) => return Err(bad()),
        };
        let class = JointClass::from_name(class).ok_or_else(bad)?;
        Ok(Self::single(class, setting, seed))
    }
}

fn kind_name(kind: SceneKind) -> &'static str {
    match kind {
        SceneKind::Door => "door",
        SceneKind::BoxLid => "box-lid",
        SceneKind::Drawer => "drawer",
        SceneKind::SafeLike => "safe",
        SceneKind::PuzzleBox { .. } => "puzzlebox",
    }
}

/// Scripted unlock step: drive `part` to joint value `target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub part: PartId,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScene {
    pub spec: SceneSpec,
    pub file: SceneFile,
    pub world: World,
    /// True joint class per part, `None` for the static body.
    pub true_classes: Vec<Option<JointClass>>,
    /// Omniscient unlock order (PuzzleBoxes only).
    pub plan: Vec<PlanStep>,
}

impl GeneratedScene {
    pub fn task(&self) -> &Task {
        self.file.task.as_ref().expect("generated scenes carry a task")
    }
}

struct Builder {
    rng: ChaCha8Rng,
    parts: Vec<PartRecord>,
    classes: Vec<Option<JointClass>>,
    pairs: Vec<[PartId; 2]>,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            parts: Vec::new(),
            classes: Vec::new(),
            pairs: Vec::new(),
        }
    }

    fn cloud(&mut self, center: Vec3, half: Vec3, n: usize) -> Result<PointCloud> {
        sample_box_surface(&center, &half, n, &mut self.rng)
    }

    fn body(&mut self, center: Vec3, half: Vec3) -> Result<PartId> {
        let cloud = self.cloud(center, half, BODY_POINTS)?;
        self.push("body", cloud, JointState::fixed(center), false, None, None)
    }

    fn push(
        &mut self,
        name: &str,
        cloud: PointCloud,
        joint: JointState,
        movable: bool,
        parent: Option<PartId>,
        class: Option<JointClass>,
    ) -> Result<PartId> {
        let id = self.parts.len();
        self.parts.push(PartRecord {
            id,
            name: name.to_string(),
            cloud: CloudSource::Points { points: cloud.points().to_vec() },
            joint,
            mass: 1.0,
            movable,
            parent,
        });
        self.classes.push(class);
        Ok(id)
    }

    /// Adds an articulated part whose joint is proposal `class` of its own
    /// box, opening by `range` in the direction `sign`.
    #[allow(clippy::too_many_arguments)]
    fn articulated(
        &mut self,
        name: &str,
        center: Vec3,
        half: Vec3,
        class: JointClass,
        sign: f64,
        range: f64,
        setting: Setting,
    ) -> Result<PartId> {
        let cloud = self.cloud(center, half, PART_POINTS)?;
        let spec = *propose_joints(&fit_bounding_box(&cloud)).get(class.canonical_proposal());
        self.articulated_with(name, cloud, spec, sign, range, setting, Some(class))
    }

    #[allow(clippy::too_many_arguments)]
    fn articulated_with(
        &mut self,
        name: &str,
        cloud: PointCloud,
        spec: JointSpec,
        sign: f64,
        range: f64,
        setting: Setting,
        class: Option<JointClass>,
    ) -> Result<PartId> {
        if spec.kind == JointType::Fixed {
            return self.push(name, cloud, JointState::fixed(spec.anchor), false, Some(0), class);
        }
        let (low, high) = if sign > 0.0 { (0.0, range) } else { (-range, 0.0) };
        let (cloud, low, high) = match setting {
            Setting::Closed => (cloud, low, high),
            Setting::HalfOpened => {
                let mid = 0.5 * (low + high);
                (transform_cloud(&cloud, &spec.transform_at(mid)), low - mid, high - mid)
            }
        };
        let joint = JointState::new(spec, low, high, 0.0)?;
        self.push(name, cloud, joint, true, Some(0), class)
    }

    fn finish(
        self,
        spec: SceneSpec,
        task: Task,
        plan: Vec<PlanStep>,
    ) -> Result<GeneratedScene> {
        let file = SceneFile {
            parts: self.parts,
            collision_pairs: self.pairs,
            rng_seed: spec.seed,
            task: Some(task),
        };
        let world = file.build()?;
        Ok(GeneratedScene { spec, file, world, true_classes: self.classes, plan })
    }
}

/// Sign of joint motion that moves the part's centroid along `dir`.
fn opening_sign(cloud: &PointCloud, spec: &JointSpec, dir: &Vec3) -> f64 {
    let moved = transform_cloud(cloud, &spec.transform_at(1e-3));
    if (moved.centroid() - cloud.centroid()).dot(dir) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<GeneratedScene> {
    match spec.kind {
        SceneKind::PuzzleBox { chain, locks, dummies } => puzzle_box(spec, chain, locks, dummies),
        _ => single_joint(spec),
    }
}

fn single_joint(spec: &SceneSpec) -> Result<GeneratedScene> {
    let class = spec
        .true_class
        .ok_or_else(|| Error::InvalidSpec("single-joint scenes need a true class".into()))?;
    let expected = SceneSpec::single(class, spec.setting, spec.seed).kind;
    if expected != spec.kind {
        return Err(Error::InvalidSpec(format!(
            "{} is not hosted by {}",
            class.name(),
            kind_name(spec.kind)
        )));
    }
    let mut b = Builder::new(spec.seed);
    let w = b.rng.random_range(0.4..0.7);
    let h = b.rng.random_range(0.4..0.7);
    let t = b.rng.random_range(0.02..0.04);
    let depth = b.rng.random_range(0.3..0.45);
    let rev_range = b.rng.random_range(0.5..0.8);
    let pris_range = b.rng.random_range(0.2..0.35);
    let z0 = 0.05;
    let body_center = Vec3::new(0.0, depth / 2.0, (h + 2.0 * z0) / 2.0);
    let body_half = Vec3::new(w / 2.0 + 0.05, depth / 2.0, h / 2.0 + z0);
    b.body(body_center, body_half)?;
    let front_center = Vec3::new(0.0, -t / 2.0, z0 + h / 2.0);
    let front_half = Vec3::new(w / 2.0, t / 2.0, h / 2.0);
    let outward = Vec3::new(0.0, -1.0, 0.0);

    let (name, center, half, open, range) = match class {
        JointClass::RevLeft | JointClass::RevRight => ("leaf", front_center, front_half, outward, rev_range),
        JointClass::RevTop | JointClass::RevBottom => ("door", front_center, front_half, outward, rev_range),
        JointClass::Fixed => ("panel", front_center, front_half, outward, 0.0),
        JointClass::PrisY => {
            let dh = b.rng.random_range(0.12..0.25);
            let dd = depth * 0.8;
            let c = Vec3::new(0.0, dd / 2.0 - t, z0 + h / 2.0);
            ("drawer", c, Vec3::new(w / 2.0 - 0.02, dd / 2.0, dh / 2.0), outward, pris_range)
        }
        JointClass::PrisX => {
            let side = if b.rng.random::<bool>() { 1.0 } else { -1.0 };
            ("slider", front_center, Vec3::new(w / 4.0, t / 2.0, h / 2.0), Vec3::new(side, 0.0, 0.0), pris_range)
        }
        JointClass::PrisZ => {
            let c = Vec3::new(0.0, depth / 2.0, h + 2.0 * z0 + t / 2.0);
            ("lid", c, Vec3::new(w / 2.0 + 0.05, depth / 2.0, t / 2.0), Vec3::z(), pris_range)
        }
    };
    let cloud = b.cloud(center, half, PART_POINTS)?;
    let joint_spec = *propose_joints(&fit_bounding_box(&cloud)).get(class.canonical_proposal());
    let sign = opening_sign(&cloud, &joint_spec, &open);
    let id = b.articulated_with(name, cloud, joint_spec, sign, range, spec.setting, Some(class))?;
    let threshold = if class == JointClass::Fixed { 0.0 } else { range };
    let task = Task { goal_part: id, open_direction: open, open_threshold: threshold };
    b.finish(*spec, task, Vec::new())
}

/// Door geometry shared by every lock placement.
struct DoorFrame {
    width: f64,
    lock_y: f64,
}

impl DoorFrame {
    fn left(&self) -> f64 {
        -self.width / 2.0
    }
}

fn puzzle_box(spec: &SceneSpec, chain: usize, locks: usize, dummies: bool) -> Result<GeneratedScene> {
    if !PUZZLE_LEVELS.contains(&(chain, locks)) {
        return Err(Error::InvalidSpec(format!("unsupported PuzzleBox level ({chain}, {locks})")));
    }
    if spec.setting != Setting::Closed {
        return Err(Error::InvalidSpec("PuzzleBoxes start closed".into()));
    }
    let mut b = Builder::new(spec.seed);
    let w = b.rng.random_range(0.5..0.7);
    let h = b.rng.random_range(0.5..0.7);
    let t = 0.03;
    let z0 = 0.05;
    b.body(
        Vec3::new(0.0, 0.2, (h + 2.0 * z0) / 2.0),
        Vec3::new(w / 2.0 + 0.05, 0.2, h / 2.0 + z0),
    )?;
    let door_range = b.rng.random_range(1.3..1.5);
    let door = b.articulated(
        "door",
        Vec3::new(0.0, -t / 2.0, z0 + h / 2.0),
        Vec3::new(w / 2.0, t / 2.0, h / 2.0),
        JointClass::RevRight,
        1.0,
        door_range,
        Setting::Closed,
    )?;
    let frame = DoorFrame { width: w, lock_y: -t - GAP - 0.015 };
    let slots: Vec<f64> = match locks {
        1 => vec![0.5],
        2 => vec![0.3, 0.7],
        _ => vec![0.2, 0.5, 0.8],
    };
    let mut plan = Vec::new();
    for &s in &slots {
        let z = z0 + s * h;
        let mut steps = Vec::new();
        let bolt_only = chain > 1;
        let depth1 = lock_depth1(&mut b, &frame, z, door, bolt_only, &mut steps)?;
        if chain >= 2 {
            let pin = pin_depth2(&mut b, &frame, z, depth1, &mut steps)?;
            if chain >= 3 {
                cap_depth3(&mut b, &frame, z, pin, &mut steps)?;
            }
        }
        steps.reverse();
        plan.extend(steps);
    }
    if dummies {
        let n = b.rng.random_range(1..=2);
        for i in 0..n {
            let z = z0 + h * (0.25 + 0.5 * i as f64);
            let r = b.rng.random_range(0.1..0.2);
            let cloud = b.cloud(
                Vec3::new(w / 2.0 + 0.1, frame.lock_y, z),
                Vec3::new(0.04, 0.015, 0.02),
                PART_POINTS / 2,
            )?;
            let spec_d = *propose_joints(&fit_bounding_box(&cloud)).get(JointClass::PrisX.canonical_proposal());
            let id = b.articulated_with("dummy", cloud, spec_d, -1.0, r, Setting::Closed, Some(JointClass::PrisX))?;
            b.pairs.push([door, id]);
        }
    }
    plan.push(PlanStep { part: door, target: FRAC_PI_3 + 0.05 });
    let task = Task {
        goal_part: door,
        open_direction: Vec3::new(0.0, -1.0, 0.0),
        open_threshold: FRAC_PI_3,
    };
    let scene = b.finish(*spec, task, plan)?;
    check_solvable(&scene)?;
    Ok(scene)
}

/// Bolt sliding left or latch swinging up across the door's free edge.
fn lock_depth1(
    b: &mut Builder,
    f: &DoorFrame,
    z: f64,
    door: PartId,
    bolt_only: bool,
    steps: &mut Vec<PlanStep>,
) -> Result<PartId> {
    let latch = !bolt_only && b.rng.random::<bool>();
    let id = if latch {
        let center = Vec3::new(f.left() - 0.09, f.lock_y, z);
        let cloud = b.cloud(center, Vec3::new(0.1, 0.015, 0.01), PART_POINTS / 2)?;
        let bbox = fit_bounding_box(&cloud);
        // hinge at the left end, swinging the right end upward
        let spec = JointSpec::revolute(bbox.face_center(0, -1.0), Vec3::y());
        let r = b.rng.random_range(1.3..1.5);
        let sign = opening_sign(&cloud, &spec, &Vec3::z());
        let id = b.articulated_with("latch", cloud, spec, sign, r, Setting::Closed, Some(JointClass::RevLeft))?;
        steps.push(PlanStep { part: id, target: sign * r });
        id
    } else {
        let center = Vec3::new(f.left() + 0.02, f.lock_y, z);
        let r = b.rng.random_range(0.15..0.22);
        let id = b.articulated("bolt", center, Vec3::new(0.05, 0.015, 0.025), JointClass::PrisX, -1.0, r, Setting::Closed)?;
        steps.push(PlanStep { part: id, target: -r });
        id
    };
    b.pairs.push([door, id]);
    Ok(id)
}

/// Vertical pin left of a bolt; rises to free it.
fn pin_depth2(b: &mut Builder, f: &DoorFrame, z: f64, bolt: PartId, steps: &mut Vec<PlanStep>) -> Result<PartId> {
    let x = f.left() - 0.03 - GAP - 0.015;
    let r = b.rng.random_range(0.12..0.18);
    let id = b.articulated("pin", Vec3::new(x, f.lock_y, z), Vec3::new(0.015, 0.015, 0.04), JointClass::PrisZ, 1.0, r, Setting::Closed)?;
    b.pairs.push([bolt, id]);
    steps.push(PlanStep { part: id, target: r });
    Ok(id)
}

/// Cap resting on a pin; slides left or out toward the viewer.
fn cap_depth3(b: &mut Builder, f: &DoorFrame, z: f64, pin: PartId, steps: &mut Vec<PlanStep>) -> Result<PartId> {
    let x = f.left() - 0.03 - GAP - 0.015;
    let center = Vec3::new(x, f.lock_y, z + 0.04 + GAP + 0.015);
    let r = b.rng.random_range(0.12..0.18);
    let (class, sign) = if b.rng.random::<bool>() {
        (JointClass::PrisX, -1.0)
    } else {
        (JointClass::PrisY, -1.0)
    };
    let id = b.articulated("cap", center, Vec3::new(0.04, 0.015, 0.015), class, sign, r, Setting::Closed)?;
    b.pairs.push([pin, id]);
    steps.push(PlanStep { part: id, target: -r });
    Ok(id)
}

/// Pushes `part` along its true joint toward `target` until it gets there
/// or stops moving. Returns the number of interactions used.
pub fn drive_true_joint(world: &mut World, part: PartId, target: f64, budget: usize) -> Result<usize> {
    let positive = target > world.theta(part)?;
    let mut used = 0;
    while used < budget {
        let p = world.part(part)?;
        let remaining = if positive { target - p.joint.theta_cur } else { p.joint.theta_cur - target };
        if remaining <= 1e-12 {
            break;
        }
        let Some(action) = true_push(p, positive) else { break };
        let m = world.step_part(part, &action)?;
        used += 1;
        if m.displacement().abs() < 1e-12 {
            break;
        }
    }
    Ok(used)
}

/// Action moving the part most quickly in the requested joint direction.
pub fn true_push(part: &Part, positive: bool) -> Option<crate::sim::Action> {
    let cloud = part.current_cloud();
    let spec = part.joint.spec;
    let current = spec.transform_at(part.joint.theta_cur);
    let mut best: Option<(f64, Vec3, Vec3)> = None;
    for (rest, p) in part.rest_cloud.points().iter().zip(cloud.points()) {
        let lever = match spec.kind {
            JointType::Revolute => (current.apply(rest) - spec.anchor).cross(&spec.axis).norm(),
            JointType::Prismatic => 1.0,
            JointType::Fixed => return None,
        };
        if best.map_or(true, |b| lever > b.0 + 1e-12) {
            let v = spec.velocity_direction(p)?;
            best = Some((lever, *p, if positive { v } else { -v }));
        }
    }
    best.map(|(_, point, direction)| crate::sim::Action { point, direction })
}

/// Verifies the scripted solution opens the door within 100 interactions.
pub fn check_solvable(scene: &GeneratedScene) -> Result<()> {
    let mut world = scene.world.clone();
    let mut used = 0;
    for step in &scene.plan {
        used += drive_true_joint(&mut world, step.part, step.target, 100 - used.min(100))?;
    }
    let task = scene.task();
    let theta = world.theta(task.goal_part)?;
    if theta < task.open_threshold || used > 100 {
        return Err(Error::InvalidSpec(format!(
            "scripted solution fails: door at {theta:.3} after {used} interactions"
        )));
    }
    Ok(())
}

/// Single-joint suite: every class × seeds for one setting.
pub fn single_joint_suite(setting: Setting, seeds: std::ops::Range<u64>) -> Vec<SceneSpec> {
    JointClass::ALL
        .iter()
        .flat_map(|&c| seeds.clone().map(move |s| SceneSpec::single(c, setting, s)))
        .collect()
}
