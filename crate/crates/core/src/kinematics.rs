//! Joint parameterization, the 19 box-derived joint proposals, and forward
//! kinematics.
//!
//! World convention: +X is right, +Y points away from the viewer (the front
//! face of a part is its -Y face), +Z is up.
//!
//! Proposal ordering (stable, indices 0..19):
//!
//! | index | kind      | axis | anchor            |
//! |-------|-----------|------|-------------------|
//! | 0     | revolute  | X    | -X face (central) |
//! | 1..=4 | revolute  | X    | -Y, +Y, -Z, +Z    |
//! | 5     | revolute  | Y    | -Y face (central) |
//! | 6..=9 | revolute  | Y    | -X, +X, -Z, +Z    |
//! | 10    | revolute  | Z    | -Z face (central) |
//! | 11..=14 | revolute | Z   | -X, +X, -Y, +Y    |
//! | 15..=17 | prismatic | X, Y, Z | box center  |
//! | 18    | fixed     | -    | box center        |
//!
//! The central line of an axis passes through both faces normal to it, so
//! only the negative face is kept: 3 × 6 − 3 = 15 revolute proposals.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, RigidTransform, Vec3};

pub const N_PROPOSALS: usize = 19;
pub const N_CLASSES: usize = 8;

/// Default prior support for revolute limits (rad).
pub const THETA_MAX_REVOLUTE: f64 = FRAC_PI_2;
/// Default prior support for prismatic limits (m).
pub const THETA_MAX_PRISMATIC: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointType {
    pub fn theta_max(self) -> f64 {
        match self {
            JointType::Revolute => THETA_MAX_REVOLUTE,
            JointType::Prismatic => THETA_MAX_PRISMATIC,
            JointType::Fixed => 0.0,
        }
    }
}

/// Joint type plus axis line. `anchor` and `axis` are world-frame and
/// ignored for fixed joints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub kind: JointType,
    pub anchor: Vec3,
    pub axis: Vec3,
}

impl JointSpec {
    pub fn revolute(anchor: Vec3, axis: Vec3) -> Self {
        Self {
            kind: JointType::Revolute,
            anchor,
            axis: axis.normalize(),
        }
    }

    pub fn prismatic(anchor: Vec3, axis: Vec3) -> Self {
        Self {
            kind: JointType::Prismatic,
            anchor,
            axis: axis.normalize(),
        }
    }

    pub fn fixed(anchor: Vec3) -> Self {
        Self {
            kind: JointType::Fixed,
            anchor,
            axis: Vec3::zeros(),
        }
    }

    pub fn transform_at(&self, theta: f64) -> RigidTransform {
        match self.kind {
            JointType::Fixed => RigidTransform::identity(),
            JointType::Prismatic => RigidTransform::from_translation(self.axis * theta),
            JointType::Revolute => {
                RigidTransform::rotation_about_line(&self.anchor, &self.axis, theta)
            }
        }
    }

    /// Direction in which `p` moves under a positive unit joint velocity, or
    /// `None` when it does not move.
    pub fn velocity_direction(&self, p: &Vec3) -> Option<Vec3> {
        match self.kind {
            JointType::Fixed => None,
            JointType::Prismatic => Some(self.axis),
            JointType::Revolute => {
                let v = self.axis.cross(&(p - self.anchor));
                let n = v.norm();
                (n >= 1e-9).then(|| v / n)
            }
        }
    }

    fn matches(&self, other: &JointSpec, tol: f64) -> bool {
        if self.kind != other.kind {
            return false;
        }
        match self.kind {
            JointType::Fixed => true,
            _ => (self.anchor - other.anchor).amax() <= tol && (self.axis - other.axis).amax() <= tol,
        }
    }
}

/// A joint with limits and current position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub spec: JointSpec,
    pub theta_low: f64,
    pub theta_high: f64,
    pub theta_cur: f64,
}

impl JointState {
    pub fn new(spec: JointSpec, theta_low: f64, theta_high: f64, theta_cur: f64) -> Result<Self> {
        if spec.kind == JointType::Fixed {
            return Ok(Self::fixed(spec.anchor));
        }
        if !(spec.axis.norm() - 1.0).abs().le(&1e-9) {
            return Err(Error::InvalidJoint("axis must be a unit vector".into()));
        }
        if !(theta_low <= 0.0 && theta_high >= 0.0) {
            return Err(Error::InvalidJoint(format!(
                "limits must bracket zero, got [{theta_low}, {theta_high}]"
            )));
        }
        if !(theta_low..=theta_high).contains(&theta_cur) {
            return Err(Error::InvalidJoint(format!(
                "theta_cur {theta_cur} outside [{theta_low}, {theta_high}]"
            )));
        }
        Ok(Self {
            spec,
            theta_low,
            theta_high,
            theta_cur,
        })
    }

    pub fn fixed(anchor: Vec3) -> Self {
        Self {
            spec: JointSpec::fixed(anchor),
            theta_low: 0.0,
            theta_high: 0.0,
            theta_cur: 0.0,
        }
    }

    pub fn kind(&self) -> JointType {
        self.spec.kind
    }

    pub fn clamp(&self, theta: f64) -> f64 {
        theta.clamp(self.theta_low, self.theta_high)
    }

    pub fn range(&self) -> f64 {
        self.theta_high - self.theta_low
    }

    pub fn is_valid(&self) -> bool {
        self.theta_low <= 0.0
            && self.theta_high >= 0.0
            && self.theta_low <= self.theta_cur
            && self.theta_cur <= self.theta_high
            && (self.spec.kind != JointType::Fixed
                || (self.theta_low == 0.0 && self.theta_high == 0.0 && self.theta_cur == 0.0))
    }
}

pub fn forward_transform(state: &JointState) -> RigidTransform {
    state.spec.transform_at(state.theta_cur)
}

pub fn point_velocity_direction(state: &JointState, p: &Vec3) -> Option<Vec3> {
    state.spec.velocity_direction(p)
}

/// The eight evaluation classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointClass {
    RevRight,
    RevLeft,
    RevTop,
    RevBottom,
    PrisX,
    PrisY,
    PrisZ,
    Fixed,
}

impl JointClass {
    pub const ALL: [JointClass; N_CLASSES] = [
        JointClass::RevRight,
        JointClass::RevLeft,
        JointClass::RevTop,
        JointClass::RevBottom,
        JointClass::PrisX,
        JointClass::PrisY,
        JointClass::PrisZ,
        JointClass::Fixed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            JointClass::RevRight => "rev-right",
            JointClass::RevLeft => "rev-left",
            JointClass::RevTop => "rev-top",
            JointClass::RevBottom => "rev-bottom",
            JointClass::PrisX => "pris-x",
            JointClass::PrisY => "pris-y",
            JointClass::PrisZ => "pris-z",
            JointClass::Fixed => "fixed",
        }
    }

    pub fn from_name(name: &str) -> Option<JointClass> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Proposal index of the class representative.
    pub fn canonical_proposal(self) -> usize {
        match self {
            JointClass::RevRight => 12,
            JointClass::RevLeft => 11,
            JointClass::RevTop => 4,
            JointClass::RevBottom => 3,
            JointClass::PrisX => 15,
            JointClass::PrisY => 16,
            JointClass::PrisZ => 17,
            JointClass::Fixed => 18,
        }
    }
}

impl std::fmt::Display for JointClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The 19 proposals of one bounding box with their evaluation classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub bbox: BoundingBox,
    pub proposals: Vec<JointSpec>,
    pub classes: Vec<JointClass>,
}

impl ProposalSet {
    pub fn get(&self, index: usize) -> &JointSpec {
        &self.proposals[index]
    }

    pub fn class_of(&self, index: usize) -> JointClass {
        self.classes[index]
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    /// Proposal indices belonging to `class`.
    pub fn members(&self, class: JointClass) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.classes[i] == class).collect()
    }

    pub fn classify(&self, spec: &JointSpec) -> Result<JointClass> {
        self.proposals
            .iter()
            .position(|p| p.matches(spec, 1e-6))
            .map(|i| self.classes[i])
            .ok_or(Error::UnknownProposal)
    }
}

/// (axis, sign) of the face an anchor sits on.
fn revolute_faces(axis: usize) -> [(usize, f64); 5] {
    let (b, c) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    [(axis, -1.0), (b, -1.0), (b, 1.0), (c, -1.0), (c, 1.0)]
}

fn class_for_face(bbox: &BoundingBox, face: (usize, f64)) -> JointClass {
    match face {
        (0, s) if s > 0.0 => JointClass::RevRight,
        (0, _) => JointClass::RevLeft,
        (2, s) if s > 0.0 => JointClass::RevTop,
        (2, _) => JointClass::RevBottom,
        (_, s) => {
            // front/back anchors: nearest named face, ties → left, then bottom
            let anchor = bbox.face_center(1, s);
            let named = [
                (JointClass::RevLeft, bbox.face_center(0, -1.0)),
                (JointClass::RevBottom, bbox.face_center(2, -1.0)),
                (JointClass::RevRight, bbox.face_center(0, 1.0)),
                (JointClass::RevTop, bbox.face_center(2, 1.0)),
            ];
            let mut best = named[0].0;
            let mut best_d = f64::INFINITY;
            for (class, center) in named {
                let d = (center - anchor).norm();
                if d < best_d - 1e-12 {
                    best = class;
                    best_d = d;
                }
            }
            best
        }
    }
}

pub fn propose_joints(bbox: &BoundingBox) -> ProposalSet {
    let mut proposals = Vec::with_capacity(N_PROPOSALS);
    let mut classes = Vec::with_capacity(N_PROPOSALS);
    for axis in 0..3 {
        for face in revolute_faces(axis) {
            proposals.push(JointSpec::revolute(
                bbox.face_center(face.0, face.1),
                bbox.axes[axis],
            ));
            classes.push(class_for_face(bbox, face));
        }
    }
    let prismatic = [JointClass::PrisX, JointClass::PrisY, JointClass::PrisZ];
    for (axis, class) in prismatic.into_iter().enumerate() {
        proposals.push(JointSpec::prismatic(bbox.center, bbox.axes[axis]));
        classes.push(class);
    }
    proposals.push(JointSpec::fixed(bbox.center));
    classes.push(JointClass::Fixed);
    ProposalSet {
        bbox: *bbox,
        proposals,
        classes,
    }
}

pub fn classify_proposal(spec: &JointSpec, bbox: &BoundingBox) -> Result<JointClass> {
    propose_joints(bbox).classify(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;
    use std::f64::consts::PI;

    fn unit_cube() -> BoundingBox {
        BoundingBox::axis_aligned(Vec3::zeros(), Vec3::repeat(0.5))
    }

    fn door_leaf() -> BoundingBox {
        BoundingBox::axis_aligned(Vec3::new(0.0, -0.01, 0.4), Vec3::new(0.3, 0.01, 0.4))
    }

    #[test]
    fn nineteen_proposals_on_unit_cube() {
        let set = propose_joints(&unit_cube());
        assert_eq!(set.len(), 19);
        let count = |k| set.proposals.iter().filter(|p| p.kind == k).count();
        assert_eq!(count(JointType::Revolute), 15);
        assert_eq!(count(JointType::Prismatic), 3);
        assert_eq!(count(JointType::Fixed), 1);
        let axes: Vec<Vec3> = set.proposals[15..18].iter().map(|p| p.axis).collect();
        assert_eq!(axes, vec![Vec3::x(), Vec3::y(), Vec3::z()]);
    }

    #[test]
    fn revolute_lines_are_distinct_and_anchored_on_faces() {
        let bbox = door_leaf();
        let set = propose_joints(&bbox);
        let faces: Vec<Vec3> = (0..3)
            .flat_map(|a| [bbox.face_center(a, -1.0), bbox.face_center(a, 1.0)])
            .collect();
        let mut lines = HashSet::new();
        for p in &set.proposals[..15] {
            assert!(faces.iter().any(|f| (f - p.anchor).amax() < 1e-12));
            // identify the line by its axis and the anchor's offset orthogonal to it
            let off = p.anchor - p.axis * p.axis.dot(&p.anchor);
            let key: Vec<i64> = p.axis.iter().chain(off.iter()).map(|v| (v * 1e9).round() as i64).collect();
            assert!(lines.insert(key), "duplicate revolute line {p:?}");
        }
    }

    #[test]
    fn proposals_are_translation_equivariant() {
        let t = Vec3::new(0.3, -1.2, 2.0);
        let a = propose_joints(&door_leaf());
        let moved = BoundingBox::axis_aligned(door_leaf().center + t, door_leaf().half_extents);
        let b = propose_joints(&moved);
        for (p, q) in a.proposals.iter().zip(&b.proposals) {
            assert!((q.anchor - p.anchor - t).amax() < 1e-12);
            assert_eq!(p.axis, q.axis);
        }
        assert_eq!(a.classes, b.classes);
    }

    #[test]
    fn classification_examples() {
        let bbox = door_leaf();
        assert_eq!(classify_proposal(&JointSpec::fixed(Vec3::zeros()), &bbox).unwrap(), JointClass::Fixed);
        assert_eq!(
            classify_proposal(&JointSpec::prismatic(bbox.center, Vec3::x()), &bbox).unwrap(),
            JointClass::PrisX
        );
        let left = JointSpec::revolute(bbox.face_center(0, -1.0), Vec3::z());
        assert_eq!(classify_proposal(&left, &bbox).unwrap(), JointClass::RevLeft);
        let bogus = JointSpec::revolute(Vec3::new(5.0, 5.0, 5.0), Vec3::z());
        assert!(matches!(classify_proposal(&bogus, &bbox), Err(Error::UnknownProposal)));
    }

    #[test]
    fn canonical_proposals_biject_onto_classes() {
        for bbox in [unit_cube(), door_leaf()] {
            let set = propose_joints(&bbox);
            let labels: HashSet<JointClass> = JointClass::ALL
                .iter()
                .map(|c| set.class_of(c.canonical_proposal()))
                .collect();
            assert_eq!(labels.len(), 8);
            for c in JointClass::ALL {
                assert_eq!(set.class_of(c.canonical_proposal()), c);
            }
        }
    }

    #[test]
    fn front_face_ties_go_left() {
        // cube: every named face center is equidistant from the front face center
        let set = propose_joints(&unit_cube());
        assert_eq!(set.class_of(5), JointClass::RevLeft);
        assert_eq!(set.class_of(13), JointClass::RevLeft);
        // wide, short leaf: top/bottom faces are nearer than left/right
        let wide = BoundingBox::axis_aligned(Vec3::zeros(), Vec3::new(1.0, 0.1, 0.2));
        assert_eq!(propose_joints(&wide).class_of(5), JointClass::RevBottom);
    }

    #[test]
    fn forward_transform_examples() {
        let pris = JointState::new(JointSpec::prismatic(Vec3::zeros(), Vec3::x()), -1.0, 1.0, 0.5).unwrap();
        let t = forward_transform(&pris);
        assert_eq!(t.translation, Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(t.rotation, nalgebra::Matrix3::identity());
        let rev = JointState::new(JointSpec::revolute(Vec3::zeros(), Vec3::z()), -PI, PI, PI / 2.0).unwrap();
        let p = forward_transform(&rev).apply(&Vec3::x());
        assert!((p - Vec3::y()).amax() < 1e-9);
        assert_eq!(forward_transform(&JointState::fixed(Vec3::zeros())), RigidTransform::identity());
    }

    #[test]
    fn velocity_direction_examples() {
        let fixed = JointState::fixed(Vec3::zeros());
        assert_eq!(point_velocity_direction(&fixed, &Vec3::x()), None);
        let pris = JointState::new(JointSpec::prismatic(Vec3::zeros(), Vec3::z()), 0.0, 0.0, 0.0).unwrap();
        assert_eq!(point_velocity_direction(&pris, &Vec3::new(3.0, 1.0, 0.0)), Some(Vec3::z()));
        let rev = JointState::new(JointSpec::revolute(Vec3::zeros(), Vec3::z()), 0.0, 0.0, 0.0).unwrap();
        let v = point_velocity_direction(&rev, &Vec3::x()).unwrap();
        assert!((v - Vec3::y()).amax() < 1e-12);
        assert_eq!(point_velocity_direction(&rev, &Vec3::new(0.0, 0.0, 2.0)), None);
    }

    #[test]
    fn joint_state_rejects_bad_limits() {
        let spec = JointSpec::prismatic(Vec3::zeros(), Vec3::x());
        assert!(JointState::new(spec, 0.1, 0.5, 0.2).is_err());
        assert!(JointState::new(spec, -0.1, 0.5, 0.6).is_err());
        let f = JointState::new(JointSpec::fixed(Vec3::zeros()), -1.0, 1.0, 0.5).unwrap();
        assert_eq!((f.theta_low, f.theta_high, f.theta_cur), (0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn zero_position_is_identity_for_all_proposals(
            c in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            h in (0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0),
        ) {
            let bbox = BoundingBox::axis_aligned(Vec3::new(c.0, c.1, c.2), Vec3::new(h.0, h.1, h.2));
            for spec in propose_joints(&bbox).proposals {
                let t = spec.transform_at(0.0);
                prop_assert!((t.rotation - nalgebra::Matrix3::identity()).amax() < 1e-12);
                prop_assert!(t.translation.amax() < 1e-12);
            }
        }

        #[test]
        fn revolute_transforms_compose(a in -3.0f64..3.0, b in -3.0f64..3.0, idx in 0usize..15) {
            let bbox = BoundingBox::axis_aligned(Vec3::new(0.2, -0.3, 0.5), Vec3::new(0.3, 0.02, 0.4));
            let spec = propose_joints(&bbox).proposals[idx];
            let lhs = spec.transform_at(a).compose(&spec.transform_at(b));
            let rhs = spec.transform_at(a + b);
            prop_assert!((lhs.rotation - rhs.rotation).amax() < 1e-9);
            prop_assert!((lhs.translation - rhs.translation).amax() < 1e-9);
        }

        #[test]
        fn velocity_direction_is_unit_and_orthogonal(
            p in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
            idx in 0usize..19,
        ) {
            let bbox = BoundingBox::axis_aligned(Vec3::zeros(), Vec3::new(0.3, 0.2, 0.4));
            let spec = propose_joints(&bbox).proposals[idx];
            let p = Vec3::new(p.0, p.1, p.2);
            if let Some(v) = spec.velocity_direction(&p) {
                prop_assert!((v.norm() - 1.0).abs() < 1e-9);
                if spec.kind == JointType::Revolute {
                    prop_assert!(v.dot(&spec.axis).abs() < 1e-9);
                    prop_assert!(v.dot(&(p - spec.anchor)).abs() < 1e-9);
                }
            }
        }
    }
}
