//! Point clouds, rigid transforms, bounding boxes and the chamfer distance.
//!
//! Everything here is an immutable value type. Boxes produced by
//! [`fit_bounding_box`] are axis-aligned in the world frame; transformed
//! boxes carry rotated axes and are tested with the separating axis theorem.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Smallest half-extent a fitted box may have (metres).
pub const MIN_HALF_EXTENT: f64 = 1e-6;

/// Upper bound on points per part cloud.
pub const MAX_POINTS_PER_PART: usize = 2048;

/// A non-empty set of finite 3D points sampled from one part surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec3>", into = "Vec<Vec3>")]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinitePoint);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        sum / self.points.len() as f64
    }

    /// Index and squared distance of the point nearest to `query`.
    pub fn nearest(&self, query: &Vec3) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (p - query).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    pub fn distance_to(&self, query: &Vec3) -> f64 {
        self.nearest(query).1.sqrt()
    }

    /// The cloud point nearest to `query`.
    pub fn project(&self, query: &Vec3) -> Vec3 {
        self.points[self.nearest(query).0]
    }
}

impl TryFrom<Vec<Vec3>> for PointCloud {
    type Error = Error;

    fn try_from(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PointCloud> for Vec<Vec3> {
    fn from(cloud: PointCloud) -> Self {
        cloud.points
    }
}

/// A proper rigid motion `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about the line through `anchor` along `axis`.
    pub fn rotation_about_line(anchor: &Vec3, axis: &Vec3, angle: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).into_inner();
        Self {
            rotation,
            translation: anchor - rotation * anchor,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// True when `RᵀR = I` and `det R = 1` within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        ortho <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

/// An oriented box. Fitted boxes have world-aligned axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub center: Vec3,
    pub axes: [Vec3; 3],
    pub half_extents: Vec3,
}

impl BoundingBox {
    pub fn axis_aligned(center: Vec3, half_extents: Vec3) -> Self {
        Self {
            center,
            axes: [Vec3::x(), Vec3::y(), Vec3::z()],
            half_extents: half_extents.map(|h| h.max(MIN_HALF_EXTENT)),
        }
    }

    /// Center of the face normal to box axis `axis` on side `sign` (±1).
    pub fn face_center(&self, axis: usize, sign: f64) -> Vec3 {
        self.center + self.axes[axis] * (sign * self.half_extents[axis])
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        let d = p - self.center;
        (0..3).all(|i| d.dot(&self.axes[i]).abs() <= self.half_extents[i] + tol)
    }

    pub fn transformed(&self, t: &RigidTransform) -> BoundingBox {
        BoundingBox {
            center: t.apply(&self.center),
            axes: [
                t.apply_vector(&self.axes[0]),
                t.apply_vector(&self.axes[1]),
                t.apply_vector(&self.axes[2]),
            ],
            half_extents: self.half_extents,
        }
    }

    fn projected_radius(&self, axis: &Vec3) -> f64 {
        (0..3)
            .map(|i| self.half_extents[i] * self.axes[i].dot(axis).abs())
            .sum()
    }

    /// Separating-axis overlap test. Boxes that merely touch, or overlap by
    /// less than `tol` along some axis, do not intersect.
    pub fn intersects(&self, other: &BoundingBox, tol: f64) -> bool {
        let delta = other.center - self.center;
        let mut candidates: Vec<Vec3> = Vec::with_capacity(15);
        candidates.extend_from_slice(&self.axes);
        candidates.extend_from_slice(&other.axes);
        for a in &self.axes {
            for b in &other.axes {
                let c = a.cross(b);
                let n = c.norm();
                if n > 1e-9 {
                    candidates.push(c / n);
                }
            }
        }
        candidates.iter().all(|axis| {
            let dist = delta.dot(axis).abs();
            dist < self.projected_radius(axis) + other.projected_radius(axis) - tol
        })
    }
}

/// The world-axis-aligned box of `cloud`; half extents are clamped to
/// [`MIN_HALF_EXTENT`].
pub fn fit_bounding_box(cloud: &PointCloud) -> BoundingBox {
    let first = cloud.points[0];
    let (lo, hi) = cloud
        .points
        .iter()
        .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    BoundingBox::axis_aligned((lo + hi) * 0.5, (hi - lo) * 0.5)
}

/// One-directional chamfer distance: the mean over `o1` of the squared
/// distance to the nearest point of `o2`. Not symmetric.
pub fn chamfer(o1: &PointCloud, o2: &PointCloud) -> f64 {
    let total: f64 = o1.points.iter().map(|x| o2.nearest(x).1).sum();
    total / o1.len() as f64
}

pub fn transform_cloud(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
    }
}

/// Area-weighted uniform samples on the surface of an axis-aligned box.
pub fn sample_box_surface<R: Rng + ?Sized>(
    center: &Vec3,
    half_extents: &Vec3,
    n_points: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(Error::EmptyCloud);
    }
    let n_points = n_points.min(MAX_POINTS_PER_PART);
    let h = half_extents;
    // face pairs normal to x, y, z
    let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
    let total: f64 = areas.iter().sum();
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let mut pick = rng.random::<f64>() * total;
        let mut axis = 2;
        for (i, a) in areas.iter().enumerate() {
            if pick < *a {
                axis = i;
                break;
            }
            pick -= a;
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut p = Vec3::zeros();
        for i in 0..3 {
            p[i] = if i == axis {
                sign * h[i]
            } else {
                (rng.random::<f64>() * 2.0 - 1.0) * h[i]
            };
        }
        points.push(center + p);
    }
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()).unwrap()
    }

    fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
        let mut total = 0.0;
        for x in a {
            let mut best = f64::INFINITY;
            for y in b {
                let d = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2);
                if d < best {
                    best = d;
                }
            }
            total += best;
        }
        total / a.len() as f64
    }

    #[test]
    fn empty_and_non_finite_clouds_are_rejected() {
        assert!(matches!(PointCloud::new(vec![]), Err(Error::EmptyCloud)));
        assert!(matches!(
            PointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)]),
            Err(Error::NonFinitePoint)
        ));
        assert!(serde_json::from_str::<PointCloud>("[]").is_err());
    }

    #[test]
    fn unit_cube_corners_box() {
        let mut pts = vec![];
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        let b = fit_bounding_box(&cloud(&pts));
        assert_eq!(b.center, Vec3::new(0.5, 0.5, 0.5));
        assert_eq!(b.half_extents, Vec3::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn single_point_box_is_clamped() {
        let b = fit_bounding_box(&cloud(&[[1.0, 2.0, 3.0]]));
        assert_eq!(b.center, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(b.half_extents, Vec3::repeat(MIN_HALF_EXTENT));
    }

    #[test]
    fn slab_box_matches_sample_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..1000)
            .map(|_| {
                Vec3::new(
                    rng.random::<f64>() * 0.4,
                    rng.random::<f64>() * 0.1,
                    rng.random::<f64>() * 0.6,
                )
            })
            .collect();
        let lo = pts.iter().fold(Vec3::repeat(f64::INFINITY), |a, p| a.inf(p));
        let hi = pts.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
        let b = fit_bounding_box(&PointCloud::new(pts).unwrap());
        let exact = (hi - lo) * 0.5;
        assert!((b.half_extents - exact).amax() < 1e-15);
        for (h, nominal) in b.half_extents.iter().zip([0.2, 0.05, 0.3]) {
            assert!((h - nominal).abs() / nominal < 0.02, "{h} vs {nominal}");
        }
    }

    #[test]
    fn chamfer_examples() {
        let a = cloud(&[[0.0, 0.0, 0.0], [0.5, 1.0, 2.0]]);
        assert_eq!(chamfer(&a, &a), 0.0);
        assert_eq!(chamfer(&cloud(&[[0.0, 0.0, 0.0]]), &cloud(&[[1.0, 0.0, 0.0]])), 1.0);
        // brute force by hand: (0 + 4) / 2 = 2, reverse direction 0
        let two = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let one = cloud(&[[0.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&two, &one), 2.0);
        assert_eq!(chamfer(&one, &two), 0.0);
    }

    #[test]
    fn transform_examples() {
        let origin = cloud(&[[0.0, 0.0, 0.0]]);
        assert_eq!(transform_cloud(&origin, &RigidTransform::identity()), origin);
        let moved = transform_cloud(&origin, &RigidTransform::from_translation(Vec3::x()));
        assert_eq!(moved.points()[0], Vec3::x());
        let rot = RigidTransform::rotation_about_line(&Vec3::zeros(), &Vec3::z(), FRAC_PI_2);
        let p = transform_cloud(&cloud(&[[1.0, 0.0, 0.0]]), &rot).points()[0];
        assert!((p - Vec3::y()).amax() < 1e-9);
        assert!(rot.is_proper(1e-9));
    }

    #[test]
    fn obb_overlap_and_separation() {
        let a = BoundingBox::axis_aligned(Vec3::zeros(), Vec3::repeat(0.5));
        let b = BoundingBox::axis_aligned(Vec3::new(0.9, 0.0, 0.0), Vec3::repeat(0.5));
        let touching = BoundingBox::axis_aligned(Vec3::new(1.0, 0.0, 0.0), Vec3::repeat(0.5));
        assert!(a.intersects(&b, 1e-9));
        assert!(!a.intersects(&touching, 1e-9));
        // a 45° rotated cube whose corner reaches x = 0.5 + 0.5·√2
        let rot = RigidTransform::rotation_about_line(&Vec3::zeros(), &Vec3::z(), FRAC_PI_2 / 2.0);
        let c = BoundingBox::axis_aligned(Vec3::zeros(), Vec3::repeat(0.5)).transformed(
            &RigidTransform::from_translation(Vec3::new(1.15, 0.0, 0.0)).compose(&rot),
        );
        assert!(a.intersects(&c, 1e-9));
        let d = BoundingBox::axis_aligned(Vec3::zeros(), Vec3::repeat(0.5)).transformed(
            &RigidTransform::from_translation(Vec3::new(1.25, 0.0, 0.0)).compose(&rot),
        );
        assert!(!a.intersects(&d, 1e-9));
    }

    #[test]
    fn box_surface_samples_lie_on_faces() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = Vec3::new(0.3, 0.01, 0.4);
        let c = Vec3::new(1.0, -1.0, 0.5);
        let cloud = sample_box_surface(&c, &h, 500, &mut rng).unwrap();
        assert_eq!(cloud.len(), 500);
        for p in cloud.points() {
            let d = p - c;
            let on_face = (0..3).any(|i| (d[i].abs() - h[i]).abs() < 1e-12);
            assert!(on_face && (0..3).all(|i| d[i].abs() <= h[i] + 1e-12));
        }
    }

    fn arb_cloud(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec(
            (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(x, y, z)| Vec3::new(x, y, z)),
            1..max,
        )
    }

    proptest! {
        #[test]
        fn chamfer_matches_brute_force(a in arb_cloud(200), b in arb_cloud(200)) {
            let ca = PointCloud::new(a.clone()).unwrap();
            let cb = PointCloud::new(b.clone()).unwrap();
            let fast = chamfer(&ca, &cb);
            prop_assert!(fast >= 0.0);
            prop_assert!((fast - brute_chamfer(&a, &b)).abs() <= 1e-12);
            prop_assert_eq!(chamfer(&ca, &ca), 0.0);
        }

        #[test]
        fn transform_round_trip(
            a in arb_cloud(50),
            axis in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
            angle in -3.0f64..3.0,
            t in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        ) {
            let axis = Vec3::new(axis.0, axis.1, axis.2);
            let rt = RigidTransform::from_translation(Vec3::new(t.0, t.1, t.2))
                .compose(&RigidTransform::rotation_about_line(&Vec3::zeros(), &axis, angle));
            prop_assert!(rt.is_proper(1e-9));
            let c = PointCloud::new(a).unwrap();
            let back = transform_cloud(&transform_cloud(&c, &rt), &rt.inverse());
            for (p, q) in back.points().iter().zip(c.points()) {
                prop_assert!((p - q).amax() <= 1e-9);
            }
        }

        #[test]
        fn fitted_box_contains_every_point(a in arb_cloud(300)) {
            let c = PointCloud::new(a).unwrap();
            let b = fit_bounding_box(&c);
            prop_assert!(b.half_extents.iter().all(|h| *h > 0.0));
            prop_assert!(c.points().iter().all(|p| b.contains(p, 1e-9)));
        }
    }
}
