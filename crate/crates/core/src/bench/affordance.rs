//! Affordance probes: which pushes move a part, and how far.

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::geometry::Vec3;
use crate::sim::{Action, PartId, World};

/// A push counts as successful when the joint moves more than this fraction
/// of its range.
pub const SUCCESS_FRACTION: f64 = 0.05;
pub const DEFAULT_PROBES: usize = 200;
/// Candidate draws per requested probe before giving up on balancing.
const DRAWS_PER_PROBE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffordanceLabel {
    pub action: Action,
    pub success: bool,
    /// Translation of the pushed point (m).
    pub displacement: f64,
}

/// Labelled probes with the joint displacement that counts as effective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub part: PartId,
    /// `SUCCESS_FRACTION` of the true joint range.
    pub threshold: f64,
    pub probes: Vec<AffordanceLabel>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffordanceScore {
    pub accuracy: f64,
    /// Mean absolute error of the predicted point translation (m).
    pub l1_error: f64,
    pub probes: usize,
}

/// Rolls `action` out on `part` of `world` without committing it. Success
/// means the joint moved by more than `threshold`.
pub fn label_action(world: &World, part: PartId, action: &Action, threshold: f64) -> Result<AffordanceLabel> {
    let p = world.part(part)?;
    let motion = world.preview(part, action)?;
    let spec = p.joint.spec;
    let undo = spec.transform_at(motion.theta_before).inverse();
    let moved = spec.transform_at(motion.theta_after).compose(&undo).apply(&action.point);
    Ok(AffordanceLabel {
        action: *action,
        success: motion.displacement().abs() > threshold,
        displacement: (moved - action.point).norm(),
    })
}

/// Random pushes on `part`, labelled on the true `world`, with equal numbers
/// of successes and failures (at most `n` in total).
pub fn sample_probes<R: Rng + ?Sized>(world: &World, part: PartId, n: usize, rng: &mut R) -> Result<ProbeSet> {
    let cloud = world.observe_part(part)?;
    let threshold = SUCCESS_FRACTION * world.part(part)?.joint.range();
    let half = n / 2;
    let (mut hits, mut misses) = (Vec::with_capacity(half), Vec::with_capacity(half));
    for _ in 0..n.max(1) * DRAWS_PER_PROBE {
        if hits.len() >= half && misses.len() >= half {
            break;
        }
        let point = cloud.points()[rng.random_range(0..cloud.len())];
        let [x, y, z] = UnitSphere.sample(rng);
        let label = label_action(world, part, &Action::new(point, Vec3::new(x, y, z))?, threshold)?;
        let bucket = if label.success { &mut hits } else { &mut misses };
        if bucket.len() < half {
            bucket.push(label);
        }
    }
    if hits.is_empty() || misses.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    // interleaved, so any prefix of even length stays balanced
    let probes = hits.into_iter().zip(misses).flat_map(|(h, m)| [h, m]).collect();
    Ok(ProbeSet { part, threshold, probes })
}

/// Scores the motion predicted on `replica` against the stored labels.
pub fn eval_affordance(replica: &World, set: &ProbeSet) -> Result<AffordanceScore> {
    let probes = &set.probes;
    if probes.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let mut correct = 0;
    let mut error = 0.0;
    for probe in probes {
        let predicted = label_action(replica, set.part, &probe.action, set.threshold)?;
        correct += usize::from(predicted.success == probe.success);
        error += (predicted.displacement - probe.displacement).abs();
    }
    let n = probes.len() as f64;
    Ok(AffordanceScore { accuracy: correct as f64 / n, l1_error: error / n, probes: probes.len() })
}

/// Probes the estimator's most probable hypothesis on the current `world`.
pub fn eval_estimate<R: Rng + ?Sized>(
    world: &World,
    est: &Estimator,
    n_probes: usize,
    rng: &mut R,
) -> Result<AffordanceScore> {
    let part = est.target();
    let set = sample_probes(world, part, n_probes, rng)?;
    let replica = est.pool.particles[est.map_particle()].reproduce(world, part)?;
    eval_affordance(&replica, &set)
}
