//! The particle pool over articulation hypotheses.
//!
//! Each particle pairs one of the 19 joint proposals of the target part with
//! sampled limits and its own replica world. Limits are drawn from the
//! uniform priors `low ~ U[-θmax, 0]`, `high ~ U[0, θmax]`, and every
//! particle starts at `theta_cur = 0` relative to the pose it was cloned at.

use std::collections::BTreeMap;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::fit_bounding_box;
use crate::kinematics::{
    propose_joints, JointClass, JointState, JointType, ProposalSet, N_CLASSES, N_PROPOSALS,
};
use crate::sim::{PartId, World};

pub const DEFAULT_PARTICLES: usize = 110;
/// Floor applied to prior weights, as a fraction of the uniform mass.
pub const PRIOR_FLOOR_FRACTION: f64 = 1.0 / 16.0;

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisParticle {
    pub proposal: usize,
    pub replica: World,
}

impl HypothesisParticle {
    pub fn joint(&self, target: PartId) -> &JointState {
        &self.replica.parts[target].joint
    }

    /// Hypothetical object rebuilt from the current observation of `world`
    /// with this particle's joint state on `target`.
    pub fn reproduce(&self, world: &World, target: PartId) -> Result<World> {
        world.clone_with_joint(target, *self.joint(target))
    }
}

/// Per-class probability vector in [`JointClass::ALL`] order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPosterior(pub [f64; N_CLASSES]);

impl ClassPosterior {
    pub fn get(&self, class: JointClass) -> f64 {
        self.0[class.index()]
    }

    /// Most probable class; ties go to the lowest class index.
    pub fn argmax(&self) -> (JointClass, f64) {
        let mut best = 0;
        for i in 1..N_CLASSES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        (JointClass::ALL[best], self.0[best])
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        JointClass::ALL
            .iter()
            .map(|c| (c.name().to_string(), self.get(*c)))
            .collect()
    }
}

/// Externally supplied prior over classes or proposals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorWeights {
    Proposals(Vec<f64>),
    Classes(BTreeMap<String, f64>),
}

/// Raises every entry to at least `floor` and rescales the rest so the
/// vector sums to one (water filling).
pub fn floor_weights(weights: &[f64], floor: f64) -> Result<Vec<f64>> {
    validate_weights(weights)?;
    let n = weights.len();
    if floor * n as f64 > 1.0 {
        return Err(Error::InvalidPrior(format!("floor {floor} infeasible for {n} entries")));
    }
    let total: f64 = weights.iter().sum();
    let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut clamped = vec![false; n];
    loop {
        let free_mass: f64 = p.iter().zip(&clamped).filter(|(_, c)| !**c).map(|(v, _)| v).sum();
        let budget = 1.0 - floor * clamped.iter().filter(|c| **c).count() as f64;
        let scale = if free_mass > 0.0 { budget / free_mass } else { 0.0 };
        let mut changed = false;
        for i in 0..n {
            if !clamped[i] && p[i] * scale < floor {
                clamped[i] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok((0..n)
                .map(|i| if clamped[i] { floor } else { p[i] * scale })
                .collect());
        }
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidPrior("weights must be finite and non-negative".into()));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidPrior("weights are all zero".into()));
    }
    Ok(())
}

impl PriorWeights {
    pub fn uniform_classes() -> Self {
        PriorWeights::Classes(
            JointClass::ALL
                .iter()
                .map(|c| (c.name().to_string(), 1.0))
                .collect(),
        )
    }

    pub fn from_classes(weights: &[(JointClass, f64)]) -> Self {
        PriorWeights::Classes(
            weights
                .iter()
                .map(|(c, w)| (c.name().to_string(), *w))
                .collect(),
        )
    }

    /// Floored per-class vector, for class-level priors.
    pub fn floored_classes(&self) -> Result<Option<[f64; N_CLASSES]>> {
        match self {
            PriorWeights::Proposals(_) => Ok(None),
            PriorWeights::Classes(map) => {
                let mut raw = [0.0; N_CLASSES];
                for (name, w) in map {
                    let class = JointClass::from_name(name)
                        .ok_or_else(|| Error::InvalidPrior(format!("unknown class '{name}'")))?;
                    raw[class.index()] = *w;
                }
                let floored = floor_weights(&raw, PRIOR_FLOOR_FRACTION / N_CLASSES as f64)?;
                Ok(Some(floored.try_into().expect("eight classes")))
            }
        }
    }

    /// Floored probability of each of the 19 proposals of `set`. Class
    /// priors are spread uniformly over the member proposals.
    pub fn resolve(&self, set: &ProposalSet) -> Result<Vec<f64>> {
        match self {
            PriorWeights::Proposals(w) => {
                if w.len() != N_PROPOSALS {
                    return Err(Error::InvalidPrior(format!(
                        "expected {N_PROPOSALS} proposal weights, got {}",
                        w.len()
                    )));
                }
                floor_weights(w, PRIOR_FLOOR_FRACTION / N_PROPOSALS as f64)
            }
            PriorWeights::Classes(_) => {
                let classes = self.floored_classes()?.expect("class prior");
                let sizes: Vec<usize> = JointClass::ALL.iter().map(|c| set.members(*c).len()).collect();
                // classes with no member proposal pass their mass on to the rest
                let live: f64 = JointClass::ALL
                    .iter()
                    .filter(|c| sizes[c.index()] > 0)
                    .map(|c| classes[c.index()])
                    .sum();
                Ok((0..set.len())
                    .map(|i| {
                        let c = set.class_of(i).index();
                        classes[c] / live / sizes[c] as f64
                    })
                    .collect())
            }
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let prior: PriorWeights = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        match &prior {
            PriorWeights::Proposals(w) => validate_weights(w)?,
            PriorWeights::Classes(_) => {
                prior.floored_classes()?;
            }
        }
        Ok(prior)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticlePool {
    pub target: PartId,
    pub proposals: ProposalSet,
    pub particles: Vec<HypothesisParticle>,
    pub weights: Vec<f64>,
}

/// Systematic resampling: `n` indices drawn at positions `(offset + j) / n`
/// along the cumulative weights, `offset ∈ [0, 1)`.
pub fn systematic_indices(weights: &[f64], n: usize, offset: f64) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for j in 0..n {
        let u = (offset + j as f64) / n as f64;
        while u >= cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    Ok(out)
}

pub fn normalize(weights: &mut [f64]) -> Result<()> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

impl ParticlePool {
    /// Draws `k` particles for part `target` of `world` from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(
        world: &World,
        target: PartId,
        k: usize,
        prior: Option<&PriorWeights>,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyPool);
        }
        let observed = world.observe_part(target)?;
        let proposals = propose_joints(&fit_bounding_box(&observed));
        Self::sample_with_proposals(world, target, proposals, k, prior, rng)
    }

    /// Redraws every particle from the prior at the current pose of `world`,
    /// keeping the proposal set fitted when the pool was created. Joint
    /// lines stay put in the world frame as a part moves, so the original
    /// proposals remain valid while a box refit on a rotated part would not.
    pub fn redraw<R: Rng + ?Sized>(
        &self,
        world: &World,
        k: usize,
        prior: Option<&PriorWeights>,
        rng: &mut R,
    ) -> Result<Self> {
        Self::sample_with_proposals(world, self.target, self.proposals.clone(), k, prior, rng)
    }

    fn sample_with_proposals<R: Rng + ?Sized>(
        world: &World,
        target: PartId,
        proposals: ProposalSet,
        k: usize,
        prior: Option<&PriorWeights>,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyPool);
        }
        let probs = match prior {
            Some(p) => p.resolve(&proposals)?,
            None => vec![1.0 / N_PROPOSALS as f64; N_PROPOSALS],
        };
        let chooser = WeightedIndex::new(&probs).map_err(|e| Error::InvalidPrior(e.to_string()))?;
        let mut particles = Vec::with_capacity(k);
        for _ in 0..k {
            let proposal = chooser.sample(rng);
            let spec = *proposals.get(proposal);
            let theta_max = spec.kind.theta_max();
            let high = rng.random::<f64>() * theta_max;
            let low = -rng.random::<f64>() * theta_max;
            let joint = match spec.kind {
                JointType::Fixed => JointState::fixed(spec.anchor),
                _ => JointState::new(spec, low, high, 0.0)?,
            };
            particles.push(HypothesisParticle {
                proposal,
                replica: world.clone_with_joint(target, joint)?,
            });
        }
        Ok(Self {
            target,
            proposals,
            weights: vec![1.0 / k as f64; k],
            particles,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn class_of(&self, k: usize) -> JointClass {
        self.proposals.class_of(self.particles[k].proposal)
    }

    pub fn posterior_by_class(&self) -> ClassPosterior {
        let mut out = [0.0; N_CLASSES];
        for (k, w) in self.weights.iter().enumerate() {
            out[self.class_of(k).index()] += w;
        }
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|v| *v /= total);
        }
        ClassPosterior(out)
    }

    pub fn posterior_by_proposal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.proposals.len()];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            out[p.proposal] += w;
        }
        out
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::EmptyPool);
        }
        let chooser = WeightedIndex::new(&self.weights).map_err(|_| Error::DegenerateWeights)?;
        Ok(chooser.sample(rng))
    }

    /// Systematic resampling by `weights`; output weights are uniform and
    /// duplicated particles own independent replicas.
    pub fn resample<R: Rng + ?Sized>(&self, weights: &[f64], rng: &mut R) -> Result<ParticlePool> {
        if weights.len() != self.len() {
            return Err(Error::DegenerateWeights);
        }
        let offset = rng.random::<f64>();
        let picks = systematic_indices(weights, self.len(), offset)?;
        let n = picks.len();
        Ok(ParticlePool {
            target: self.target,
            proposals: self.proposals.clone(),
            particles: picks.into_iter().map(|i| self.particles[i].clone()).collect(),
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// Resamples, falling back to uniform weights (with a warning) when every
    /// weight is zero.
    pub fn resample_or_uniform<R: Rng + ?Sized>(
        &self,
        weights: &[f64],
        rng: &mut R,
    ) -> Result<(ParticlePool, bool)> {
        match self.resample(weights, rng) {
            Ok(pool) => Ok((pool, false)),
            Err(Error::DegenerateWeights) => {
                warn!("observation incompatible with every hypothesis; using uniform weights");
                let uniform = vec![1.0; self.len()];
                Ok((self.resample(&uniform, rng)?, true))
            }
            Err(e) => Err(e),
        }
    }

    /// Gaussian jitter (std `0.05·θmax`) on the limits of every particle,
    /// kept inside the prior supports and bracketing `theta_cur`.
    pub fn jitter_limits<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let target = self.target;
        for particle in &mut self.particles {
            let joint = &mut particle.replica.parts[target].joint;
            let theta_max = joint.kind().theta_max();
            if theta_max == 0.0 {
                continue;
            }
            let noise = Normal::new(0.0, 0.05 * theta_max).expect("positive std");
            let low = joint.theta_low + noise.sample(rng);
            let high = joint.theta_high + noise.sample(rng);
            joint.theta_low = low.clamp(-theta_max, joint.theta_cur.min(0.0));
            joint.theta_high = high.clamp(joint.theta_cur.max(0.0), theta_max);
        }
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.weights.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_box_surface, Vec3};
    use crate::kinematics::JointSpec;
    use crate::sim::Part;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn world() -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let panel = Part {
            id: 0,
            name: "panel".into(),
            rest_cloud: Arc::new(
                sample_box_surface(&Vec3::new(0.0, 0.0, 0.4), &Vec3::new(0.3, 0.01, 0.4), 64, &mut rng)
                    .unwrap(),
            ),
            joint: JointState::new(
                JointSpec::revolute(Vec3::new(-0.3, 0.0, 0.4), Vec3::z()),
                -1.0,
                0.0,
                0.0,
            )
            .unwrap(),
            mass: 1.0,
            movable: true,
            parent: None,
        };
        World::new(vec![panel], [], 0).unwrap()
    }

    fn pool_with(classes: &[usize]) -> ParticlePool {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pool = ParticlePool::sample_prior(&w, 0, classes.len(), None, &mut rng).unwrap();
        for (p, &proposal) in pool.particles.iter_mut().zip(classes) {
            p.proposal = proposal;
        }
        pool
    }

    #[test]
    fn single_particle_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = ParticlePool::sample_prior(&world(), 0, 1, None, &mut rng).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.weights, vec![1.0]);
        assert!(ParticlePool::sample_prior(&world(), 0, 0, None, &mut rng).is_err());
    }

    #[test]
    fn prior_particles_respect_limit_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pool = ParticlePool::sample_prior(&world(), 0, 110, None, &mut rng).unwrap();
        for p in &pool.particles {
            let j = p.joint(0);
            assert_eq!(j.theta_cur, 0.0);
            let m = j.kind().theta_max();
            assert!((-m..=0.0).contains(&j.theta_low) && (0.0..=m).contains(&j.theta_high));
            assert_eq!(j.spec, *pool.proposals.get(p.proposal));
        }
        assert!(pool.is_normalized(1e-12));
    }

    #[test]
    fn uniform_prior_passes_chi_square() {
        // 100 seeds × 110 particles, 19 cells, df = 18, critical value at α = 0.01
        const CHI2_18_001: f64 = 34.805;
        let w = world();
        let mut counts = [0usize; N_PROPOSALS];
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = ParticlePool::sample_prior(&w, 0, 110, None, &mut rng).unwrap();
            for p in &pool.particles {
                counts[p.proposal] += 1;
            }
        }
        let expected = 11000.0 / N_PROPOSALS as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < CHI2_18_001, "chi2 = {chi2}");
    }

    #[test]
    fn floor_keeps_every_class_alive() {
        let prior = PriorWeights::from_classes(&[(JointClass::Fixed, 1.0)]);
        let classes = prior.floored_classes().unwrap().unwrap();
        let floor = (1.0 / 16.0) * (1.0 / 8.0);
        assert!(classes.iter().all(|&v| v >= floor - 1e-15));
        assert!((classes.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((classes[JointClass::Fixed.index()] - (1.0 - 7.0 * floor)).abs() < 1e-12);
        let set = propose_joints(&fit_bounding_box(&world().observe_part(0).unwrap()));
        let per = prior.resolve(&set).unwrap();
        assert!((per.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_priors_are_rejected() {
        assert!(floor_weights(&[0.0, 0.0], 0.01).is_err());
        assert!(floor_weights(&[1.0, -1.0], 0.01).is_err());
        let bogus = PriorWeights::Classes([("hinge".to_string(), 1.0)].into_iter().collect());
        assert!(bogus.floored_classes().is_err());
        assert!(PriorWeights::Proposals(vec![1.0; 5]).resolve(&propose_joints(&crate::geometry::BoundingBox::axis_aligned(Vec3::zeros(), Vec3::repeat(1.0)))).is_err());
    }

    #[test]
    fn prior_file_formats_parse() {
        let map: PriorWeights = serde_json::from_str(r#"{"rev-left": 0.9, "fixed": 0.1}"#).unwrap();
        assert!(matches!(map, PriorWeights::Classes(_)));
        let vec: PriorWeights = serde_json::from_str(&serde_json::to_string(&vec![1.0; 19]).unwrap()).unwrap();
        assert!(matches!(vec, PriorWeights::Proposals(_)));
    }

    #[test]
    fn posterior_examples() {
        let fixed = pool_with(&[18; 5]);
        assert_eq!(fixed.posterior_by_class().get(JointClass::Fixed), 1.0);
        let canon: Vec<usize> = JointClass::ALL.iter().map(|c| c.canonical_proposal()).collect();
        let even = pool_with(&canon);
        for v in even.posterior_by_class().0 {
            assert!((v - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn systematic_resampling_examples() {
        // by enumeration: positions (u + j)/4 with u < 1 fall below 0.75 for j = 0, 1, 2
        for offset in [0.0, 0.3, 0.999] {
            assert_eq!(systematic_indices(&[0.75, 0.25], 4, offset).unwrap(), vec![0, 0, 0, 1]);
        }
        assert_eq!(systematic_indices(&[0.2; 5], 5, 0.5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(systematic_indices(&[0.0, 1.0, 0.0], 3, 0.1).unwrap(), vec![1, 1, 1]);
        assert!(matches!(systematic_indices(&[0.0, 0.0], 2, 0.1), Err(Error::DegenerateWeights)));
    }

    #[test]
    fn resampled_replicas_are_independent() {
        let pool = pool_with(&[11, 16, 18]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut out = pool.resample(&[0.0, 1.0, 0.0], &mut rng).unwrap();
        assert!(out.particles.iter().all(|p| p.proposal == 16));
        assert!(out.is_normalized(1e-12));
        out.particles[0].replica.parts[0].joint.theta_cur = 0.05;
        assert_eq!(out.particles[1].replica.parts[0].joint.theta_cur, 0.0);
        let (fallback, degenerate) = pool.resample_or_uniform(&[0.0; 3], &mut rng).unwrap();
        assert!(degenerate);
        assert_eq!(fallback.len(), 3);
    }

    #[test]
    fn limit_jitter_stays_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pool = ParticlePool::sample_prior(&world(), 0, 50, None, &mut rng).unwrap();
        for _ in 0..20 {
            pool.jitter_limits(&mut rng);
        }
        for p in &pool.particles {
            assert!(p.joint(0).is_valid());
            let m = p.joint(0).kind().theta_max();
            assert!(p.joint(0).theta_low >= -m && p.joint(0).theta_high <= m);
        }
    }

    #[test]
    fn empty_prior_matches_class_marginal_in_expectation() {
        let prior = PriorWeights::from_classes(&[(JointClass::RevLeft, 3.0), (JointClass::PrisY, 1.0)]);
        let classes = prior.floored_classes().unwrap().unwrap();
        let w = world();
        let mut acc = [0.0; N_CLASSES];
        let seeds = 200;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = ParticlePool::sample_prior(&w, 0, 110, Some(&prior), &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(pool.posterior_by_class().0) {
                *a += v / seeds as f64;
            }
        }
        for (a, c) in acc.iter().zip(classes) {
            assert!((a - c).abs() < 0.02, "{a} vs {c}");
        }
    }
}
