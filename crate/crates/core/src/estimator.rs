//! Interactive joint-type estimation.
//!
//! Each interaction picks an informative action against one sampled
//! hypothesis, applies it to the real world, replays it on every particle
//! replica and reweights the pool by how well the predicted part cloud
//! matches the observed one.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_select::{
    select_goal_action, select_informative_action, ActionSelectConfig, Desired, Selection,
};
use crate::error::{Error, Result};
use crate::geometry::{chamfer, PointCloud, Vec3};
use crate::hypotheses::{normalize, ClassPosterior, ParticlePool, PriorWeights};
use crate::kinematics::JointClass;
use crate::sim::{Action, Contact, PartId, StepOutcome, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    #[default]
    Chamfer,
    Cosine,
}

impl std::str::FromStr for Likelihood {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chamfer" => Ok(Self::Chamfer),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::Config {
                field: "likelihood".into(),
                message: format!("expected chamfer or cosine, got {other}"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub n_particles: usize,
    pub confidence_threshold: f64,
    pub max_interactions: usize,
    pub likelihood: Likelihood,
    /// Added to the chamfer distance before inversion (m²).
    pub chamfer_epsilon: f64,
    /// Centroid displacement below which a part counts as static.
    pub motion_threshold: f64,
    /// Uniform action noise applied in the real world only.
    pub noise_sigma: f64,
    /// Gaussian jitter on particle limits after every resample.
    pub limit_jitter: bool,
    /// Prior probability that a part rests against an unknown limit at its
    /// current pose. Mixed into the chamfer likelihood of moving predictions.
    pub rest_at_limit_prior: f64,
    /// Redraw the pool from the prior when the best particle's chamfer
    /// distance exceeds this (m²). `None` disables redrawing.
    pub reinit_chamfer: Option<f64>,
    /// Likelihood factor for a particle whose simulated contacts disagree
    /// with the real ones. 1 ignores contacts.
    pub contact_mismatch: f64,
    pub action: ActionSelectConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            n_particles: crate::hypotheses::DEFAULT_PARTICLES,
            confidence_threshold: 0.9,
            max_interactions: 10,
            likelihood: Likelihood::Chamfer,
            chamfer_epsilon: DEFAULT_CHAMFER_EPSILON,
            motion_threshold: 1e-4,
            noise_sigma: 0.0,
            limit_jitter: false,
            rest_at_limit_prior: DEFAULT_REST_AT_LIMIT_PRIOR,
            reinit_chamfer: Some(DEFAULT_REINIT_CHAMFER),
            contact_mismatch: DEFAULT_CONTACT_MISMATCH,
            action: ActionSelectConfig::default(),
        }
    }
}

pub const DEFAULT_CHAMFER_EPSILON: f64 = 1e-6;
pub const DEFAULT_REST_AT_LIMIT_PRIOR: f64 = 0.2;
pub const DEFAULT_REINIT_CHAMFER: f64 = 1e-4;
pub const DEFAULT_CONTACT_MISMATCH: f64 = 0.1;
/// Hypothesis redraws when the selected action is uninformative.
pub const MAX_REDRAWS: usize = 32;

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config { field: field.into(), message: message.into() })
        };
        if self.n_particles == 0 {
            return bad("n_particles", "must be at least 1");
        }
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold < 1.0) {
            return bad("confidence_threshold", "must lie in (0, 1)");
        }
        if self.max_interactions == 0 {
            return bad("max_interactions", "must be at least 1");
        }
        if !(self.chamfer_epsilon > 0.0) {
            return bad("chamfer_epsilon", "must be positive");
        }
        if !(0.0..1.0).contains(&self.rest_at_limit_prior) {
            return bad("rest_at_limit_prior", "must lie in [0, 1)");
        }
        if self.reinit_chamfer.is_some_and(|t| !(t > 0.0)) {
            return bad("reinit_chamfer", "must be positive");
        }
        if !(self.contact_mismatch > 0.0 && self.contact_mismatch <= 1.0) {
            return bad("contact_mismatch", "must lie in (0, 1]");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma", "must be non-negative");
        }
        if self.action.n_updates == 0 || self.action.n_action_particles == 0 {
            return bad("action", "need at least one round and one particle");
        }
        Ok(())
    }
}

/// `1 / (chamfer(observed, predicted) + ε)`.
pub fn chamfer_likelihood(observed: &PointCloud, predicted: &PointCloud, epsilon: f64) -> f64 {
    1.0 / (chamfer(observed, predicted) + epsilon)
}

/// Agreement of two centroid displacements, in `[0, 1]`.
pub fn cosine_likelihood(real: &Vec3, hyp: &Vec3, motion_threshold: f64) -> f64 {
    let real_moves = real.norm() > motion_threshold;
    let hyp_moves = hyp.norm() > motion_threshold;
    match (real_moves, hyp_moves) {
        (true, true) => {
            let cos = real.dot(hyp) / (real.norm() * hyp.norm());
            (cos.clamp(-1.0, 1.0) + 1.0) / 2.0
        }
        (false, false) => 1.0,
        _ => 0.0,
    }
}

/// Per-update diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateSummary {
    pub likelihoods: Vec<f64>,
    /// Normalized weights before resampling.
    pub posterior_weights: Vec<f64>,
    pub posterior: ClassPosterior,
    pub chamfer_min: f64,
    pub chamfer_mean: f64,
    pub chamfer_max: f64,
    /// Smallest distance any particle leaves unexplained, counting a stop at
    /// an unknown limit as an explanation.
    pub unexplained_min: f64,
    pub degenerate: bool,
}

/// Maps an action expressed on the real cloud onto a replica cloud by point
/// index.
fn action_on_replica(action: &Action, real_before: &PointCloud, replica: &World, target: PartId) -> Result<Action> {
    let (idx, _) = real_before.nearest(&action.point);
    let cloud = replica.observe_part(target)?;
    Ok(Action { point: cloud.points()[idx], direction: action.direction })
}

/// Replays `action` on every replica and reweights and resamples the pool.
///
/// `real_before`/`real_after` are the target part clouds around the real
/// interaction and `real_world_before` the world it started from. Each
/// hypothesis is reproduced from that observation before replaying.
/// `real_blockers` lists the parts the real motion ran into.
pub fn update_posterior<R: Rng + ?Sized>(
    pool: &mut ParticlePool,
    action: &Action,
    real_before: &PointCloud,
    real_after: &PointCloud,
    real_world_before: &World,
    real_blockers: &[PartId],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<UpdateSummary> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let target = pool.target;
    let real_disp = real_after.centroid() - real_before.centroid();
    // a stop at an unknown limit only explains an observation without motion
    let rho = if real_disp.norm() < cfg.motion_threshold { cfg.rest_at_limit_prior } else { 0.0 };
    // Likelihood of the "blocked here" explanation, shared by all particles.
    let static_distance = chamfer(real_after, real_before);
    let blocked_lik = 1.0 / (static_distance + cfg.chamfer_epsilon);
    let scored: Vec<(World, f64, f64, f64, f64)> = pool
        .particles
        .par_iter()
        .map(|p| {
            let mut replica = p.reproduce(real_world_before, target)?;
            let before = replica.observe_part(target)?;
            let a = action_on_replica(action, real_before, &replica, target)?;
            let motion = replica.step_part(target, &a)?;
            let predicted = replica.observe_part(target)?;
            let d = chamfer(real_after, &predicted);
            let agrees = if real_blockers.is_empty() {
                motion.contacts.is_empty()
            } else {
                motion.contacts.iter().any(|c| real_blockers.contains(&c.blocking))
            };
            let contact_factor = if agrees { 1.0 } else { cfg.contact_mismatch };
            let can_block = motion.displacement() != 0.0 && rho > 0.0;
            let unexplained = if can_block { d.min(static_distance) } else { d };
            let (w, p_blocked) = match cfg.likelihood {
                Likelihood::Chamfer => {
                    let moving = 1.0 / (d + cfg.chamfer_epsilon);
                    if can_block {
                        let w = (1.0 - rho) * moving + rho * blocked_lik;
                        (w, rho * blocked_lik / w)
                    } else {
                        (moving, 0.0)
                    }
                }
                Likelihood::Cosine => (
                    cosine_likelihood(
                        &real_disp,
                        &(predicted.centroid() - before.centroid()),
                        cfg.motion_threshold,
                    ),
                    0.0,
                ),
            };
            Ok((replica, w * contact_factor, d, p_blocked, unexplained))
        })
        .collect::<Result<_>>()?;

    let mut likelihoods = Vec::with_capacity(scored.len());
    let mut distances = Vec::with_capacity(scored.len());
    let mut unexplained_min = f64::INFINITY;
    for (particle, (mut replica, w, d, p_blocked, unexplained)) in pool.particles.iter_mut().zip(scored) {
        if real_blockers.is_empty() && p_blocked > 0.0 && rng.random::<f64>() < p_blocked {
            // The particle explains the observation with a limit at its pre-action pose.
            let prev = particle.joint(target).theta_cur;
            let joint = &mut replica.parts[target].joint;
            if joint.theta_cur > prev {
                joint.theta_high = prev.max(0.0);
            } else {
                joint.theta_low = prev.min(0.0);
            }
            joint.theta_cur = prev.clamp(joint.theta_low, joint.theta_high);
        }
        particle.replica = replica;
        likelihoods.push(w);
        distances.push(d);
        unexplained_min = unexplained_min.min(unexplained);
    }
    let mut posterior_weights: Vec<f64> =
        pool.weights.iter().zip(&likelihoods).map(|(a, b)| a * b).collect();
    let degenerate = normalize(&mut posterior_weights).is_err();
    if degenerate {
        log::warn!("all hypotheses rejected the observation; using uniform weights");
        posterior_weights = vec![1.0 / pool.len() as f64; pool.len()];
    }
    let weighted = ParticlePool { weights: posterior_weights.clone(), ..pool.clone() };
    let posterior = weighted.posterior_by_class();
    let (mut next, _) = pool.resample_or_uniform(&posterior_weights, rng)?;
    if cfg.limit_jitter {
        next.jitter_limits(rng);
    }
    *pool = next;

    let n = distances.len() as f64;
    Ok(UpdateSummary {
        likelihoods,
        posterior_weights,
        posterior,
        chamfer_min: distances.iter().cloned().fold(f64::INFINITY, f64::min),
        chamfer_mean: distances.iter().sum::<f64>() / n,
        chamfer_max: distances.iter().cloned().fold(0.0, f64::max),
        unexplained_min,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Estimate,
    Goal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Confident,
    Budget,
    Contact,
}

/// One line of the trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub part: PartId,
    pub phase: Phase,
    pub point: Vec3,
    pub direction: Vec3,
    pub delta_theta: f64,
    pub theta: f64,
    pub posterior: std::collections::BTreeMap<String, f64>,
    pub chamfer_min: f64,
    pub chamfer_mean: f64,
    pub chamfer_max: f64,
    pub contacts: Vec<Contact>,
    #[serde(default)]
    pub reinitialized: bool,
}

pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub best_class: JointClass,
    pub posterior: ClassPosterior,
    pub interactions_used: usize,
    pub stop: StopReason,
    pub contact_interrupt: Option<PartId>,
    pub trajectory: Vec<TrajectoryRecord>,
}

/// Result of a single real interaction driven by the estimator.
#[derive(Clone, Debug)]
pub struct Interaction {
    pub selection: Selection,
    pub outcome: StepOutcome,
    pub summary: UpdateSummary,
    /// First movable part the target ran into.
    pub blocked_by: Option<PartId>,
    /// No particle explained the outcome and the pool was redrawn.
    pub reinitialized: bool,
}

/// Resumable estimation state for one target part.
#[derive(Clone, Debug)]
pub struct Estimator {
    pub cfg: EstimatorConfig,
    pub pool: ParticlePool,
    pub interactions: usize,
    pub trajectory: Vec<TrajectoryRecord>,
    prior: Option<PriorWeights>,
}

impl Estimator {
    pub fn new<R: Rng + ?Sized>(
        world: &World,
        target: PartId,
        cfg: EstimatorConfig,
        prior: Option<&PriorWeights>,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let pool = ParticlePool::sample_prior(world, target, cfg.n_particles, prior, rng)?;
        Ok(Self { cfg, pool, interactions: 0, trajectory: Vec::new(), prior: prior.cloned() })
    }

    pub fn target(&self) -> PartId {
        self.pool.target
    }

    pub fn posterior(&self) -> ClassPosterior {
        self.pool.posterior_by_class()
    }

    /// Most populated particle of the most probable class. Ties go to the
    /// lowest pool index.
    pub fn map_particle(&self) -> usize {
        let (class, _) = self.posterior().argmax();
        let probs = self.pool.posterior_by_proposal();
        let mut best: Option<usize> = None;
        for (k, p) in self.pool.particles.iter().enumerate() {
            if self.pool.class_of(k) != class {
                continue;
            }
            match best {
                Some(b) if probs[self.pool.particles[b].proposal] >= probs[p.proposal] => {}
                _ => best = Some(k),
            }
        }
        best.unwrap_or(0)
    }

    pub fn is_confident(&self) -> bool {
        self.posterior().argmax().1 > self.cfg.confidence_threshold
    }

    fn interact<R: Rng + ?Sized>(
        &mut self,
        world: &mut World,
        selection: Selection,
        phase: Phase,
        rng: &mut R,
    ) -> Result<Interaction> {
        let target = self.target();
        let before_world = world.clone();
        let before = world.observe_part(target)?;
        let outcome = world.apply_noisy_action(target, &selection.action, self.cfg.noise_sigma, rng)?;
        let after = world.observe_part(target)?;
        self.interactions += 1;
        let summary = update_posterior(
            &mut self.pool,
            &outcome.action,
            &before,
            &after,
            &before_world,
            &outcome.contacts.iter().map(|c| c.blocking).collect::<Vec<_>>(),
            &self.cfg,
            rng,
        )?;
        let reinitialized = self.cfg.reinit_chamfer.is_some_and(|t| summary.unexplained_min > t);
        if reinitialized {
            log::debug!("part {target}: no hypothesis explains the outcome, redrawing the pool");
            self.pool = self.pool.redraw(world, self.cfg.n_particles, self.prior.as_ref(), rng)?;
        }
        let blocked_by = outcome
            .contacts
            .iter()
            .find(|c| c.moving == target && world.parts[c.blocking].movable)
            .map(|c| c.blocking);
        self.trajectory.push(TrajectoryRecord {
            step: self.interactions,
            part: target,
            phase,
            point: outcome.action.point,
            direction: outcome.action.direction,
            delta_theta: outcome.delta_theta[target],
            theta: outcome.theta_cur[target],
            posterior: self.posterior().to_map(),
            chamfer_min: summary.chamfer_min,
            chamfer_mean: summary.chamfer_mean,
            chamfer_max: summary.chamfer_max,
            contacts: outcome.contacts.clone(),
            reinitialized,
        });
        Ok(Interaction { selection, outcome, summary, blocked_by, reinitialized })
    }

    /// One informative interaction on the real world.
    pub fn step<R: Rng + ?Sized>(&mut self, world: &mut World, rng: &mut R) -> Result<Interaction> {
        // a zero-score selection came from a hypothesis that cannot move;
        // draw again so the real interaction tests one that can
        let mut selection = select_informative_action(&self.pool, world, &self.cfg.action, rng)?;
        for _ in 0..MAX_REDRAWS {
            if selection.score > 0.0 {
                break;
            }
            selection = select_informative_action(&self.pool, world, &self.cfg.action, rng)?;
        }
        self.interact(world, selection, Phase::Estimate, rng)
    }

    /// One goal-conditioned interaction; the posterior keeps updating.
    pub fn goal_step<R: Rng + ?Sized>(
        &mut self,
        world: &mut World,
        desired: &Desired,
        rng: &mut R,
    ) -> Result<Interaction> {
        let selection = select_goal_action(&self.pool, world, desired, &self.cfg.action, rng)?;
        self.interact(world, selection, Phase::Goal, rng)
    }

    /// Informative interactions until confident, out of budget, or blocked
    /// by another movable part. `budget` caps this call only.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        world: &mut World,
        budget: usize,
        rng: &mut R,
    ) -> Result<(StopReason, Option<PartId>, usize)> {
        let mut used = 0;
        while used < budget {
            let step = self.step(world, rng)?;
            used += 1;
            if let Some(b) = step.blocked_by {
                return Ok((StopReason::Contact, Some(b), used));
            }
            if self.is_confident() {
                return Ok((StopReason::Confident, None, used));
            }
        }
        Ok((StopReason::Budget, None, used))
    }

    pub fn result(&self, stop: StopReason, contact_interrupt: Option<PartId>) -> EstimationResult {
        let posterior = self.posterior();
        EstimationResult {
            best_class: posterior.argmax().0,
            posterior,
            interactions_used: self.interactions,
            stop,
            contact_interrupt,
            trajectory: self.trajectory.clone(),
        }
    }
}

/// Full estimation loop on `world` for `target`.
pub fn estimate_joint<R: Rng + ?Sized>(
    world: &mut World,
    target: PartId,
    cfg: &EstimatorConfig,
    prior: Option<&PriorWeights>,
    rng: &mut R,
) -> Result<EstimationResult> {
    world.part(target)?;
    let mut est = Estimator::new(world, target, cfg.clone(), prior, rng)?;
    let (stop, contact, _) = est.run(world, cfg.max_interactions, rng)?;
    Ok(est.result(stop, contact))
}
