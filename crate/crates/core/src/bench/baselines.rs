//! Model-free puzzle baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action_select::{axis_direction, direction_sign, AXIS_DIRECTIONS};
use crate::error::{Error, Result};
use crate::puzzle::{Outcome, PuzzleConfig, PuzzleResult};
use crate::sim::{Action, PartId, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// A random movable part, surface point and axis direction every step.
    Random,
    /// Repeats the last action while it keeps moving the part, otherwise
    /// behaves like `Random`.
    Heuristic,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "heuristic" => Ok(Self::Heuristic),
            other => Err(Error::Config { field: "policy".into(), message: format!("unknown policy {other:?}") }),
        }
    }
}

/// Point on a part tracked by index so that repeats follow the moving surface.
#[derive(Clone, Copy)]
struct Choice {
    part: PartId,
    point_index: usize,
    direction_index: usize,
}

fn random_choice<R: Rng + ?Sized>(world: &World, movable: &[PartId], rng: &mut R) -> Result<Choice> {
    let part = movable[rng.random_range(0..movable.len())];
    let n = world.part(part)?.rest_cloud.len();
    Ok(Choice {
        part,
        point_index: rng.random_range(0..n),
        direction_index: rng.random_range(0..AXIS_DIRECTIONS.len()),
    })
}

/// Runs `policy` for at most `cfg.max_interactions` interactions, scored with
/// the same ground-truth success test as the solver.
pub fn run_baseline(world: &mut World, policy: Policy, cfg: &PuzzleConfig, seed: u64) -> Result<PuzzleResult> {
    cfg.validate()?;
    let door = cfg.goal_part;
    let open_sign = direction_sign(world, door, &cfg.open_direction)?;
    let theta0 = world.theta(door)?;
    let movable: Vec<PartId> = world.parts.iter().filter(|p| p.movable).map(|p| p.id).collect();
    if movable.is_empty() {
        return Err(Error::InvalidWorld("no movable parts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut goal_theta = Vec::new();
    let mut last: Option<Choice> = None;
    let mut used = 0;
    let outcome = loop {
        if (world.theta(door)? - theta0) * open_sign >= cfg.open_threshold {
            break Outcome::Success;
        }
        if used >= cfg.max_interactions {
            break Outcome::Failure;
        }
        let choice = match (policy, last) {
            (Policy::Heuristic, Some(c)) => c,
            _ => random_choice(world, &movable, &mut rng)?,
        };
        let point = world.observe_part(choice.part)?.points()[choice.point_index];
        let action = Action { point, direction: axis_direction(choice.direction_index) };
        let moved = world.apply_action(choice.part, &action)?.target_displacement() != 0.0;
        used += 1;
        goal_theta.push(world.theta(door)?);
        last = moved.then_some(choice);
    };
    Ok(PuzzleResult {
        outcome,
        interactions_used: used,
        dependency_trace: Vec::new(),
        goal_theta,
        trajectory: Vec::new(),
    })
}
