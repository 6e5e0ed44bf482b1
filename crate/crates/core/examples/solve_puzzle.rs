//! Opening a PuzzleBox whose door is held by a chain of locks.

use hsaur::bench::{generate_scene, SceneSpec};
use hsaur::estimator::EstimatorConfig;
use hsaur::puzzle::{solve_puzzle, PuzzleConfig};

fn main() -> hsaur::Result<()> {
    let scene = generate_scene(&SceneSpec::puzzle(2, 1, false, 4))?;
    let mut world = scene.world.clone();
    let cfg = PuzzleConfig::for_task(scene.task());
    let result = solve_puzzle(&mut world, &cfg, &EstimatorConfig::default(), 4)?;
    for t in &result.dependency_trace {
        println!("step {:3}  part {}  {:?}", t.step, t.part, t.event);
    }
    println!("{:?} after {} interactions", result.outcome, result.interactions_used);
    Ok(())
}
