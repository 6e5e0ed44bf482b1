//! Model-free baselines on the same PuzzleBoxes the solver faces.

use hsaur::bench::baselines::{run_baseline, Policy};
use hsaur::bench::{generate_scene, SceneSpec};
use hsaur::puzzle::PuzzleConfig;

fn main() -> hsaur::Result<()> {
    for policy in [Policy::Random, Policy::Heuristic] {
        let mut solved = 0;
        for seed in 0..10 {
            let scene = generate_scene(&SceneSpec::puzzle(1, 1, false, seed))?;
            let cfg = PuzzleConfig::for_task(scene.task());
            solved += usize::from(run_baseline(&mut scene.world.clone(), policy, &cfg, seed)?.solved());
        }
        println!("{policy:?}: {solved}/10 solved");
    }
    Ok(())
}
