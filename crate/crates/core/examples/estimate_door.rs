//! Interactive joint estimation on a door, printing the posterior after
//! every push.

use hsaur::bench::{generate_scene, SceneSpec, Setting};
use hsaur::estimator::{Estimator, EstimatorConfig};
use hsaur::kinematics::JointClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsaur::Result<()> {
    let scene = generate_scene(&SceneSpec::single(JointClass::RevRight, Setting::Closed, 5))?;
    let part = scene.task().goal_part;
    let mut world = scene.world.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let mut est = Estimator::new(&world, part, EstimatorConfig::default(), None, &mut rng)?;
    while est.interactions < est.cfg.max_interactions && !est.is_confident() {
        let step = est.step(&mut world, &mut rng)?;
        let (class, p) = est.posterior().argmax();
        println!(
            "step {:2}: Δθ {:+.3}  best {:<10} {:.2}{}",
            est.interactions,
            step.outcome.delta_theta[part],
            class.name(),
            p,
            if step.reinitialized { "  (pool redrawn)" } else { "" }
        );
    }
    println!("true class: rev-right, estimate: {}", est.posterior().argmax().0.name());
    Ok(())
}
