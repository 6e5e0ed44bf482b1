//! Estimate first, then open: the 10 + 5 manipulation protocol.

use hsaur::bench::manipulation::run_default_protocol;
use hsaur::bench::{generate_scene, SceneSpec, Setting};
use hsaur::estimator::EstimatorConfig;
use hsaur::kinematics::JointClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsaur::Result<()> {
    for class in [JointClass::PrisX, JointClass::PrisZ, JointClass::RevLeft] {
        let scene = generate_scene(&SceneSpec::single(class, Setting::Closed, 3))?;
        let mut world = scene.world.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2003);
        let r = run_default_protocol(&mut world, scene.task(), &EstimatorConfig::default(), &mut rng)?;
        println!(
            "{:<10} estimated {:<10} after {:2} pushes, opened {:.0}%",
            class.name(),
            r.best_class.name(),
            r.estimation_interactions,
            100.0 * r.proportion_opened
        );
    }
    Ok(())
}
