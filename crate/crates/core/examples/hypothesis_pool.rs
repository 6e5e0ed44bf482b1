//! Drawing hypothesis particles from a uniform and a class prior.

use hsaur::bench::{generate_scene, SceneSpec, Setting};
use hsaur::hypotheses::{ParticlePool, PriorWeights};
use hsaur::kinematics::JointClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsaur::Result<()> {
    let scene = generate_scene(&SceneSpec::single(JointClass::RevLeft, Setting::Closed, 1))?;
    let part = scene.task().goal_part;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let doors = PriorWeights::from_classes(&[(JointClass::RevLeft, 3.0), (JointClass::RevRight, 3.0)]);
    for (label, prior) in [("uniform", None), ("door-heavy", Some(&doors))] {
        let pool = ParticlePool::sample_prior(&scene.world, part, 110, prior, &mut rng)?;
        println!("{label}:");
        for (class, p) in pool.posterior_by_class().to_map() {
            println!("  {class:<10} {p:.3}");
        }
    }
    Ok(())
}
