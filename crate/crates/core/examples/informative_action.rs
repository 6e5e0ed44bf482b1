//! The action filter picks the push that deforms a hypothesis most.

use hsaur::action_select::{select_informative_action, ActionSelectConfig};
use hsaur::bench::{generate_scene, SceneSpec, Setting};
use hsaur::hypotheses::ParticlePool;
use hsaur::kinematics::JointClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsaur::Result<()> {
    let scene = generate_scene(&SceneSpec::single(JointClass::RevTop, Setting::HalfOpened, 2))?;
    let part = scene.task().goal_part;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pool = ParticlePool::sample_prior(&scene.world, part, 20, None, &mut rng)?;
    for _ in 0..5 {
        let s = select_informative_action(&pool, &scene.world, &ActionSelectConfig::default(), &mut rng)?;
        println!(
            "hypothesis {:2} ({:<10}) point {:>5.2?} dir {:?} predicted Δθ {:+.3}  rounds {:.3?}",
            s.hypothesis,
            pool.class_of(s.hypothesis).name(),
            s.action.point.as_slice(),
            s.action.direction.as_slice(),
            s.predicted_displacement,
            s.best_per_round
        );
    }
    Ok(())
}
