//! Which pushes move a part: probes labelled on the true object, predicted
//! by the estimate.

use hsaur::bench::affordance::{eval_affordance, sample_probes, DEFAULT_PROBES};
use hsaur::bench::{generate_scene, SceneSpec, Setting};
use hsaur::estimator::{Estimator, EstimatorConfig};
use hsaur::kinematics::JointClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsaur::Result<()> {
    let scene = generate_scene(&SceneSpec::single(JointClass::RevBottom, Setting::Closed, 2))?;
    let part = scene.task().goal_part;
    let mut world = scene.world.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut est = Estimator::new(&world, part, EstimatorConfig::default(), None, &mut rng)?;
    est.run(&mut world, 10, &mut rng)?;
    let probes = sample_probes(&world, part, DEFAULT_PROBES, &mut rng)?;
    let replica = est.pool.particles[est.map_particle()].reproduce(&world, part)?;
    let score = eval_affordance(&replica, &probes)?;
    println!("estimate {}", est.posterior().argmax().0.name());
    println!("accuracy {:.3}, L1 {:.4} m over {} probes", score.accuracy, score.l1_error, score.probes);
    for p in probes.probes.iter().take(6) {
        println!("  {:?} -> moved {:.3} m, success {}", p.action.direction.as_slice(), p.displacement, p.success);
    }
    Ok(())
}
