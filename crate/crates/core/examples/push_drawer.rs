//! Pushing a half-open drawer in the quasi-static simulator.

use hsaur::bench::{generate_scene, SceneSpec, Setting};
use hsaur::geometry::Vec3;
use hsaur::kinematics::JointClass;
use hsaur::sim::Action;

fn main() -> hsaur::Result<()> {
    let scene = generate_scene(&SceneSpec::single(JointClass::PrisY, Setting::HalfOpened, 0))?;
    let mut world = scene.world;
    let drawer = scene.file.task.as_ref().map_or(1, |t| t.goal_part);
    let front = world.observe_part(drawer)?.points()[0];
    // oblique pushes move less; the last outward push and the final inward
    // ones stop at the joint limits
    let pushes = [(Vec3::new(1.0, -1.0, 0.0), 1), (Vec3::new(0.0, -1.0, 0.0), 2), (Vec3::new(0.0, 1.0, 0.0), 4)];
    for (direction, count) in pushes {
        for _ in 0..count {
            let point = world.observe_part(drawer)?.project(&front);
            let out = world.apply_action(drawer, &Action::new(point, direction)?)?;
            println!(
                "push {:?}: Δθ = {:+.4}, θ = {:+.4}, contacts {:?}",
                direction.as_slice(),
                out.delta_theta[drawer],
                out.theta_cur[drawer],
                out.contacts.iter().map(|c| c.blocking).collect::<Vec<_>>()
            );
        }
    }
    Ok(())
}
