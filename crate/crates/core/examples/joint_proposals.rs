//! The 19 joint proposals of a door leaf and the classes they evaluate as.

use hsaur::geometry::{BoundingBox, Vec3};
use hsaur::kinematics::{propose_joints, JointClass};

fn main() {
    let leaf = BoundingBox::axis_aligned(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.45, 0.02, 1.0));
    let set = propose_joints(&leaf);
    for (i, spec) in set.proposals.iter().enumerate() {
        println!(
            "{i:2}  {:<10} {:?}  anchor {:>6.2?}  axis {:>5.2?}",
            set.class_of(i).name(),
            spec.kind,
            spec.anchor.as_slice(),
            spec.axis.as_slice()
        );
    }
    for class in JointClass::ALL {
        println!("{:<10} {} proposals", class.name(), set.members(class).len());
    }
}
