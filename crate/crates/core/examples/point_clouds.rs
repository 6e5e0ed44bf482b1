//! Surface sampling, bounding boxes and the one-directional chamfer distance.

use hsaur::geometry::{chamfer, fit_bounding_box, sample_box_surface, transform_cloud, RigidTransform, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsaur::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let lid = sample_box_surface(&Vec3::new(0.0, 0.0, 0.5), &Vec3::new(0.3, 0.2, 0.02), 256, &mut rng)?;
    let bbox = fit_bounding_box(&lid);
    println!("{} points, box center {:?}, half extents {:?}", lid.len(), bbox.center, bbox.half_extents);

    // lift a copy by 5 cm and compare in both directions
    let lifted = transform_cloud(&lid, &RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.05)));
    println!("chamfer(lid, lifted) = {:.6}", chamfer(&lid, &lifted));
    println!("chamfer(lifted, lid) = {:.6}", chamfer(&lifted, &lid));
    println!("chamfer(lid, lid)    = {}", chamfer(&lid, &lid));
    Ok(())
}
