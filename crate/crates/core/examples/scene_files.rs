//! Generate benchmark scenes, write them as JSON and load them back.

use hsaur::bench::{generate_scene, SceneSpec};
use hsaur::sim::SceneFile;

fn main() -> hsaur::Result<()> {
    let dir = std::env::temp_dir().join("hsaur-scenes");
    std::fs::create_dir_all(&dir)?;
    for name in ["rev-left", "pris-y@half-opened", "puzzlebox-1x2-dummy"] {
        let scene = generate_scene(&SceneSpec::parse(name, 1)?)?;
        let path = dir.join(format!("{}.json", scene.spec.label()));
        scene.file.save(&path)?;
        let back = SceneFile::load(&path)?.build()?;
        assert_eq!(back, scene.world);
        println!("{name:<22} {} parts -> {}", back.parts.len(), path.display());
    }
    Ok(())
}
