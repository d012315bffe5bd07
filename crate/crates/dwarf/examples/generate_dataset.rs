//! Generate a small synthetic stereo-video dataset and reload it.
//!
//! Each scene is a textured background plus moving rectangles at distinct
//! depths, rendered into four views with dense labels, a validity mask
//! and an occlusion record. Files land in a temp directory as PNG frames
//! and float label maps plus one manifest.

use rand::rngs::StdRng;
use rand::SeedableRng;

use dwarf::data::{generate_scene, load_manifest, DatasetWriter, GtFormat, SceneSpec};

fn main() -> dwarf::Result<()> {
    let root = std::env::temp_dir().join("dwarf_generate_dataset");
    let mut writer = DatasetWriter::create(&root, GtFormat::Pfm)?;
    let mut rng = StdRng::seed_from_u64(12);
    for k in 0..4 {
        let spec = SceneSpec::random(128, 96, 3, &mut rng);
        let sample = generate_scene(&spec, k)?;
        writer.push(&format!("scene{k:02}"), &sample)?;
    }
    let manifest = writer.finish()?;
    println!("wrote {}", manifest.display());

    let dataset = load_manifest(&manifest)?;
    for index in 0..dataset.len() {
        let s = dataset.load_sample(index)?;
        let labelled = s.gt.valid.iter().filter(|&&v| v).count();
        let max_flow = s
            .gt
            .u
            .iter()
            .zip(&s.gt.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0f32, f32::max);
        let max_disp = s.gt.d1.iter().fold(0.0f32, |m, &d| m.max(d));
        println!(
            "scene {index}: {}x{}, {labelled} labelled px, max flow {max_flow:.2}, max disp {max_disp:.2}",
            s.width(),
            s.height()
        );
    }
    Ok(())
}
