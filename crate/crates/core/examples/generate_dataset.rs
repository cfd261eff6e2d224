//! Generate an occluded multi-camera dataset, write it to disk, read it
//! back and summarize visibility, then corrupt one sequence the way a 3D
//! backbone would.
//!
//! ```text
//! cargo run --release --example generate_dataset -- [out dir] [frames]
//! ```

use std::path::PathBuf;

use stgcn_refine::data::{corrupt, generate_scene, read_dataset, write_dataset, CorruptionModel, SceneSpec};
use stgcn_refine::eval::mpjpe;
use stgcn_refine::skeleton::default_topology;

fn main() -> stgcn_refine::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("stgcn-desk"));
    let frames = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50);

    let scene = SceneSpec::desk(frames, 7);
    print!("scene file:\n{}", scene.to_text());
    let seqs = generate_scene(&scene, &default_topology())?;
    write_dataset(&seqs, &out)?;
    let back = read_dataset(&out)?;
    assert_eq!(back.len(), seqs.len());
    println!("\nwrote and re-read {} sequences under {}", back.len(), out.display());

    println!("\n{:<22} {:>7} {:>10}", "sequence", "frames", "occluded");
    for s in back.iter().take(8) {
        println!("{:<22} {:>7} {:>9.1}%", s.key(), s.frames, 100.0 * s.occluded_fraction());
    }

    let s = &back[0];
    let noisy = corrupt(s, &CorruptionModel::new(20.0, 60.0, 1))?;
    let visible = s.visibility.clone();
    let hidden: Vec<u8> = visible.iter().map(|v| 1 - v).collect();
    println!("\ncorrupted {}:", s.key());
    println!("  all joints      {:.1} mm", mpjpe(&noisy, &s.joints_3d, None)?);
    if let Ok(v) = mpjpe(&noisy, &s.joints_3d, Some(&visible)) {
        println!("  visible joints  {v:.1} mm");
    }
    if let Ok(h) = mpjpe(&noisy, &s.joints_3d, Some(&hidden)) {
        println!("  occluded joints {h:.1} mm");
    }
    Ok(())
}
