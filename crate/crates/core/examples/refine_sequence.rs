//! Build a refiner, check the identity-at-init contract, save and reload a
//! checkpoint and refine a whole sequence with it.
//!
//! ```text
//! cargo run --release --example refine_sequence -- [checkpoint]
//! ```

use std::path::PathBuf;

use stgcn_refine::data::{corrupt, generate_scene, CorruptionModel, SceneSpec};
use stgcn_refine::eval::{mpjpe, refine_sequence};
use stgcn_refine::model::{load_checkpoint, save_checkpoint, CheckpointMeta, RefinerConfig, RefinerModel};
use stgcn_refine::skeleton::default_topology;

fn main() -> stgcn_refine::Result<()> {
    let topo = default_topology();
    let given = std::env::args().nth(1).map(PathBuf::from);
    let model = match &given {
        Some(p) => load_checkpoint(p, &topo)?.0,
        None => {
            let m = RefinerModel::init(RefinerConfig::default(), &topo, 0)?;
            let path = std::env::temp_dir().join("stgcn-identity.ckpt");
            save_checkpoint(&m, &CheckpointMeta::default(), &path)?;
            println!("saved a fresh model to {}", path.display());
            load_checkpoint(&path, &topo)?.0
        }
    };
    for (k, v) in model.config().to_pairs() {
        println!("  {k} = {v}");
    }
    let n: usize = model.params().iter().map(|p| p.data.len()).sum();
    println!("{} parameter tensors, {n} values", model.params().len());

    let seqs = generate_scene(&SceneSpec::desk(40, 3), &topo)?;
    let seq = &seqs[0];
    let noisy = corrupt(seq, &CorruptionModel::new(20.0, 60.0, 1))?;
    let refined = refine_sequence(&model, seq, &noisy, topo.root())?;
    let before = mpjpe(&noisy, &seq.joints_3d, None)?;
    let after = mpjpe(&refined, &seq.joints_3d, None)?;
    println!("{}: input {before:.2} mm, refined {after:.2} mm", seq.key());
    if given.is_none() {
        // zero head plus residual output: the refiner returns its input
        assert!((before - after).abs() < 1e-9);
        println!("fresh model is the identity on the center frame");
    }
    Ok(())
}
