//! Generate the desk scene, train a refiner on four subjects and report
//! occluded/visible MPJPE on the held-out one.
//!
//! ```text
//! cargo run --release --example train_refiner -- [epochs] [frames] [hidden] [visibility 0|1]
//! ```

use std::time::Instant;

use stgcn_refine::data::{generate_scene, split_by_subject, SceneSpec};
use stgcn_refine::eval::{evaluate, render_report, EvalOptions, ReportFormat};
use stgcn_refine::model::RefinerModel;
use stgcn_refine::skeleton::default_topology;
use stgcn_refine::train::{train, TrainConfig};

fn main() -> stgcn_refine::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let epochs = args.first().copied().unwrap_or(40);
    let frames = args.get(1).copied().unwrap_or(100);
    let hidden = args.get(2).copied().unwrap_or(64);
    let use_visibility = args.get(3).is_none_or(|&v| v != 0);

    let topo = default_topology();
    let seqs = generate_scene(&SceneSpec::desk(frames, 7), &topo)?;
    let occ: f64 = seqs.iter().map(|s| s.occluded_fraction()).sum::<f64>() / seqs.len() as f64;
    println!("{} sequences, {:.1}% joints occluded", seqs.len(), 100.0 * occ);

    let mut cfg = TrainConfig { epochs, ..TrainConfig::default() };
    cfg.model.hidden = hidden;
    cfg.model.use_visibility = use_visibility;
    let (test, train_set) = split_by_subject(&seqs, &cfg.holdout);

    let mut model = RefinerModel::init(cfg.model.clone(), &topo, cfg.seed)?;
    let start = Instant::now();
    let metrics = train(&mut model, &train_set, &test, &cfg, &topo)?;
    println!("trained {} epochs in {:.1}s", metrics.len(), start.elapsed().as_secs_f64());

    let ev = evaluate(&model, &test, topo.root(), &EvalOptions { corruption: Some(cfg.corruption), config: cfg.to_pairs() })?;
    print!("{}", render_report(&ev.report, ReportFormat::Text));
    let t = ev.total;
    println!(
        "occluded {:.1} -> {:.1} mm, visible {:.1} -> {:.1} mm",
        t.occluded.baseline_mm().unwrap_or(f64::NAN),
        t.occluded.refined_mm().unwrap_or(f64::NAN),
        t.visible.baseline_mm().unwrap_or(f64::NAN),
        t.visible.refined_mm().unwrap_or(f64::NAN)
    );
    Ok(())
}
