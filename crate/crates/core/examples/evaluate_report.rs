//! Evaluate a model per action with the occluded/visible split and render
//! the report as a table and as CSV.
//!
//! ```text
//! cargo run --release --example evaluate_report -- [checkpoint]
//! ```

use std::path::{Path, PathBuf};

use stgcn_refine::data::{generate_scene, CorruptionModel, SceneSpec};
use stgcn_refine::eval::{evaluate, parse_report_csv, render_report, EvalOptions, EvalReport, EvalRow, ReportFormat};
use stgcn_refine::model::{load_checkpoint, RefinerConfig, RefinerModel};
use stgcn_refine::skeleton::default_topology;

fn main() -> stgcn_refine::Result<()> {
    let topo = default_topology();
    let model = match std::env::args().nth(1).map(PathBuf::from) {
        Some(p) => load_checkpoint(&p, &topo)?.0,
        None => RefinerModel::init(RefinerConfig::default(), &topo, 0)?,
    };
    let seqs = generate_scene(&SceneSpec::desk(60, 7), &topo)?;
    let held: Vec<_> = seqs.iter().filter(|s| s.subject == "SS5").collect();
    let corruption = CorruptionModel::new(20.0, 60.0, 1);
    let options = EvalOptions {
        corruption: Some(corruption),
        config: vec![("corruption".into(), format!("{corruption:?}"))],
    };
    let ev = evaluate(&model, &held, topo.root(), &options)?;
    print!("{}", render_report(&ev.report, ReportFormat::Text));

    let csv = render_report(&ev.report, ReportFormat::Csv);
    print!("\n{csv}");
    assert_eq!(parse_report_csv(&csv, Path::new("report.csv"))?, ev.report.rounded());

    // the report format with table-scale values
    let fixture = EvalReport {
        rows: vec![EvalRow {
            action: "all".into(),
            frames: 1,
            baseline_mm: 175.0,
            refined_mm: 112.7,
            occluded_mm: None,
            visible_mm: None,
        }],
        config: Vec::new(),
    };
    print!("\n{}", render_report(&fixture, ReportFormat::Text));
    Ok(())
}
