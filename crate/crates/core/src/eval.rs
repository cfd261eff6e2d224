//! MPJPE evaluation, refinement of stored sequences, and the per-action
//! report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::window::{input_tensor, windows, Window};
use crate::data::{corrupt, CorruptionModel, PoseSequence};
use crate::error::{Error, Result};
use crate::model::RefinerModel;

/// Windows per forward pass during inference.
const INFER_BATCH: usize = 256;

/// Mean per-joint Euclidean error over `F x J x 3` arrays, restricted to
/// entries whose `mask` value is non-zero when a mask is given.
pub fn mpjpe(pred: &[f64], gt: &[f64], mask: Option<&[u8]>) -> Result<f64> {
    if pred.len() != gt.len() || pred.len() % 3 != 0 {
        return Err(Error::shape("mpjpe", format!("{} vs {} values", pred.len(), gt.len())));
    }
    if let Some(m) = mask {
        if m.len() * 3 != pred.len() {
            return Err(Error::shape("mpjpe", format!("mask of {} for {} joints", m.len(), pred.len() / 3)));
        }
    }
    let (sum, n) = error_sum(pred, gt, |i| mask.is_none_or(|m| m[i] != 0));
    if n == 0 {
        return Err(Error::EmptySelection("mpjpe mask selects no joints".into()));
    }
    Ok(sum / n as f64)
}

fn error_sum(pred: &[f64], gt: &[f64], keep: impl Fn(usize) -> bool) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for (i, (p, g)) in pred.chunks_exact(3).zip(gt.chunks_exact(3)).enumerate() {
        if keep(i) {
            sum += ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt();
            n += 1;
        }
    }
    (sum, n)
}

/// Predicted offsets for every window, each `J x 3`.
pub fn window_offsets(model: &RefinerModel, windows: &[Window]) -> Result<Vec<Vec<f64>>> {
    let cfg = model.config();
    let j = cfg.joints;
    let mut out = Vec::with_capacity(windows.len());
    for group in windows.chunks(INFER_BATCH) {
        let refs: Vec<&Window> = group.iter().collect();
        let x = input_tensor(&refs, cfg.frames, j, cfg.use_visibility)?;
        let off = model.forward_offsets(&x)?;
        let d = off.data();
        for b in 0..group.len() {
            out.push((0..j * 3).map(|i| d[b * 3 * j + (i % 3) * j + i / 3]).collect());
        }
    }
    Ok(out)
}

/// The base the offsets are added to: the input center frame with
/// residual output, else the stored input mean. Root-relative.
fn window_base(model: &RefinerModel, w: &Window) -> Vec<f64> {
    let cfg = model.config();
    let j = cfg.joints;
    if cfg.residual_output {
        let c = cfg.center() * j * 3;
        w.input[c..c + j * 3].to_vec()
    } else {
        let mean = model.input_norm().mean;
        (0..j * 3).map(|i| mean[i % 3]).collect()
    }
}

/// Refined root-relative center frames, each `J x 3`.
pub fn refine_windows(model: &RefinerModel, windows: &[Window]) -> Result<Vec<Vec<f64>>> {
    let offsets = window_offsets(model, windows)?;
    Ok(windows
        .iter()
        .zip(offsets)
        .map(|(w, o)| window_base(model, w).iter().zip(&o).map(|(b, d)| b + d).collect())
        .collect())
}

/// Refine every frame of `input` (`F x J x 3`, camera mm, labelled by
/// `seq.visibility`). With residual output the offsets are added to the
/// absolute input, so a zero offset returns `input` bit for bit.
pub fn refine_sequence(model: &RefinerModel, seq: &PoseSequence, input: &[f64], root: usize) -> Result<Vec<f64>> {
    let cfg = model.config();
    if seq.joints != cfg.joints {
        return Err(Error::SkeletonMismatch(format!(
            "sequence {} has {} joints, model {}",
            seq.key(),
            seq.joints,
            cfg.joints
        )));
    }
    let ws = windows(seq, Some(input), cfg.frames, root)?;
    let offsets = window_offsets(model, &ws)?;
    let j3 = cfg.joints * 3;
    let mut out = Vec::with_capacity(input.len());
    for (w, o) in ws.iter().zip(offsets) {
        if cfg.residual_output {
            let base = &input[w.center * j3..(w.center + 1) * j3];
            out.extend(base.iter().zip(&o).map(|(b, d)| b + d));
        } else {
            let base = window_base(model, w);
            out.extend((0..j3).map(|i| base[i] + o[i] + w.root[i % 3]));
        }
    }
    Ok(out)
}

/// One action's row. Split columns are `None` when the action has no
/// joints in that class.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub action: String,
    pub frames: usize,
    pub baseline_mm: f64,
    pub refined_mm: f64,
    pub occluded_mm: Option<f64>,
    pub visible_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub config: Vec<(String, String)>,
}

fn weighted(rows: &[EvalRow], f: impl Fn(&EvalRow) -> Option<f64>) -> Option<f64> {
    let mut s = 0.0;
    let mut w = 0usize;
    for r in rows {
        if let Some(v) = f(r) {
            s += v * r.frames as f64;
            w += r.frames;
        }
    }
    (w > 0).then(|| s / w as f64)
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

impl EvalReport {
    /// Frame-weighted means of the row values, as an `AVG` row.
    pub fn average(&self) -> Option<EvalRow> {
        if self.rows.is_empty() {
            return None;
        }
        Some(EvalRow {
            action: "AVG".into(),
            frames: self.rows.iter().map(|r| r.frames).sum(),
            baseline_mm: weighted(&self.rows, |r| Some(r.baseline_mm))?,
            refined_mm: weighted(&self.rows, |r| Some(r.refined_mm))?,
            occluded_mm: weighted(&self.rows, |r| r.occluded_mm),
            visible_mm: weighted(&self.rows, |r| r.visible_mm),
        })
    }

    /// The report as its CSV would store it: values at 0.1 mm, no config.
    pub fn rounded(&self) -> EvalReport {
        EvalReport {
            rows: self
                .rows
                .iter()
                .map(|r| EvalRow {
                    action: r.action.clone(),
                    frames: r.frames,
                    baseline_mm: round1(r.baseline_mm),
                    refined_mm: round1(r.refined_mm),
                    occluded_mm: r.occluded_mm.map(round1),
                    visible_mm: r.visible_mm.map(round1),
                })
                .collect(),
            config: Vec::new(),
        }
    }
}

/// Error sums over a set of joints: baseline and refined.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitStats {
    pub count: usize,
    pub baseline_sum: f64,
    pub refined_sum: f64,
}

impl SplitStats {
    pub fn baseline_mm(&self) -> Option<f64> {
        (self.count > 0).then(|| self.baseline_sum / self.count as f64)
    }

    pub fn refined_mm(&self) -> Option<f64> {
        (self.count > 0).then(|| self.refined_sum / self.count as f64)
    }

    fn add(&mut self, other: &SplitStats) {
        self.count += other.count;
        self.baseline_sum += other.baseline_sum;
        self.refined_sum += other.refined_sum;
    }
}

/// Pooled (joint-weighted) baseline and refined errors per visibility class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Breakdown {
    pub all: SplitStats,
    pub occluded: SplitStats,
    pub visible: SplitStats,
}

impl Breakdown {
    fn add(&mut self, other: &Breakdown) {
        self.all.add(&other.all);
        self.occluded.add(&other.occluded);
        self.visible.add(&other.visible);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Per action, in report row order.
    pub breakdown: Vec<Breakdown>,
    pub total: Breakdown,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// How inputs are derived from the clean poses; `None` feeds them as is.
    pub corruption: Option<CorruptionModel>,
    pub config: Vec<(String, String)>,
}

fn breakdown(input: &[f64], refined: &[f64], seq: &PoseSequence) -> Breakdown {
    let gt = &seq.joints_3d;
    let split = |keep: &dyn Fn(usize) -> bool| {
        let (b, n) = error_sum(input, gt, keep);
        let (r, _) = error_sum(refined, gt, keep);
        SplitStats {
            count: n,
            baseline_sum: b,
            refined_sum: r,
        }
    };
    Breakdown {
        all: split(&|_| true),
        occluded: split(&|i| seq.visibility[i] == 0),
        visible: split(&|i| seq.visibility[i] != 0),
    }
}

/// Baseline (input vs. ground truth) and refined errors per action.
pub fn evaluate(model: &RefinerModel, seqs: &[&PoseSequence], root: usize, options: &EvalOptions) -> Result<Evaluation> {
    let mut per_action: BTreeMap<String, (usize, Breakdown)> = BTreeMap::new();
    for seq in seqs {
        let input = match &options.corruption {
            Some(c) => corrupt(seq, c)?,
            None => seq.joints_3d.clone(),
        };
        let refined = refine_sequence(model, seq, &input, root)?;
        let entry = per_action.entry(seq.action.clone()).or_default();
        entry.0 += seq.frames;
        entry.1.add(&breakdown(&input, &refined, seq));
    }
    let mut rows = Vec::new();
    let mut parts = Vec::new();
    let mut total = Breakdown::default();
    for (action, (frames, b)) in per_action {
        rows.push(EvalRow {
            action,
            frames,
            baseline_mm: b.all.baseline_mm().unwrap_or(0.0),
            refined_mm: b.all.refined_mm().unwrap_or(0.0),
            occluded_mm: b.occluded.refined_mm(),
            visible_mm: b.visible.refined_mm(),
        });
        total.add(&b);
        parts.push(b);
    }
    Ok(Evaluation {
        report: EvalReport {
            rows,
            config: options.config.clone(),
        },
        breakdown: parts,
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" | "table" => Ok(ReportFormat::Text),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

pub const REPORT_HEADER: [&str; 6] = ["action", "frames", "baseline_mm", "refined_mm", "occluded_mm", "visible_mm"];

fn cells(r: &EvalRow) -> [String; 6] {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_default();
    [
        r.action.clone(),
        r.frames.to_string(),
        format!("{:.1}", r.baseline_mm),
        format!("{:.1}", r.refined_mm),
        opt(r.occluded_mm),
        opt(r.visible_mm),
    ]
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    let mut lines: Vec<[String; 6]> = report.rows.iter().map(cells).collect();
    lines.extend(report.average().as_ref().map(cells));
    let header = REPORT_HEADER.map(String::from);
    match format {
        ReportFormat::Csv => {
            let mut s = String::new();
            for l in std::iter::once(&header).chain(&lines) {
                s.push_str(&l.join(","));
                s.push('\n');
            }
            s
        }
        ReportFormat::Text => {
            let mut width = header.clone().map(|h| h.len());
            for l in &lines {
                for (w, c) in width.iter_mut().zip(l) {
                    *w = (*w).max(c.len());
                }
            }
            let mut s = String::new();
            for l in std::iter::once(&header).chain(&lines) {
                let mut row = format!("{:<w$}", l[0], w = width[0]);
                for k in 1..6 {
                    write!(row, "  {:>w$}", l[k], w = width[k]).expect("write to string");
                }
                s.push_str(row.trim_end());
                s.push('\n');
            }
            for (k, v) in &report.config {
                writeln!(s, "# {k} = {v}").expect("write to string");
            }
            s
        }
    }
}

/// Parse a CSV report. The `AVG` row is checked against the rows rather
/// than stored.
pub fn parse_report_csv(text: &str, origin: &Path) -> Result<EvalReport> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != REPORT_HEADER.join(",") {
        return Err(Error::format(origin, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    let mut avg = None;
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |d: &str| Error::format(origin, format!("line {}: {d}", ln + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let row = EvalRow {
            action: f[0].to_string(),
            frames: f[1].parse().map_err(|_| bad("bad frame count"))?,
            baseline_mm: num(f[2])?,
            refined_mm: num(f[3])?,
            occluded_mm: opt(f[4])?,
            visible_mm: opt(f[5])?,
        };
        if row.action == "AVG" {
            avg = Some(row);
        } else {
            rows.push(row);
        }
    }
    let report = EvalReport { rows, config: Vec::new() };
    match (&avg, report.average()) {
        (None, None) => {}
        (Some(a), Some(b)) if a.frames == b.frames => {}
        _ => return Err(Error::format(origin, "AVG row does not match the rows")),
    }
    Ok(report)
}
