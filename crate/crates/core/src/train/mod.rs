//! Losses, optimizer and the training loop.
//!
//! Training examples are windows of corrupted input with the clean center
//! frame as target. Windows are grouped into chunks of `chunk` consecutive
//! centers from one sequence; chunks are shuffled per epoch and packed into
//! batches, so every batch carries short runs of refined center frames for
//! the derivative term.

pub mod config;
pub mod losses;
pub mod optim;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

pub use config::TrainConfig;
pub use losses::{derivative_loss, pose_loss, symmetry_loss, symmetry_loss_with, total_loss, LossParts, LossWeights, SymmetryReferent};
pub use optim::{lr_schedule, Amsgrad, LrSchedule};

use crate::data::window::{input_tensor, target_tensor, windows, Window};
use crate::data::{corrupt, PoseSequence};
use crate::error::{Error, Result};
use crate::eval::refine_windows;
use crate::model::{InputNorm, RefinerModel};
use crate::skeleton::SkeletonTopology;
use crate::tensor::rng::keyed;

/// Corrupted windows of `seqs`, sequence after sequence, plus the window
/// count of each sequence.
pub fn prepare_windows(seqs: &[&PoseSequence], cfg: &TrainConfig, root: usize) -> Result<(Vec<Window>, Vec<usize>)> {
    let mut out = Vec::new();
    let mut lens = Vec::new();
    for s in seqs {
        if s.joints != cfg.model.joints {
            return Err(Error::SkeletonMismatch(format!(
                "sequence {} has {} joints, model {}",
                s.key(),
                s.joints,
                cfg.model.joints
            )));
        }
        let noisy = corrupt(s, &cfg.corruption)?;
        let w = windows(s, Some(&noisy), cfg.model.frames, root)?;
        lens.push(w.len());
        out.extend(w);
    }
    Ok((out, lens))
}

/// Start indices of equal-length chunks of consecutive windows. The last
/// chunk of a sequence is shifted back to end on its last window, so it may
/// overlap the previous one.
pub fn chunk_starts(lens: &[usize], chunk: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let mut base = 0;
    for &n in lens {
        if n < chunk {
            return Err(Error::Config(format!("sequence of {n} frames is shorter than chunk {chunk}")));
        }
        let mut s = 0;
        while s + chunk < n {
            out.push(base + s);
            s += chunk;
        }
        out.push(base + n - chunk);
        base += n;
    }
    Ok(out)
}

/// Per-channel mean and standard deviation of the window inputs.
pub fn fit_input_norm(windows: &[Window]) -> InputNorm {
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut n = 0usize;
    for w in windows {
        for p in w.input.chunks_exact(3) {
            for a in 0..3 {
                sum[a] += p[a];
                sq[a] += p[a] * p[a];
            }
            n += 1;
        }
    }
    if n == 0 {
        return InputNorm::default();
    }
    let mean = sum.map(|s| s / n as f64);
    let std = [0, 1, 2].map(|a| {
        let var = (sq[a] / n as f64 - mean[a] * mean[a]).max(0.0);
        if var > 1e-12 {
            var.sqrt()
        } else {
            1.0
        }
    });
    InputNorm { mean, std }
}

/// Averages of one pass over the batches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochStats {
    pub loss: f64,
    pub pose: f64,
    pub deriv: f64,
    pub sym: f64,
    pub samples: usize,
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train: EpochStats,
    pub val_mpjpe_mm: f64,
}

pub const METRICS_HEADER: &str = "epoch,lr,train_loss,pose,deriv,sym,val_mpjpe_mm";

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(
            s,
            "{},{:e},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.epoch, r.lr, r.train.loss, r.train.pose, r.train.deriv, r.train.sym, r.val_mpjpe_mm
        )
        .expect("write to string");
    }
    s
}

pub fn write_metrics_csv(rows: &[EpochMetrics], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Forward, loss, backward and one optimizer step on a chunk-major batch
/// (`chunk` consecutive windows per run).
pub fn train_step(
    model: &mut RefinerModel,
    opt: &mut Amsgrad,
    batch: &[&Window],
    chunk: usize,
    cfg: &TrainConfig,
    topology: &SkeletonTopology,
) -> Result<LossParts> {
    let (t, j) = (cfg.model.frames, cfg.model.joints);
    if batch.is_empty() || batch.len() % chunk != 0 {
        return Err(Error::shape("train_step", format!("batch of {} windows in chunks of {chunk}", batch.len())));
    }
    let x = input_tensor(batch, t, j, cfg.model.use_visibility)?;
    let y = target_tensor(batch, j)?;
    let leaves = model.leaves();
    let out = model.forward_with(&x, &leaves, true)?;
    let runs = batch.len() / chunk;
    let as_runs = |v: &crate::Tensor| v.reshape(&[runs, chunk, 3, j])?.permute(&[0, 2, 3, 1]);
    let seq = if chunk >= 2 { Some((as_runs(&out)?, as_runs(&y)?)) } else { None };
    let parts = total_loss(
        &out,
        &y,
        seq.as_ref().map(|(a, b)| (a, b)),
        &cfg.weights,
        cfg.symmetry,
        topology,
    )?;
    parts.total.backward()?;
    let grads: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.len()]))
        .collect();
    opt.step(model.params_mut(), &grads)?;
    Ok(parts)
}

/// One pass over `batches`. An empty list leaves the model untouched.
pub fn train_epoch(
    model: &mut RefinerModel,
    opt: &mut Amsgrad,
    batches: &[Vec<&Window>],
    cfg: &TrainConfig,
    topology: &SkeletonTopology,
) -> Result<EpochStats> {
    let mut st = EpochStats::default();
    for b in batches {
        let p = train_step(model, opt, b, cfg.chunk, cfg, topology)?;
        let n = b.len() as f64;
        st.loss += p.total.item() * n;
        st.pose += p.pose * n;
        st.deriv += p.deriv * n;
        st.sym += p.sym * n;
        st.samples += b.len();
    }
    if st.samples > 0 {
        let n = st.samples as f64;
        st.loss /= n;
        st.pose /= n;
        st.deriv /= n;
        st.sym /= n;
    }
    Ok(st)
}

/// Shuffled batches of whole chunks; the last batch may be short.
pub fn epoch_batches<'a>(windows: &'a [Window], starts: &[usize], cfg: &TrainConfig, epoch: usize) -> Vec<Vec<&'a Window>> {
    let mut order = starts.to_vec();
    order.shuffle(&mut keyed(cfg.seed, &format!("epoch/{epoch}")));
    let per_batch = (cfg.batch / cfg.chunk).max(1);
    order
        .chunks(per_batch)
        .map(|group| group.iter().flat_map(|&s| &windows[s..s + cfg.chunk]).collect())
        .collect()
}

/// Mean per-joint error (mm) of the refined center frames of `windows`.
pub fn windows_mpjpe(model: &RefinerModel, windows: &[Window]) -> Result<f64> {
    let refined = refine_windows(model, windows)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (w, r) in windows.iter().zip(&refined) {
        for (p, g) in r.chunks_exact(3).zip(w.target.chunks_exact(3)) {
            sum += ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptySelection("no validation joints".into()));
    }
    Ok(sum / n as f64)
}

/// Train `model` on `train`, reporting validation MPJPE on `val` after
/// every epoch. If the model still has the identity input normalization it
/// is fitted to the training windows first.
pub fn train(
    model: &mut RefinerModel,
    train: &[&PoseSequence],
    val: &[&PoseSequence],
    cfg: &TrainConfig,
    topology: &SkeletonTopology,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if model.config() != &cfg.model {
        return Err(Error::Config("model architecture differs from the training config".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptySplit("no training sequences".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit(format!("no sequences of held-out subjects {:?}", cfg.holdout)));
    }
    let root = topology.root();
    let (train_w, lens) = prepare_windows(train, cfg, root)?;
    let (val_w, _) = prepare_windows(val, cfg, root)?;
    let starts = chunk_starts(&lens, cfg.chunk)?;
    if model.input_norm() == &InputNorm::default() {
        model.set_input_norm(fit_input_norm(&train_w));
    }
    let sizes: Vec<usize> = model.params().iter().map(|p| p.data.len()).collect();
    let mut opt = Amsgrad::new(&sizes, cfg.schedule.initial);
    let mut rows = Vec::with_capacity(cfg.epochs);
    log::info!(
        "training on {} windows ({} chunks), validating on {}",
        train_w.len(),
        starts.len(),
        val_w.len()
    );
    for epoch in 0..cfg.epochs {
        opt.lr = cfg.schedule.at(epoch);
        let batches = epoch_batches(&train_w, &starts, cfg, epoch);
        let stats = train_epoch(model, &mut opt, &batches, cfg, topology)?;
        let val_mpjpe_mm = windows_mpjpe(model, &val_w)?;
        log::info!(
            "epoch {epoch}: lr {:.3e} loss {:.3} pose {:.3} deriv {:.3} sym {:.3} val {:.2} mm",
            opt.lr,
            stats.loss,
            stats.pose,
            stats.deriv,
            stats.sym,
            val_mpjpe_mm
        );
        rows.push(EpochMetrics {
            epoch,
            lr: opt.lr,
            train: stats,
            val_mpjpe_mm,
        });
    }
    Ok(rows)
}
