//! Training losses. Poses are laid out `(N, 3, J, ...)`: coordinates on
//! axis 1, joints on axis 2, any trailing axes (instances, time) kept.

use crate::error::{Error, Result};
use crate::skeleton::SkeletonTopology;
use crate::tensor::Tensor;

/// Weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pose: f64,
    pub deriv: f64,
    pub sym: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pose: 1.0,
            deriv: 0.5,
            sym: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.pose, self.deriv, self.sym];
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().all(|&x| x == 0.0) {
            return Err(Error::Config(format!("loss weights must be non-negative with one positive, got {self:?}")));
        }
        Ok(())
    }
}

/// What the symmetry term compares a predicted bone length against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymmetryReferent {
    /// Its mirrored partner in the same prediction.
    #[default]
    MirrorBones,
    /// The left/right length difference of the ground truth.
    GroundTruth,
}

fn check_pair(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.ndim() < 3 || a.shape()[1] != 3 {
        return Err(Error::shape(op, format!("expected (N, 3, J, ...), got {:?}", a.shape())));
    }
    Ok(())
}

/// Mean per-joint Euclidean error.
pub fn pose_loss(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_pair("pose_loss", pred, gt)?;
    pred.sub(gt)?.norm(1)?.mean_all()
}

/// Mean Euclidean error of first differences along the last axis (time).
pub fn derivative_loss(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_pair("derivative_loss", pred, gt)?;
    let nd = pred.ndim();
    let t = pred.shape()[nd - 1];
    if nd < 4 || t < 2 {
        return Err(Error::shape("derivative_loss", format!("need (N, 3, J, T) with T >= 2, got {:?}", pred.shape())));
    }
    let ax = (nd - 1) as isize;
    // differencing the error is the same as differencing both sides
    let e = pred.sub(gt)?;
    let de = e.narrow(ax, 1, t - 1)?.sub(&e.narrow(ax, 0, t - 1)?)?;
    de.norm(1)?.mean_all()
}

/// Lengths of the bones listed in `bones`, shape `(N, B, ...)`.
fn bone_lengths(pose: &Tensor, bones: &[(usize, usize)]) -> Result<Tensor> {
    let parents: Vec<usize> = bones.iter().map(|b| b.0).collect();
    let children: Vec<usize> = bones.iter().map(|b| b.1).collect();
    pose.index_select(2, &children)?.sub(&pose.index_select(2, &parents)?)?.norm(1)
}

/// Mean absolute left/right bone-length difference over the symmetric bone
/// pairs of `topology`.
pub fn symmetry_loss(pred: &Tensor, topology: &SkeletonTopology) -> Result<Tensor> {
    symmetry_loss_with(pred, None, topology)
}

/// Symmetry loss with an optional ground-truth referent: with `gt` the
/// predicted difference `|b_L| - |b_R|` is compared against the ground
/// truth's instead of against zero.
pub fn symmetry_loss_with(pred: &Tensor, gt: Option<&Tensor>, topology: &SkeletonTopology) -> Result<Tensor> {
    if pred.ndim() < 3 || pred.shape()[1] != 3 || pred.shape()[2] != topology.joint_count() {
        return Err(Error::shape("symmetry_loss", format!("pose {:?} for {} joints", pred.shape(), topology.joint_count())));
    }
    let pairs = topology.symmetric_bone_pairs();
    if pairs.is_empty() {
        return Err(Error::Config("topology has no symmetric bone pairs".into()));
    }
    let left: Vec<_> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<_> = pairs.iter().map(|p| p.1).collect();
    let mut diff = bone_lengths(pred, &left)?.sub(&bone_lengths(pred, &right)?)?;
    if let Some(gt) = gt {
        check_pair("symmetry_loss", pred, gt)?;
        let gdiff = bone_lengths(gt, &left)?.sub(&bone_lengths(gt, &right)?)?;
        diff = diff.sub(&gdiff)?;
    }
    diff.abs()?.mean_all()
}

/// Scalar values of each term next to the differentiable total.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub total: Tensor,
    pub pose: f64,
    pub deriv: f64,
    pub sym: f64,
}

/// `w_pose * pose + w_deriv * deriv + w_sym * sym`.
///
/// `pred`/`gt` are `(N, 3, J, ...)` refined center frames. `seq` holds the
/// same predictions regrouped as `(S, 3, J, L)` runs of consecutive center
/// frames for the derivative term; with `None` (or a zero weight) that term
/// is skipped and reported as 0.
pub fn total_loss(
    pred: &Tensor,
    gt: &Tensor,
    seq: Option<(&Tensor, &Tensor)>,
    weights: &LossWeights,
    referent: SymmetryReferent,
    topology: &SkeletonTopology,
) -> Result<LossParts> {
    weights.validate()?;
    let pose = pose_loss(pred, gt)?;
    let mut total = pose.scale(weights.pose)?;
    let mut parts = LossParts {
        total: Tensor::scalar(0.0),
        pose: pose.item(),
        deriv: 0.0,
        sym: 0.0,
    };
    if weights.deriv > 0.0 {
        if let Some((ps, gs)) = seq {
            let d = derivative_loss(ps, gs)?;
            parts.deriv = d.item();
            total = total.add(&d.scale(weights.deriv)?)?;
        }
    }
    if weights.sym > 0.0 {
        let s = match referent {
            SymmetryReferent::MirrorBones => symmetry_loss(pred, topology)?,
            SymmetryReferent::GroundTruth => symmetry_loss_with(pred, Some(gt), topology)?,
        };
        parts.sym = s.item();
        total = total.add(&s.scale(weights.sym)?)?;
    }
    if !total.item().is_finite() {
        return Err(Error::NonFinite { op: "total_loss" });
    }
    parts.total = total;
    Ok(parts)
}
