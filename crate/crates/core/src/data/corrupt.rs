//! Stand-in for a lifting backbone's output: i.i.d. Gaussian jitter on every
//! joint plus a slowly drifting bias on joints the camera cannot see.

use rand_distr::{Distribution, StandardNormal};

use super::PoseSequence;
use crate::error::{Error, Result};
use crate::tensor::rng::keyed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionModel {
    /// Per-axis standard deviation of the jitter on every joint, mm.
    pub sigma: f64,
    /// Per-axis stationary standard deviation of the drift on hidden joints, mm.
    pub sigma_occ: f64,
    /// Frame-to-frame correlation of the drift, in `[0, 1)`.
    pub rho: f64,
    pub seed: u64,
}

impl CorruptionModel {
    pub fn new(sigma: f64, sigma_occ: f64, seed: u64) -> Self {
        CorruptionModel {
            sigma,
            sigma_occ,
            rho: 0.9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma_occ >= 0.0) || !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "corruption needs sigma >= 0, sigma_occ >= 0 and rho in [0, 1), got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Corrupted copy of `seq.joints_3d`. The noise stream is keyed by the
/// sequence key, so a sequence corrupts identically regardless of which
/// other sequences are processed alongside it.
///
/// The drift is an AR(1) process per joint and axis,
/// `d_t = rho d_{t-1} + sqrt(1 - rho^2) sigma_occ e_t`, started from its
/// stationary distribution, and is only added where visibility is 0.
pub fn corrupt(seq: &PoseSequence, model: &CorruptionModel) -> Result<Vec<f64>> {
    model.validate()?;
    seq.validate()?;
    let mut out = seq.joints_3d.clone();
    if model.sigma == 0.0 && model.sigma_occ == 0.0 {
        return Ok(out);
    }
    let mut rng = keyed(model.seed, &seq.key());
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let (f, j) = (seq.frames, seq.joints);
    let innov = (1.0 - model.rho * model.rho).sqrt() * model.sigma_occ;
    let mut drift: Vec<f64> = (0..j * 3).map(|_| model.sigma_occ * gauss()).collect();
    for t in 0..f {
        if t > 0 {
            for d in drift.iter_mut() {
                *d = model.rho * *d + innov * gauss();
            }
        }
        for k in 0..j {
            let i = t * j + k;
            let hidden = seq.visibility[i] == 0;
            for a in 0..3 {
                let mut e = model.sigma * gauss();
                if hidden {
                    e += drift[k * 3 + a];
                }
                out[i * 3 + a] += e;
            }
        }
    }
    Ok(out)
}
