//! Training configuration as `key = value` text. Keys prefixed `model.` set
//! the refiner architecture; everything else is listed in
//! [`TrainConfig::to_pairs`].

use std::path::Path;

use super::losses::{LossWeights, SymmetryReferent};
use super::optim::LrSchedule;
use crate::data::CorruptionModel;
use crate::error::{Error, Result};
use crate::model::RefinerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: RefinerConfig,
    pub epochs: usize,
    pub batch: usize,
    /// Consecutive windows per shuffled chunk; the derivative term needs at
    /// least 2.
    pub chunk: usize,
    pub schedule: LrSchedule,
    pub weights: LossWeights,
    pub symmetry: SymmetryReferent,
    pub seed: u64,
    pub corruption: CorruptionModel,
    /// Subjects kept out of training and used for validation.
    pub holdout: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: RefinerConfig::default(),
            epochs: 40,
            batch: 256,
            chunk: 4,
            schedule: LrSchedule::default(),
            weights: LossWeights::default(),
            symmetry: SymmetryReferent::MirrorBones,
            seed: 0,
            corruption: CorruptionModel::new(20.0, 60.0, 1),
            holdout: vec!["SS5".into()],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        self.corruption.validate()?;
        if self.batch == 0 || self.chunk == 0 {
            return Err(Error::Config("batch and chunk must be positive".into()));
        }
        if !(self.schedule.initial > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .model
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (format!("model.{k}"), v))
            .collect();
        let referent = match self.symmetry {
            SymmetryReferent::MirrorBones => "mirror",
            SymmetryReferent::GroundTruth => "ground_truth",
        };
        let c = &self.corruption;
        out.extend(
            [
                ("epochs", self.epochs.to_string()),
                ("batch", self.batch.to_string()),
                ("chunk", self.chunk.to_string()),
                ("lr", self.schedule.initial.to_string()),
                ("lr_decay", self.schedule.decay.to_string()),
                ("lr_step_every", self.schedule.step_every.to_string()),
                ("lr_step_factor", self.schedule.step_factor.to_string()),
                ("w_pose", self.weights.pose.to_string()),
                ("w_deriv", self.weights.deriv.to_string()),
                ("w_sym", self.weights.sym.to_string()),
                ("symmetry", referent.to_string()),
                ("seed", self.seed.to_string()),
                ("sigma", c.sigma.to_string()),
                ("sigma_occ", c.sigma_occ.to_string()),
                ("rho", c.rho.to_string()),
                ("corruption_seed", c.seed.to_string()),
                ("holdout", self.holdout.join(",")),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v)),
        );
        out
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("model.") {
            if self.model.set(k, value)? {
                return Ok(());
            }
            return Err(Error::Config(format!("unknown model key {k:?}")));
        }
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "chunk" => self.chunk = num(key, value)?,
            "lr" => self.schedule.initial = num(key, value)?,
            "lr_decay" => self.schedule.decay = num(key, value)?,
            "lr_step_every" => self.schedule.step_every = num(key, value)?,
            "lr_step_factor" => self.schedule.step_factor = num(key, value)?,
            "w_pose" => self.weights.pose = num(key, value)?,
            "w_deriv" => self.weights.deriv = num(key, value)?,
            "w_sym" => self.weights.sym = num(key, value)?,
            "symmetry" => {
                self.symmetry = match value {
                    "mirror" => SymmetryReferent::MirrorBones,
                    "ground_truth" => SymmetryReferent::GroundTruth,
                    _ => return Err(Error::Config(format!("symmetry: expected mirror or ground_truth, got {value:?}"))),
                }
            }
            "seed" => self.seed = num(key, value)?,
            "sigma" => self.corruption.sigma = num(key, value)?,
            "sigma_occ" => self.corruption.sigma_occ = num(key, value)?,
            "rho" => self.corruption.rho = num(key, value)?,
            "corruption_seed" => self.corruption.seed = num(key, value)?,
            "holdout" => {
                self.holdout = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            _ => return Err(Error::Config(format!("unknown training key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(origin, format!("line {}: expected key = value", ln + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::format(origin, format!("line {}: {e}", ln + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text, origin)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
