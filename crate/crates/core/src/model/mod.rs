//! The refiner network.
//!
//! Pipeline for an input window `(N, C, T, V, M)` of root-centered
//! millimeter coordinates (optionally with a visibility channel):
//!
//! 1. standardize the xyz channels with the stored per-channel statistics;
//! 2. `layers` ST-GCN blocks, each `class_conv -> temporal_conv ->
//!    batch_norm -> + residual -> ReLU`;
//! 3. a non-local block over the `T*V` nodes of every sample;
//! 4. select the center frame and map every joint's features to 3
//!    coordinates with an affine head whose weight product is divided by
//!    `hidden`, rescaled to millimeters;
//! 5. with `residual_output`, add the input center frame.
//!
//! The `M` axis is folded into the batch: instances share weights and never
//! exchange information.

mod checkpoint;
mod config;
pub mod nonlocal;

use crate::error::{Error, Result};
use crate::graph::{StGraph, NUM_CLASSES};
use crate::skeleton::SkeletonTopology;
use crate::tensor::rng::{substream, uniform_vec};
use crate::tensor::{BatchNormStats, Tensor};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::RefinerConfig;
use nonlocal::NonLocalParams;

/// A named trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    fn new(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Self {
        Param {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        }
    }
}

impl AsMut<[f64]> for Param {
    fn as_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-channel standardization applied to the xyz input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNorm {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for InputNorm {
    fn default() -> Self {
        InputNorm {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefinerModel {
    config: RefinerConfig,
    seed: u64,
    graph: StGraph,
    params: Vec<Param>,
    bn: Vec<BatchNormStats>,
    norm: InputNorm,
}

/// Indices into the parameter list for one ST-GCN layer.
struct LayerSlots {
    kernels: usize,
    temporal: usize,
    gamma: usize,
    beta: usize,
    residual: Option<usize>,
}

struct Slots {
    layers: Vec<LayerSlots>,
    nonlocal: Option<[usize; 4]>,
    head_w: usize,
    head_b: usize,
}

impl RefinerModel {
    /// Fresh model. Weights are uniform in `±1/sqrt(fan_in)`; batch-norm
    /// scales start at 1, shifts at 0. The non-local output projection is
    /// zero, and so is the head when `residual_output` is on, making the
    /// untrained model the identity on the center frame.
    pub fn init(config: RefinerConfig, topology: &SkeletonTopology, seed: u64) -> Result<Self> {
        config.validate()?;
        if topology.joint_count() != config.joints {
            return Err(Error::SkeletonMismatch(format!(
                "config has {} joints, topology {}",
                config.joints,
                topology.joint_count()
            )));
        }
        let graph = StGraph::build(topology, config.frames)?;
        let mut rng = substream(seed, 0x5eed);
        let mut uni = |fan_in: usize, n: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            uniform_vec(&mut rng, n, -b, b)
        };
        let h = config.hidden;
        let k = config.temporal_kernel;
        let mut params = Vec::new();
        let mut bn = Vec::new();
        let mut cin = config.in_channels();
        for l in 0..config.layers {
            params.push(Param::new(
                format!("layer{l}.graph.kernels"),
                &[NUM_CLASSES, cin, h],
                uni(NUM_CLASSES * cin, NUM_CLASSES * cin * h),
            ));
            params.push(Param::new(format!("layer{l}.temporal.kernel"), &[h, h, k], uni(h * k, h * h * k)));
            params.push(Param::new(format!("layer{l}.bn.gamma"), &[h], vec![1.0; h]));
            params.push(Param::new(format!("layer{l}.bn.beta"), &[h], vec![0.0; h]));
            if cin != h {
                params.push(Param::new(format!("layer{l}.residual.proj"), &[h, cin], uni(cin, h * cin)));
            }
            bn.push(BatchNormStats::new(h));
            cin = h;
        }
        if config.use_nonlocal {
            let d = config.nonlocal_width();
            params.push(Param::new("nonlocal.theta", &[d, h], uni(h, d * h)));
            params.push(Param::new("nonlocal.phi", &[d, h], uni(h, d * h)));
            params.push(Param::new("nonlocal.g", &[d, h], uni(h, d * h)));
            params.push(Param::new("nonlocal.out", &[h, d], vec![0.0; h * d]));
        }
        let head = if config.residual_output {
            vec![0.0; 3 * h]
        } else {
            uni(h, 3 * h)
        };
        params.push(Param::new("head.weight", &[3, h], head));
        params.push(Param::new("head.bias", &[3], vec![0.0; 3]));
        Ok(RefinerModel {
            config,
            seed,
            graph,
            params,
            bn,
            norm: InputNorm::default(),
        })
    }

    pub fn config(&self) -> &RefinerConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn graph(&self) -> &StGraph {
        &self.graph
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn batch_norm_stats(&self) -> &[BatchNormStats] {
        &self.bn
    }

    pub fn batch_norm_stats_mut(&mut self) -> &mut [BatchNormStats] {
        &mut self.bn
    }

    pub fn input_norm(&self) -> &InputNorm {
        &self.norm
    }

    pub fn set_input_norm(&mut self, norm: InputNorm) {
        self.norm = norm;
    }

    fn slots(&self) -> Slots {
        let idx = |name: &str| {
            self.params
                .iter()
                .position(|p| p.name == name)
                .unwrap_or_else(|| panic!("missing parameter {name}"))
        };
        let find = |name: &str| self.params.iter().position(|p| p.name == name);
        let layers = (0..self.config.layers)
            .map(|l| LayerSlots {
                kernels: idx(&format!("layer{l}.graph.kernels")),
                temporal: idx(&format!("layer{l}.temporal.kernel")),
                gamma: idx(&format!("layer{l}.bn.gamma")),
                beta: idx(&format!("layer{l}.bn.beta")),
                residual: find(&format!("layer{l}.residual.proj")),
            })
            .collect();
        let nonlocal = self.config.use_nonlocal.then(|| {
            [
                idx("nonlocal.theta"),
                idx("nonlocal.phi"),
                idx("nonlocal.g"),
                idx("nonlocal.out"),
            ]
        });
        Slots {
            layers,
            nonlocal,
            head_w: idx("head.weight"),
            head_b: idx("head.bias"),
        }
    }

    /// Parameters as untracked tensors.
    pub fn constants(&self) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|p| Tensor::new(p.data.clone(), &p.shape).expect("param shape"))
            .collect()
    }

    /// Parameters as fresh tracked leaves, in [`RefinerModel::params`] order.
    pub fn leaves(&self) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|p| Tensor::param(p.data.clone(), &p.shape).expect("param shape"))
            .collect()
    }

    /// Inference-mode forward: `(N, C, T, V, M) -> (N, 3, V, M)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut bn = self.bn.clone();
        let (offset, base) = self.run(x, &self.constants(), &mut bn, false)?;
        offset.add(&base)
    }

    /// Inference-mode offsets only, so callers can add them to coordinates
    /// they hold in another frame of reference. With `residual_output` off
    /// the offsets are relative to the stored input mean instead of the
    /// input center frame.
    pub fn forward_offsets(&self, x: &Tensor) -> Result<Tensor> {
        let mut bn = self.bn.clone();
        Ok(self.run(x, &self.constants(), &mut bn, false)?.0)
    }

    /// Forward with caller-supplied parameter tensors (normally
    /// [`RefinerModel::leaves`]). `training` selects batch statistics and
    /// updates the running statistics.
    pub fn forward_with(&mut self, x: &Tensor, params: &[Tensor], training: bool) -> Result<Tensor> {
        let mut bn = std::mem::take(&mut self.bn);
        let res = self.run(x, params, &mut bn, training);
        self.bn = bn;
        let (offset, base) = res?;
        offset.add(&base)
    }

    /// Returns (offset, base), both `(N, 3, V, M)`, with output = offset + base.
    fn run(
        &self,
        x: &Tensor,
        params: &[Tensor],
        bn: &mut [BatchNormStats],
        training: bool,
    ) -> Result<(Tensor, Tensor)> {
        let cfg = &self.config;
        let xs = x.shape();
        if xs.len() != 5 || xs[1] != cfg.in_channels() || xs[2] != cfg.frames || xs[3] != cfg.joints || xs[4] == 0 {
            return Err(Error::shape(
                "refiner",
                format!(
                    "input {:?}, expected (N, {}, {}, {}, M>=1)",
                    xs,
                    cfg.in_channels(),
                    cfg.frames,
                    cfg.joints
                ),
            ));
        }
        if params.len() != self.params.len() {
            return Err(Error::shape("refiner", "parameter list length"));
        }
        let (n, c, t, v, m) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
        let nm = n * m;
        let p = t * v;
        let slots = self.slots();

        let x = x.permute(&[0, 4, 1, 2, 3])?.reshape(&[nm, c, t, v])?;
        let xyz = x.narrow(1, 0, 3)?;
        let center = xyz.narrow(2, cfg.center(), 1)?.reshape(&[nm, 3, v])?;

        let mean = Tensor::new(self.norm.mean.to_vec(), &[3, 1, 1])?;
        let inv_std = Tensor::new(self.norm.std.iter().map(|s| 1.0 / s).collect(), &[3, 1, 1])?;
        let mut h = xyz.sub(&mean)?.mul(&inv_std)?;
        if cfg.use_visibility {
            h = Tensor::concat(&[h, x.narrow(1, 3, 1)?], 1)?;
        }
        let mut h = h.reshape(&[nm, c, p])?;

        for (l, s) in slots.layers.iter().enumerate() {
            let hid = cfg.hidden;
            let z = self.graph.class_conv_batched(&h, &params[s.kernels])?;
            let z = z.reshape(&[nm, hid, t, v])?.temporal_conv(&params[s.temporal])?;
            let z = z.batch_norm(&params[s.gamma], &params[s.beta], &mut bn[l], training)?;
            let skip = match s.residual {
                Some(r) => params[r].matmul(&h)?,
                None => h.clone(),
            };
            h = z.reshape(&[nm, hid, p])?.add(&skip)?.relu()?;
        }

        if let Some([th, ph, g, o]) = slots.nonlocal {
            let nl = NonLocalParams {
                theta: params[th].clone(),
                phi: params[ph].clone(),
                g: params[g].clone(),
                out: params[o].clone(),
            };
            h = nonlocal::forward(&nl, &h)?;
        }

        let hc = h
            .reshape(&[nm, cfg.hidden, t, v])?
            .narrow(2, cfg.center(), 1)?
            .reshape(&[nm, cfg.hidden, v])?;
        let bias = params[slots.head_b].reshape(&[3, 1])?;
        let std = Tensor::new(self.norm.std.to_vec(), &[3, 1])?;
        let offset = params[slots.head_w].matmul(&hc)?.scale(1.0 / cfg.hidden as f64)?.add(&bias)?.mul(&std)?;
        let base = if cfg.residual_output {
            center
        } else {
            Tensor::new(self.norm.mean.to_vec(), &[3, 1])?.add(&Tensor::zeros(&[nm, 3, v]))?
        };
        let unfold = |t: Tensor| -> Result<Tensor> { t.reshape(&[n, m, 3, v])?.permute(&[0, 2, 3, 1]) };
        Ok((unfold(offset)?, unfold(base)?))
    }

    /// Replace parameter values by name. Shapes must match.
    pub fn load_params(&mut self, values: Vec<Param>) -> Result<()> {
        for v in values {
            let slot = self
                .params
                .iter_mut()
                .find(|p| p.name == v.name)
                .ok_or_else(|| Error::Config(format!("unknown parameter {}", v.name)))?;
            if slot.shape != v.shape {
                return Err(Error::shape("load_params", format!("{}: {:?} vs {:?}", v.name, slot.shape, v.shape)));
            }
            slot.data = v.data;
        }
        Ok(())
    }
}
