//! Layer primitives with hand-written backward rules: batch normalization
//! over the channel axis and same-padded convolution along time.

use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatView};
use super::Tensor;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

impl Tensor {
    /// Batch normalization over axis 1 of an `(N, C, ...)` tensor.
    ///
    /// In training mode the batch statistics are used and folded into
    /// `stats` with momentum [`BN_MOMENTUM`] (unbiased variance). In
    /// inference mode the frozen `stats` are used and the op is affine.
    pub fn batch_norm(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        stats: &mut BatchNormStats,
        training: bool,
    ) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("batch_norm", "input rank < 2"));
        }
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.len() != c || stats.var.len() != c {
            return Err(Error::shape("batch_norm", format!("{c} channels vs affine/stats sizes")));
        }
        let count = n * inner;
        if count == 0 {
            return Err(Error::shape("batch_norm", "empty batch"));
        }
        let x = self.data();
        let at = move |b: usize, ch: usize, i: usize| (b * c + ch) * inner + i;

        let (mean, var) = if training {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    for i in 0..inner {
                        s += x[at(b, ch, i)];
                    }
                }
                let mu = s / count as f64;
                let mut q = 0.0;
                for b in 0..n {
                    for i in 0..inner {
                        let d = x[at(b, ch, i)] - mu;
                        q += d * d;
                    }
                }
                mean[ch] = mu;
                var[ch] = q / count as f64;
            }
            let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
            for ch in 0..c {
                stats.mean[ch] = (1.0 - BN_MOMENTUM) * stats.mean[ch] + BN_MOMENTUM * mean[ch];
                stats.var[ch] = (1.0 - BN_MOMENTUM) * stats.var[ch] + BN_MOMENTUM * var[ch] * unbias;
            }
            (mean, var)
        } else {
            (stats.mean.clone(), stats.var.clone())
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        let (g, bt) = (gamma.data(), beta.data());
        for b in 0..n {
            for ch in 0..c {
                for i in 0..inner {
                    let k = at(b, ch, i);
                    xhat[k] = (x[k] - mean[ch]) * inv_std[ch];
                    out[k] = g[ch] * xhat[k] + bt[ch];
                }
            }
        }

        Tensor::from_op("batch_norm", shape, out, &[self, gamma, beta], move |ctx| {
            let gout = ctx.grad;
            let gam = ctx.inputs[1].data();
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            let mut sum_dxhat = vec![0.0; c];
            let mut sum_dxhat_xhat = vec![0.0; c];
            for b in 0..n {
                for ch in 0..c {
                    for i in 0..inner {
                        let k = at(b, ch, i);
                        dgamma[ch] += gout[k] * xhat[k];
                        dbeta[ch] += gout[k];
                        let dxh = gout[k] * gam[ch];
                        sum_dxhat[ch] += dxh;
                        sum_dxhat_xhat[ch] += dxh * xhat[k];
                    }
                }
            }
            let dx = ctx.inputs[0].is_tracked().then(|| {
                let mut dx = vec![0.0; gout.len()];
                let m = count as f64;
                for b in 0..n {
                    for ch in 0..c {
                        for i in 0..inner {
                            let k = at(b, ch, i);
                            let dxh = gout[k] * gam[ch];
                            dx[k] = if training {
                                inv_std[ch] / m * (m * dxh - sum_dxhat[ch] - xhat[k] * sum_dxhat_xhat[ch])
                            } else {
                                dxh * inv_std[ch]
                            };
                        }
                    }
                }
                dx
            });
            vec![dx, Some(dgamma), Some(dbeta)]
        })
    }

    /// Convolution along axis 2 of an `(N, C, T, V)` tensor with kernel
    /// `(C', C, k)`, odd `k`, zero "same" padding. Each of the `V` columns is
    /// convolved independently.
    pub fn temporal_conv(&self, kernel: &Tensor) -> Result<Tensor> {
        let xs = self.shape();
        let ks = kernel.shape();
        if xs.len() != 4 || ks.len() != 3 || ks[1] != xs[1] {
            return Err(Error::shape("temporal_conv", format!("input {xs:?}, kernel {ks:?}")));
        }
        let (n, c, t, v) = (xs[0], xs[1], xs[2], xs[3]);
        let (co, k) = (ks[0], ks[2]);
        if k % 2 == 0 {
            return Err(Error::shape("temporal_conv", format!("kernel size {k} must be odd")));
        }
        let pad = (k - 1) / 2;
        let tv = t * v;
        // (tap, first output frame, frame count, input frame shift)
        let taps: Vec<(usize, usize, usize, isize)> = (0..k)
            .filter_map(|dt| {
                let s = dt as isize - pad as isize;
                let t0 = (-s).max(0) as usize;
                let t1 = (t as isize - s).min(t as isize).max(0) as usize;
                (t1 > t0).then_some((dt, t0, t1 - t0, s))
            })
            .collect();

        let (x, w) = (self.data(), kernel.data());
        let mut out = vec![0.0; n * co * tv];
        for b in 0..n {
            for &(dt, t0, len, s) in &taps {
                let wv = MatView {
                    data: w,
                    offset: dt,
                    rows: co,
                    cols: c,
                    rs: c * k,
                    cs: k,
                };
                let xv = MatView {
                    data: x,
                    offset: b * c * tv + (t0 as isize + s) as usize * v,
                    rows: c,
                    cols: len * v,
                    rs: tv,
                    cs: 1,
                };
                gemm(wv, xv, &mut out, b * co * tv + t0 * v, tv, true);
            }
        }

        Tensor::from_op("temporal_conv", vec![n, co, t, v], out, &[self, kernel], move |ctx| {
            let (x, w) = (ctx.inputs[0].data(), ctx.inputs[1].data());
            let g = ctx.grad;
            let gx = ctx.inputs[0].is_tracked().then(|| {
                let mut gx = vec![0.0; x.len()];
                for b in 0..n {
                    for &(dt, t0, len, s) in &taps {
                        let wt = MatView {
                            data: w,
                            offset: dt,
                            rows: co,
                            cols: c,
                            rs: c * k,
                            cs: k,
                        }
                        .t();
                        let gv = MatView {
                            data: g,
                            offset: b * co * tv + t0 * v,
                            rows: co,
                            cols: len * v,
                            rs: tv,
                            cs: 1,
                        };
                        gemm(wt, gv, &mut gx, b * c * tv + (t0 as isize + s) as usize * v, tv, true);
                    }
                }
                gx
            });
            let gw = ctx.inputs[1].is_tracked().then(|| {
                let mut gw = vec![0.0; w.len()];
                let mut tmp = vec![0.0; co * c];
                for &(dt, t0, len, s) in &taps {
                    tmp.fill(0.0);
                    for b in 0..n {
                        let gv = MatView {
                            data: g,
                            offset: b * co * tv + t0 * v,
                            rows: co,
                            cols: len * v,
                            rs: tv,
                            cs: 1,
                        };
                        let xv = MatView {
                            data: x,
                            offset: b * c * tv + (t0 as isize + s) as usize * v,
                            rows: c,
                            cols: len * v,
                            rs: tv,
                            cs: 1,
                        };
                        gemm(gv, xv.t(), &mut tmp, 0, c, true);
                    }
                    for o in 0..co {
                        for i in 0..c {
                            gw[(o * c + i) * k + dt] += tmp[o * c + i];
                        }
                    }
                }
                gw
            });
            vec![gx, gw]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let x = Tensor::new((0..2 * 3 * 4 * 5).map(|i| i as f64 * 0.5 - 3.0).collect(), &[2, 3, 4, 5]).unwrap();
        let mut w = vec![0.0; 3 * 3];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let y = x.temporal_conv(&Tensor::new(w, &[3, 3, 1]).unwrap()).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn shift_taps_zero_pad_the_borders() {
        // one channel, T=3, V=1, kernel [1, 0, 0] reads the previous frame
        let x = Tensor::new(vec![1.0, 2.0, 3.0], &[1, 1, 3, 1]).unwrap();
        let y = x
            .temporal_conv(&Tensor::new(vec![1.0, 0.0, 0.0], &[1, 1, 3]).unwrap())
            .unwrap();
        assert_eq!(y.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn even_kernel_rejected() {
        let x = Tensor::zeros(&[1, 1, 3, 1]);
        assert!(x.temporal_conv(&Tensor::zeros(&[1, 1, 2])).is_err());
    }

    #[test]
    fn inference_batch_norm_is_affine() {
        let x = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let mut stats = BatchNormStats {
            mean: vec![1.0, -1.0],
            var: vec![4.0 - BN_EPS, 1.0 - BN_EPS],
        };
        let before = stats.clone();
        let y = x
            .batch_norm(&Tensor::from_slice(&[2.0, 1.0]), &Tensor::from_slice(&[0.5, 0.0]), &mut stats, false)
            .unwrap();
        assert_eq!(stats, before);
        let expect = [2.0 * 0.0 / 2.0 + 0.5, 3.0, 2.0 * 2.0 / 2.0 + 0.5, 5.0];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn training_batch_norm_standardizes() {
        let x = Tensor::new(vec![1.0, 10.0, 3.0, 20.0, 5.0, 30.0], &[3, 2]).unwrap();
        let mut stats = BatchNormStats::new(2);
        let y = x
            .batch_norm(&Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), &mut stats, true)
            .unwrap();
        for ch in 0..2 {
            let col: Vec<f64> = (0..3).map(|b| y.data()[b * 2 + ch]).collect();
            let mean: f64 = col.iter().sum::<f64>() / 3.0;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
        assert!((stats.mean[0] - 0.3).abs() < 1e-12);
    }
}
