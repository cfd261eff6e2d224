//! Embedded-Gaussian non-local block over all `P = T*V` nodes of a sample.
//!
//! `y = f + W_o (softmax(theta(f)^T phi(f) / sqrt(d)) applied to g(f))`, with
//! `theta`, `phi`, `g` linear maps to width `d` and `W_o` mapping back.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handles to the four projection matrices of one block.
#[derive(Debug, Clone)]
pub struct NonLocalParams {
    /// `(d, C)`
    pub theta: Tensor,
    /// `(d, C)`
    pub phi: Tensor,
    /// `(d, C)`
    pub g: Tensor,
    /// `(C, d)`
    pub out: Tensor,
}

impl NonLocalParams {
    fn width(&self) -> usize {
        self.theta.shape()[0]
    }
}

/// Row-stochastic `(N, P, P)` attention for features `(N, C, P)`.
pub fn attention(params: &NonLocalParams, f: &Tensor) -> Result<Tensor> {
    if f.ndim() != 3 || params.theta.shape()[1] != f.shape()[1] {
        return Err(Error::shape("nonlocal", format!("features {:?}", f.shape())));
    }
    let d = params.width() as f64;
    let theta = params.theta.matmul(f)?.permute(&[0, 2, 1])?;
    let phi = params.phi.matmul(f)?;
    theta.matmul(&phi)?.scale(1.0 / d.sqrt())?.softmax(-1)
}

/// Apply the block to `(N, C, P)` features.
pub fn forward(params: &NonLocalParams, f: &Tensor) -> Result<Tensor> {
    let att = attention(params, f)?;
    let g = params.g.matmul(f)?;
    let mixed = g.matmul(&att.permute(&[0, 2, 1])?)?;
    f.add(&params.out.matmul(&mixed)?)
}

/// The block on a single `(P, C)` node-feature matrix.
pub fn nonlocal_block(params: &NonLocalParams, f: &Tensor) -> Result<Tensor> {
    if f.ndim() != 2 {
        return Err(Error::shape("nonlocal_block", format!("expected (P, C), got {:?}", f.shape())));
    }
    let (p, c) = (f.shape()[0], f.shape()[1]);
    let batched = f.t()?.reshape(&[1, c, p])?;
    forward(params, &batched)?.reshape(&[c, p])?.t()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::seeded;

    fn params(c: usize, d: usize, zero_out: bool, seed: u64) -> NonLocalParams {
        let mut rng = seeded(seed);
        NonLocalParams {
            theta: Tensor::rand_uniform(&mut rng, &[d, c], -1.0, 1.0),
            phi: Tensor::rand_uniform(&mut rng, &[d, c], -1.0, 1.0),
            g: Tensor::rand_uniform(&mut rng, &[d, c], -1.0, 1.0),
            out: if zero_out {
                Tensor::zeros(&[c, d])
            } else {
                Tensor::rand_uniform(&mut rng, &[c, d], -1.0, 1.0)
            },
        }
    }

    #[test]
    fn zero_output_projection_is_identity() {
        let p = params(6, 3, true, 1);
        let f = Tensor::rand_uniform(&mut seeded(2), &[9, 6], -2.0, 2.0);
        let y = nonlocal_block(&p, &f).unwrap();
        assert_eq!(y.data(), f.data());
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let p = params(6, 3, false, 3);
        let f = Tensor::rand_uniform(&mut seeded(4), &[2, 6, 11], -2.0, 2.0);
        let att = attention(&p, &f).unwrap();
        for row in att.data().chunks(11) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_closed_form() {
        // P = 1: attention is [[1]], so y = f + Wo g f
        let p = params(4, 2, false, 5);
        let f = Tensor::rand_uniform(&mut seeded(6), &[1, 4], -1.0, 1.0);
        let y = nonlocal_block(&p, &f).unwrap();
        let gf: Vec<f64> = (0..2)
            .map(|r| (0..4).map(|c| p.g.data()[r * 4 + c] * f.data()[c]).sum())
            .collect();
        for c in 0..4 {
            let expect = f.data()[c] + (0..2).map(|r| p.out.data()[c * 2 + r] * gf[r]).sum::<f64>();
            assert!((y.data()[c] - expect).abs() < 1e-12);
        }
    }
}
