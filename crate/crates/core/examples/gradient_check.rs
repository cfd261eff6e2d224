//! Reverse-mode gradients of the tensor core against central differences.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use stgcn_refine::tensor::rng::seeded;
use stgcn_refine::{Result, Tensor};

/// Norm-wise relative error between analytic and numeric gradients of
/// `f` with respect to `x`.
fn check(name: &str, x: &Tensor, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<()> {
    let leaf = x.as_param();
    f(&leaf)?.backward()?;
    let analytic = leaf.grad().expect("leaf gradient");
    let eps = 1e-6;
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let bumped = |d: f64| -> Result<f64> {
            let mut v = x.data().to_vec();
            v[i] += d;
            Ok(f(&Tensor::new(v, x.shape())?)?.item())
        };
        numeric.push((bumped(eps)? - bumped(-eps)?) / (2.0 * eps));
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
    println!("{name:<28} relative error {:.2e}", diff / scale.max(1e-300));
    Ok(())
}

fn main() -> Result<()> {
    let mut rng = seeded(3);
    let a = Tensor::rand_uniform(&mut rng, &[4, 5], -1.0, 1.0);
    let b = Tensor::rand_uniform(&mut rng, &[5, 3], -1.0, 1.0);
    let seq = Tensor::rand_uniform(&mut rng, &[2, 3, 6, 2], -1.0, 1.0);
    let kernel = Tensor::rand_uniform(&mut rng, &[4, 3, 3], -1.0, 1.0);
    let gamma = Tensor::full(&[3], 1.2);
    let beta = Tensor::full(&[3], -0.1);

    check("matmul", &a, |x| x.matmul(&b)?.square()?.sum_all())?;
    check("softmax", &a, |x| x.softmax(1)?.mul(&a)?.sum_all())?;
    check("norm over axis 1", &seq, |x| x.norm(1)?.mean_all())?;
    check("temporal_conv", &seq, |x| x.temporal_conv(&kernel)?.square()?.sum_all())?;
    check("batch_norm (training)", &seq, |x| {
        let mut stats = stgcn_refine::tensor::BatchNormStats::new(3);
        x.batch_norm(&gamma, &beta, &mut stats, true)?.exp()?.mean_all()
    })?;
    Ok(())
}
