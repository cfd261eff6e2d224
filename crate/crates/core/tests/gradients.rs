mod common;

use common::{grad_check, op_gradient_audit, probe, tiny_refiner_gradient_errors};
use stgcn_refine::tensor::rng::seeded;
use stgcn_refine::Tensor;

#[test]
fn every_op_matches_finite_differences() {
    let audit = op_gradient_audit();
    assert!(audit.len() >= 40);
    let bad: Vec<_> = audit.iter().filter(|(_, e)| !(*e < 1e-5)).collect();
    assert!(bad.is_empty(), "ops over 1e-5: {bad:?}");
}

#[test]
fn tiny_refiner_matches_finite_differences() {
    let errs = tiny_refiner_gradient_errors();
    let bad: Vec<_> = errs.iter().filter(|(_, e)| !(*e < 1e-4)).collect();
    assert!(bad.is_empty(), "parameters over 1e-4: {bad:?}");
}

#[test]
fn matmul_4x5_5x3() {
    let mut rng = seeded(45);
    let a = Tensor::rand_uniform(&mut rng, &[4, 5], -1.0, 1.0);
    let b = Tensor::rand_uniform(&mut rng, &[5, 3], -1.0, 1.0);
    for e in grad_check(&[a, b], |x| probe(&x[0].matmul(&x[1]).unwrap())) {
        assert!(e < 1e-5, "{e}");
    }
}

#[test]
fn sum_and_half_square_gradients() {
    let x = Tensor::param(vec![1.5, -2.0, 0.25], &[3]).unwrap();
    x.sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);

    let x = Tensor::param(vec![1.5, -2.0, 0.25], &[3]).unwrap();
    x.mul(&x).unwrap().sum_all().unwrap().scale(0.5).unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.5, -2.0, 0.25]);
}

#[test]
fn repeated_backward_accumulates() {
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    let loss = x.square().unwrap().sum_all().unwrap();
    loss.backward().unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![4.0, 8.0]);
    x.zero_grad();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
}

#[test]
fn shared_leaf_sums_over_uses() {
    let x = Tensor::param(vec![3.0], &[1]).unwrap();
    // x*x + 2x + x  => 2x + 3
    let y = x.mul(&x).unwrap().add(&x.scale(2.0).unwrap()).unwrap().add(&x).unwrap();
    y.sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![9.0]);
}

#[test]
fn backward_of_sum_is_sum_of_backwards() {
    let mut rng = seeded(8);
    let v = Tensor::rand_uniform(&mut rng, &[3, 4], -1.0, 1.0);
    let f1 = |x: &Tensor| x.exp().unwrap().sum_all().unwrap();
    let f2 = |x: &Tensor| x.softmax(-1).unwrap().square().unwrap().sum_all().unwrap();

    let a = Tensor::param(v.data().to_vec(), v.shape()).unwrap();
    f1(&a).add(&f2(&a)).unwrap().backward().unwrap();

    let b = Tensor::param(v.data().to_vec(), v.shape()).unwrap();
    f1(&b).backward().unwrap();
    f2(&b).backward().unwrap();
    let (ga, gb) = (a.grad().unwrap(), b.grad().unwrap());
    for (x, y) in ga.iter().zip(&gb) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn backward_rejects_non_scalar() {
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    assert!(x.square().unwrap().backward().is_err());
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let x = Tensor::param(vec![-1.0, 0.0, 2.0], &[3]).unwrap();
    let y = x.relu().unwrap();
    assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    y.sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 1.0]);
}
