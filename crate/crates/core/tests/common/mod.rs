//! Shared oracles for the integration tests. Everything here is written
//! against plain slices so it stays independent of the library's tensor
//! kernels.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use stgcn_refine::data::{generate_scene, PoseSequence, SceneSpec};
use stgcn_refine::graph::StGraph;
use stgcn_refine::model::{InputNorm, RefinerConfig, RefinerModel};
use stgcn_refine::model::nonlocal::{self, NonLocalParams};
use stgcn_refine::skeleton::{default_topology, SkeletonTopology};
use stgcn_refine::tensor::rng::{seeded, uniform_vec, SeededRng};
use stgcn_refine::tensor::{BatchNormStats, BN_EPS};
use stgcn_refine::train::{derivative_loss, pose_loss, symmetry_loss, symmetry_loss_with};
use stgcn_refine::Tensor;

pub const FD_EPS: f64 = 1e-6;

// ---------------------------------------------------------------------------
// finite differences

/// `sum(out * R)` for a fixed pseudo-random `R` of the output's shape, so a
/// scalar check exercises the whole Jacobian.
pub fn probe(out: &Tensor) -> Tensor {
    let mut rng = seeded(0x9e37 ^ out.len() as u64);
    let r = Tensor::rand_uniform(&mut rng, out.shape(), -1.0, 1.0);
    out.mul(&r).unwrap().sum_all().unwrap()
}

/// Norm-wise relative error `|a - n| / max(|a|, |n|)`; 0 when both vanish.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Analytic vs. central-difference gradients of the scalar `f` for every
/// input; returns one relative error per input.
pub fn grad_check(inputs: &[Tensor], f: impl Fn(&[Tensor]) -> Tensor) -> Vec<f64> {
    let leaves: Vec<Tensor> = inputs.iter().map(|t| Tensor::param(t.data().to_vec(), t.shape()).unwrap()).collect();
    let out = f(&leaves);
    assert_eq!(out.len(), 1, "grad_check needs a scalar");
    out.backward().unwrap();
    let consts: Vec<Tensor> = inputs.iter().map(|t| t.detach()).collect();
    let mut errs = Vec::new();
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.len()]);
        let base = inputs[i].data().to_vec();
        let mut numeric = vec![0.0; base.len()];
        for e in 0..base.len() {
            let eval = |delta: f64| {
                let mut v = base.clone();
                v[e] += delta;
                let mut args = consts.clone();
                args[i] = Tensor::new(v, inputs[i].shape()).unwrap();
                f(&args).item()
            };
            numeric[e] = (eval(FD_EPS) - eval(-FD_EPS)) / (2.0 * FD_EPS);
        }
        errs.push(rel_err(&analytic, &numeric));
    }
    errs
}

fn uni(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    Tensor::rand_uniform(rng, shape, -1.0, 1.0)
}

/// Uniform values bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(v, shape).unwrap()
}

/// Gradient check of every differentiable tensor op and graph operation.
pub fn op_gradient_audit() -> Vec<(&'static str, f64)> {
    let mut rng = seeded(2024);
    let mut out: Vec<(&'static str, f64)> = Vec::new();
    let mut run = |name: &'static str, inputs: Vec<Tensor>, f: &dyn Fn(&[Tensor]) -> Tensor| {
        let worst = grad_check(&inputs, |x| f(x)).into_iter().fold(0.0, f64::max);
        out.push((name, worst));
    };

    let a = uni(&mut rng, &[3, 4]);
    let row = uni(&mut rng, &[4]);
    run("add", vec![a.clone(), uni(&mut rng, &[3, 4])], &|x| probe(&x[0].add(&x[1]).unwrap()));
    run("add_broadcast", vec![a.clone(), row.clone()], &|x| probe(&x[0].add(&x[1]).unwrap()));
    run("sub_broadcast", vec![uni(&mut rng, &[2, 3, 1]), uni(&mut rng, &[3, 4])], &|x| {
        probe(&x[0].sub(&x[1]).unwrap())
    });
    run("mul_broadcast", vec![uni(&mut rng, &[2, 3, 4]), uni(&mut rng, &[3, 1])], &|x| {
        probe(&x[0].mul(&x[1]).unwrap())
    });
    run("scale", vec![a.clone()], &|x| probe(&x[0].scale(-2.5).unwrap()));
    run("add_scalar", vec![a.clone()], &|x| probe(&x[0].add_scalar(3.0).unwrap()));
    run("neg", vec![a.clone()], &|x| probe(&x[0].neg().unwrap()));
    run("relu", vec![away_from_zero(&mut rng, &[5, 4])], &|x| probe(&x[0].relu().unwrap()));
    run("abs", vec![away_from_zero(&mut rng, &[5, 4])], &|x| probe(&x[0].abs().unwrap()));
    run("sqrt", vec![Tensor::rand_uniform(&mut rng, &[5, 4], 0.5, 2.0)], &|x| probe(&x[0].sqrt().unwrap()));
    run("exp", vec![a.clone()], &|x| probe(&x[0].exp().unwrap()));
    run("square", vec![a.clone()], &|x| probe(&x[0].square().unwrap()));
    run("sum_all", vec![a.clone()], &|x| x[0].sum_all().unwrap().scale(1.5).unwrap());
    run("mean_all", vec![a.clone()], &|x| x[0].mean_all().unwrap().square().unwrap());
    let cube = uni(&mut rng, &[2, 3, 4]);
    run("sum_axes", vec![cube.clone()], &|x| probe(&x[0].sum_axes(&[0, 2], false).unwrap()));
    run("mean_axes", vec![cube.clone()], &|x| probe(&x[0].mean_axes(&[1], true).unwrap()));
    run("norm", vec![away_from_zero(&mut rng, &[2, 3, 4])], &|x| probe(&x[0].norm(1).unwrap()));
    run("reshape", vec![cube.clone()], &|x| probe(&x[0].reshape(&[4, 6]).unwrap()));
    run("permute", vec![cube.clone()], &|x| probe(&x[0].permute(&[2, 0, 1]).unwrap()));
    run("transpose", vec![a.clone()], &|x| probe(&x[0].t().unwrap()));
    run("index_select", vec![cube.clone()], &|x| probe(&x[0].index_select(2, &[3, 0, 3, 1]).unwrap()));
    run("narrow", vec![cube.clone()], &|x| probe(&x[0].narrow(1, 1, 2).unwrap()));
    run("concat", vec![cube.clone(), uni(&mut rng, &[2, 1, 4])], &|x| {
        probe(&Tensor::concat(&[x[0].clone(), x[1].clone()], 1).unwrap())
    });
    run("softmax", vec![uni(&mut rng, &[3, 5])], &|x| probe(&x[0].softmax(-1).unwrap()));
    run("softmax_axis0", vec![uni(&mut rng, &[3, 5])], &|x| probe(&x[0].softmax(0).unwrap()));
    run("matmul", vec![uni(&mut rng, &[4, 5]), uni(&mut rng, &[5, 3])], &|x| probe(&x[0].matmul(&x[1]).unwrap()));
    run("matmul_batched", vec![uni(&mut rng, &[2, 4, 5]), uni(&mut rng, &[2, 5, 3])], &|x| {
        probe(&x[0].matmul(&x[1]).unwrap())
    });
    run("matmul_shared_left", vec![uni(&mut rng, &[4, 5]), uni(&mut rng, &[2, 5, 3])], &|x| {
        probe(&x[0].matmul(&x[1]).unwrap())
    });
    run("matmul_shared_right", vec![uni(&mut rng, &[2, 4, 5]), uni(&mut rng, &[5, 3])], &|x| {
        probe(&x[0].matmul(&x[1]).unwrap())
    });
    let bn_in = vec![uni(&mut rng, &[3, 4, 2, 3]), uni(&mut rng, &[4]), uni(&mut rng, &[4])];
    run("batch_norm_train", bn_in.clone(), &|x| {
        let mut st = BatchNormStats::new(4);
        probe(&x[0].batch_norm(&x[1], &x[2], &mut st, true).unwrap())
    });
    run("batch_norm_infer", bn_in, &|x| {
        let mut st = BatchNormStats {
            mean: vec![0.1, -0.2, 0.3, 0.0],
            var: vec![0.5, 1.5, 2.0, 0.9],
        };
        probe(&x[0].batch_norm(&x[1], &x[2], &mut st, false).unwrap())
    });
    run("temporal_conv", vec![uni(&mut rng, &[2, 3, 5, 4]), uni(&mut rng, &[2, 3, 3])], &|x| {
        probe(&x[0].temporal_conv(&x[1]).unwrap())
    });
    run("temporal_conv_k5", vec![uni(&mut rng, &[1, 2, 3, 2]), uni(&mut rng, &[3, 2, 5])], &|x| {
        probe(&x[0].temporal_conv(&x[1]).unwrap())
    });

    let topo = default_topology();
    let g = StGraph::build(&topo, 3).unwrap();
    let p = g.node_count();
    run("class_conv", vec![uni(&mut rng, &[p, 3]), uni(&mut rng, &[6, 3, 4])], &|x| {
        probe(&g.class_conv(&x[0], &x[1]).unwrap())
    });
    run("class_conv_batched", vec![uni(&mut rng, &[2, 3, p]), uni(&mut rng, &[6, 3, 4])], &|x| {
        probe(&g.class_conv_batched(&x[0], &x[1]).unwrap())
    });
    run("kipf_propagate", vec![uni(&mut rng, &[p, 3]), uni(&mut rng, &[3, 4])], &|x| {
        probe(&g.kipf_propagate(&x[0], &x[1]).unwrap())
    });
    let (c, d) = (4, 2);
    run(
        "nonlocal",
        vec![uni(&mut rng, &[2, c, 6]), uni(&mut rng, &[d, c]), uni(&mut rng, &[d, c]), uni(&mut rng, &[d, c]), uni(&mut rng, &[c, d])],
        &|x| {
            let params = NonLocalParams {
                theta: x[1].clone(),
                phi: x[2].clone(),
                g: x[3].clone(),
                out: x[4].clone(),
            };
            probe(&nonlocal::forward(&params, &x[0]).unwrap())
        },
    );

    let pose = |rng: &mut SeededRng| Tensor::rand_uniform(rng, &[2, 3, 17], -500.0, 500.0);
    run("pose_loss", vec![pose(&mut rng), pose(&mut rng)], &|x| pose_loss(&x[0], &x[1]).unwrap());
    run("derivative_loss", vec![uni(&mut rng, &[2, 3, 17, 4]), uni(&mut rng, &[2, 3, 17, 4])], &|x| {
        derivative_loss(&x[0], &x[1]).unwrap()
    });
    run("symmetry_loss", vec![pose(&mut rng)], &|x| symmetry_loss(&x[0], &topo).unwrap());
    run("symmetry_loss_gt", vec![pose(&mut rng), pose(&mut rng)], &|x| {
        symmetry_loss_with(&x[0], Some(&x[1]), &topo).unwrap()
    });
    out
}

/// Tiny refiner used by the end-to-end checks: default skeleton, `T = 3`,
/// width 8, two layers, visibility channel on so the residual projection
/// and the concat path are covered.
pub fn tiny_config() -> RefinerConfig {
    RefinerConfig {
        hidden: 8,
        layers: 2,
        use_visibility: true,
        ..RefinerConfig::default()
    }
}

/// A model with every parameter, running statistic and the input
/// normalization randomized, so no path is switched off by a zero weight.
pub fn randomized_model(cfg: RefinerConfig, topo: &SkeletonTopology, seed: u64) -> RefinerModel {
    let mut m = RefinerModel::init(cfg, topo, seed).unwrap();
    let mut rng = seeded(seed ^ 0x5eed);
    let params: Vec<_> = m
        .params()
        .iter()
        .cloned()
        .map(|mut p| {
            let hi = if p.name.ends_with("gamma") { 1.5 } else { 0.6 };
            let lo = if p.name.ends_with("gamma") { 0.5 } else { -0.6 };
            p.data = uniform_vec(&mut rng, p.data.len(), lo, hi);
            p
        })
        .collect();
    m.load_params(params).unwrap();
    for st in m.batch_norm_stats_mut() {
        let c = st.mean.len();
        st.mean = uniform_vec(&mut rng, c, -0.5, 0.5);
        st.var = uniform_vec(&mut rng, c, 0.5, 2.0);
    }
    m.set_input_norm(InputNorm {
        mean: [3.0, -7.0, 11.0],
        std: [120.0, 250.0, 90.0],
    });
    m
}

/// Per-parameter relative error of the full training loss gradient of the
/// tiny refiner (training-mode batch norm, all three loss terms).
pub fn tiny_refiner_gradient_errors() -> Vec<(String, f64)> {
    use stgcn_refine::train::{total_loss, LossWeights, SymmetryReferent};
    let topo = default_topology();
    let cfg = tiny_config();
    let model = randomized_model(cfg.clone(), &topo, 11);
    let mut rng = seeded(12);
    let (n, chunk, j) = (4, 2, 17);
    let mut x = Tensor::rand_uniform(&mut rng, &[n, 3, 3, j, 1], -400.0, 400.0).into_vec();
    let vis: Vec<f64> = (0..n * 3 * j).map(|_| f64::from(rng.random_bool(0.7) as u8)).collect();
    // append the visibility channel: (N, 3, ...) -> (N, 4, ...)
    let per = 3 * j;
    let mut full = Vec::with_capacity(n * 4 * per);
    for b in 0..n {
        full.extend_from_slice(&x[b * 3 * per..(b + 1) * 3 * per]);
        full.extend_from_slice(&vis[b * per..(b + 1) * per]);
    }
    x = full;
    let x = Tensor::new(x, &[n, 4, 3, j, 1]).unwrap();
    let y = Tensor::rand_uniform(&mut rng, &[n, 3, j, 1], -400.0, 400.0);
    let weights = LossWeights::default();
    let loss = |params: &[Tensor]| {
        let mut m = model.clone();
        let out = m.forward_with(&x, params, true).unwrap();
        let runs = n / chunk;
        let seq = |v: &Tensor| v.reshape(&[runs, chunk, 3, j]).unwrap().permute(&[0, 2, 3, 1]).unwrap();
        let (ps, gs) = (seq(&out), seq(&y));
        total_loss(&out, &y, Some((&ps, &gs)), &weights, SymmetryReferent::MirrorBones, &topo)
            .unwrap()
            .total
    };
    let errs = grad_check(&model.constants(), loss);
    model.params().iter().map(|p| p.name.clone()).zip(errs).collect()
}

// ---------------------------------------------------------------------------
// skeletons

/// Chain `0 - 1 - ... - (j-1)` rooted at 0, no mirrors.
pub fn chain_topology(j: usize) -> SkeletonTopology {
    let names = (0..j).map(|i| format!("c{i}")).collect();
    let parent = (0..j).map(|i| i.checked_sub(1)).collect();
    SkeletonTopology::new(names, parent, vec![None; j]).unwrap()
}

/// A random valid skeleton: a midline tree with mirrored limb chains hung
/// off midline joints, indices shuffled.
pub fn random_topology(rng: &mut SeededRng) -> SkeletonTopology {
    let midline = rng.random_range(1..6usize);
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut mirror: Vec<Option<usize>> = vec![None];
    for i in 1..midline {
        parent.push(Some(rng.random_range(0..i)));
        mirror.push(None);
    }
    let limbs = rng.random_range(0..4usize);
    for _ in 0..limbs {
        let len = rng.random_range(1..4usize);
        let mut at = (rng.random_range(0..midline), rng.random_range(0..midline));
        at.1 = at.0;
        for _ in 0..len {
            let l = parent.len();
            parent.push(Some(at.0));
            parent.push(Some(at.1));
            mirror.push(Some(l + 1));
            mirror.push(Some(l));
            at = (l, l + 1);
        }
    }
    // a few unmirrored leaves anywhere
    for _ in 0..rng.random_range(0..3usize) {
        let j = parent.len();
        parent.push(Some(rng.random_range(0..j)));
        mirror.push(None);
    }
    let n = parent.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut p2 = vec![None; n];
    let mut m2 = vec![None; n];
    for old in 0..n {
        p2[perm[old]] = parent[old].map(|q| perm[q]);
        m2[perm[old]] = mirror[old].map(|q| perm[q]);
    }
    let names = (0..n).map(|i| format!("r{i}")).collect();
    SkeletonTopology::new(names, p2, m2).unwrap()
}

// ---------------------------------------------------------------------------
// graph oracle

/// The six class matrices built directly from the neighbor definitions:
/// self, parent, children, mirror, next frame, previous frame.
pub fn oracle_classes(topo: &SkeletonTopology, t: usize) -> Vec<Vec<f64>> {
    let j = topo.joint_count();
    let p = t * j;
    let mut a = vec![vec![0.0; p * p]; 6];
    for f in 0..t {
        for r in 0..j {
            for c in 0..j {
                let (u, v) = (f * j + r, f * j + c);
                if r == c {
                    a[0][u * p + v] = 1.0;
                }
                if topo.parent(r) == Some(c) {
                    a[1][u * p + v] = 1.0;
                }
                if topo.parent(c) == Some(r) {
                    a[2][u * p + v] = 1.0;
                }
                if topo.mirror(r) == Some(c) {
                    a[3][u * p + v] = 1.0;
                }
            }
            let u = f * j + r;
            if f + 1 < t {
                a[4][u * p + u + j] = 1.0;
            }
            if f >= 1 {
                a[5][u * p + u - j] = 1.0;
            }
        }
    }
    a
}

/// `D_r^{-1/2} A D_c^{-1/2}` with row and column degrees; zero degree maps
/// to zero.
pub fn oracle_normalize(a: &[f64], p: usize, columns: bool) -> Vec<f64> {
    let f = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
    let row: Vec<f64> = (0..p).map(|r| f((0..p).map(|c| a[r * p + c]).sum())).collect();
    let col: Vec<f64> = if columns {
        (0..p).map(|c| f((0..p).map(|r| a[r * p + c]).sum())).collect()
    } else {
        row.clone()
    };
    let mut out = vec![0.0; p * p];
    for r in 0..p {
        for c in 0..p {
            out[r * p + c] = row[r] * a[r * p + c] * col[c];
        }
    }
    out
}

/// Row-major `(r x k) * (k x c)`.
pub fn dense_matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for l in 0..k {
            let av = a[i * k + l];
            for j in 0..c {
                out[i * c + j] += av * b[l * c + j];
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// refiner oracle

/// Straight-line re-implementation of the refiner forward in inference
/// mode for `M = 1`; returns `(N, 3, J)` row-major.
pub fn oracle_forward(model: &RefinerModel, topo: &SkeletonTopology, x: &[f64], n: usize) -> Vec<f64> {
    let cfg = model.config();
    let (t, j, hid) = (cfg.frames, cfg.joints, cfg.hidden);
    let cin = cfg.in_channels();
    let p = t * j;
    let param = |name: &str| model.param(name).unwrap_or_else(|| panic!("{name}")).data.clone();
    let classes: Vec<Vec<f64>> = oracle_classes(topo, t)
        .iter()
        .map(|a| oracle_normalize(a, p, true))
        .collect();
    let norm = model.input_norm();
    let center = cfg.frames / 2;
    let mut out = vec![0.0; n * 3 * j];
    for b in 0..n {
        let xs = &x[b * cin * p..(b + 1) * cin * p];
        // h[c][p]
        let mut h: Vec<Vec<f64>> = (0..cin)
            .map(|c| {
                (0..p)
                    .map(|q| if c < 3 { (xs[c * p + q] - norm.mean[c]) / norm.std[c] } else { xs[c * p + q] })
                    .collect()
            })
            .collect();
        for l in 0..cfg.layers {
            let cl = h.len();
            let w = param(&format!("layer{l}.graph.kernels"));
            // z[co][p] = sum_k sum_q sum_c N_k[p][q] h[c][q] W_k[c][co]
            let mut z = vec![vec![0.0; p]; hid];
            for (k, nk) in classes.iter().enumerate() {
                for co in 0..hid {
                    for c in 0..cl {
                        let wk = w[(k * cl + c) * hid + co];
                        for u in 0..p {
                            let mut s = 0.0;
                            for q in 0..p {
                                s += nk[u * p + q] * h[c][q];
                            }
                            z[co][u] += s * wk;
                        }
                    }
                }
            }
            let kt = cfg.temporal_kernel;
            let pad = kt / 2;
            let tk = param(&format!("layer{l}.temporal.kernel"));
            let mut y = vec![vec![0.0; p]; hid];
            for co in 0..hid {
                for f in 0..t {
                    for v in 0..j {
                        let mut s = 0.0;
                        for ci in 0..hid {
                            for d in 0..kt {
                                let src = f as isize + d as isize - pad as isize;
                                if src >= 0 && (src as usize) < t {
                                    s += tk[(co * hid + ci) * kt + d] * z[ci][src as usize * j + v];
                                }
                            }
                        }
                        y[co][f * j + v] = s;
                    }
                }
            }
            let gamma = param(&format!("layer{l}.bn.gamma"));
            let beta = param(&format!("layer{l}.bn.beta"));
            let st = &model.batch_norm_stats()[l];
            let proj = model.param(&format!("layer{l}.residual.proj")).map(|p| p.data.clone());
            let mut next = vec![vec![0.0; p]; hid];
            for co in 0..hid {
                for u in 0..p {
                    let bn = (y[co][u] - st.mean[co]) / (st.var[co] + BN_EPS).sqrt() * gamma[co] + beta[co];
                    let skip = match &proj {
                        Some(pr) => (0..cl).map(|c| pr[co * cl + c] * h[c][u]).sum(),
                        None => h[co][u],
                    };
                    next[co][u] = (bn + skip).max(0.0);
                }
            }
            h = next;
        }
        if cfg.use_nonlocal {
            let d = cfg.nonlocal_width();
            let (th, ph, g, wo) = (param("nonlocal.theta"), param("nonlocal.phi"), param("nonlocal.g"), param("nonlocal.out"));
            let lin = |w: &[f64]| -> Vec<Vec<f64>> {
                (0..d).map(|e| (0..p).map(|u| (0..hid).map(|c| w[e * hid + c] * h[c][u]).sum()).collect()).collect()
            };
            let (tf, pf, gf) = (lin(&th), lin(&ph), lin(&g));
            let mut mixed = vec![vec![0.0; p]; d];
            for u in 0..p {
                let logits: Vec<f64> =
                    (0..p).map(|q| (0..d).map(|e| tf[e][u] * pf[e][q]).sum::<f64>() / (d as f64).sqrt()).collect();
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
                let z: f64 = ex.iter().sum();
                for e in 0..d {
                    mixed[e][u] = (0..p).map(|q| gf[e][q] * ex[q] / z).sum();
                }
            }
            for c in 0..hid {
                for u in 0..p {
                    h[c][u] += (0..d).map(|e| wo[c * d + e] * mixed[e][u]).sum::<f64>();
                }
            }
        }
        let (hw, hb) = (param("head.weight"), param("head.bias"));
        for a in 0..3 {
            for v in 0..j {
                let u = center * j + v;
                let off = ((0..hid).map(|c| hw[a * hid + c] * h[c][u]).sum::<f64>() / hid as f64 + hb[a]) * norm.std[a];
                let base = if cfg.residual_output { xs[a * p + u] } else { norm.mean[a] };
                out[(b * 3 + a) * j + v] = off + base;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// data

/// A small desk scene for the data tests.
pub fn small_scene(frames: usize, seed: u64) -> Vec<PoseSequence> {
    generate_scene(&SceneSpec::desk(frames, seed), &default_topology()).unwrap()
}

// ---------------------------------------------------------------------------
// loss and metric oracles

fn norm3(a: f64, b: f64, c: f64) -> f64 {
    (a * a + b * b + c * c).sqrt()
}

/// Mean per-joint error of `(N, 3, J)` row-major arrays.
pub fn oracle_pose_loss(pred: &[f64], gt: &[f64], n: usize, j: usize) -> f64 {
    let at = |v: &[f64], b: usize, a: usize, k: usize| v[(b * 3 + a) * j + k];
    let mut s = 0.0;
    for b in 0..n {
        for k in 0..j {
            s += norm3(
                at(pred, b, 0, k) - at(gt, b, 0, k),
                at(pred, b, 1, k) - at(gt, b, 1, k),
                at(pred, b, 2, k) - at(gt, b, 2, k),
            );
        }
    }
    s / (n * j) as f64
}

/// Mean velocity error of `(N, 3, J, T)` row-major arrays.
pub fn oracle_derivative_loss(pred: &[f64], gt: &[f64], n: usize, j: usize, t: usize) -> f64 {
    let at = |v: &[f64], b: usize, a: usize, k: usize, f: usize| v[((b * 3 + a) * j + k) * t + f];
    let mut s = 0.0;
    for b in 0..n {
        for k in 0..j {
            for f in 1..t {
                let d = |a: usize| {
                    (at(pred, b, a, k, f) - at(pred, b, a, k, f - 1)) - (at(gt, b, a, k, f) - at(gt, b, a, k, f - 1))
                };
                s += norm3(d(0), d(1), d(2));
            }
        }
    }
    s / (n * j * (t - 1)) as f64
}

/// Mirrored bone pairs found by brute force: bones `(p, c)` and `(p', c')`
/// with `c' = mirror(c)` and `p' = mirror(p)` (or `p' = p` on the midline).
pub fn oracle_bone_pairs(topo: &SkeletonTopology) -> Vec<((usize, usize), (usize, usize))> {
    let j = topo.joint_count();
    let mut out = Vec::new();
    for c in 0..j {
        for c2 in (c + 1)..j {
            if topo.mirror(c) != Some(c2) {
                continue;
            }
            if let (Some(p), Some(p2)) = (topo.parent(c), topo.parent(c2)) {
                let mirrored = topo.mirror(p) == Some(p2) || (p == p2 && topo.mirror(p).is_none());
                if mirrored {
                    out.push(((p, c), (p2, c2)));
                }
            }
        }
    }
    out
}

/// Mean `| |b_L| - |b_R| - ref |` over mirrored bone pairs of `(N, 3, J)`
/// poses; `ref` is the ground truth's difference when `gt` is given.
pub fn oracle_symmetry_loss(pred: &[f64], gt: Option<&[f64]>, n: usize, topo: &SkeletonTopology) -> f64 {
    let j = topo.joint_count();
    let len = |v: &[f64], b: usize, (p, c): (usize, usize)| {
        let d = |a: usize| v[(b * 3 + a) * j + c] - v[(b * 3 + a) * j + p];
        norm3(d(0), d(1), d(2))
    };
    let pairs = oracle_bone_pairs(topo);
    let mut s = 0.0;
    for b in 0..n {
        for &(l, r) in &pairs {
            let reference = gt.map_or(0.0, |g| len(g, b, l) - len(g, b, r));
            s += (len(pred, b, l) - len(pred, b, r) - reference).abs();
        }
    }
    s / (n * pairs.len()) as f64
}

/// Masked MPJPE over `F x J x 3` arrays; `None` when nothing is selected.
pub fn oracle_mpjpe(pred: &[f64], gt: &[f64], mask: Option<&[u8]>) -> Option<f64> {
    let mut s = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() / 3 {
        if mask.is_some_and(|m| m[i] == 0) {
            continue;
        }
        s += norm3(pred[3 * i] - gt[3 * i], pred[3 * i + 1] - gt[3 * i + 1], pred[3 * i + 2] - gt[3 * i + 2]);
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Worst absolute deviation of each library loss from its loop oracle over
/// `cases` random inputs in `[-1, 1]`: `[pose, derivative, symmetry, symmetry_gt, mpjpe]`.
pub fn loss_oracle_deviation(cases: usize, seed: u64) -> [f64; 5] {
    use stgcn_refine::eval::mpjpe;
    let topo = default_topology();
    let j = 17;
    let mut rng = seeded(seed);
    let mut worst = [0.0f64; 5];
    for _ in 0..cases {
        let n = rng.random_range(1..5usize);
        let t = rng.random_range(2..6usize);
        let mut r = |len: usize| uniform_vec(&mut rng, len, -1.0, 1.0);
        let (p, g) = (r(n * 3 * j), r(n * 3 * j));
        let (ps, gs) = (r(n * 3 * j * t), r(n * 3 * j * t));
        let tp = Tensor::new(p.clone(), &[n, 3, j]).unwrap();
        let tg = Tensor::new(g.clone(), &[n, 3, j]).unwrap();
        let tps = Tensor::new(ps.clone(), &[n, 3, j, t]).unwrap();
        let tgs = Tensor::new(gs.clone(), &[n, 3, j, t]).unwrap();
        let dev = [
            (pose_loss(&tp, &tg).unwrap().item() - oracle_pose_loss(&p, &g, n, j)).abs(),
            (derivative_loss(&tps, &tgs).unwrap().item() - oracle_derivative_loss(&ps, &gs, n, j, t)).abs(),
            (symmetry_loss(&tp, &topo).unwrap().item() - oracle_symmetry_loss(&p, None, n, &topo)).abs(),
            (symmetry_loss_with(&tp, Some(&tg), &topo).unwrap().item() - oracle_symmetry_loss(&p, Some(&g), n, &topo)).abs(),
            {
                let frames = n * j;
                let mask: Vec<u8> = (0..frames).map(|_| rng.random_bool(0.5) as u8).collect();
                let lib = mpjpe(&p, &g, Some(&mask));
                match oracle_mpjpe(&p, &g, Some(&mask)) {
                    Some(o) => (lib.unwrap() - o).abs(),
                    None => {
                        assert!(lib.is_err());
                        0.0
                    }
                }
            },
        ];
        for (w, d) in worst.iter_mut().zip(dev) {
            *w = w.max(d);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// visibility oracle

/// A random scene: one or two subjects, a random camera ring (some focal
/// lengths crop the body) and two to six random boxes, some moving.
pub fn random_scene(seed: u64, frames: usize) -> SceneSpec {
    use stgcn_refine::data::scene::CameraSpec;
    use stgcn_refine::data::Occluder;
    let mut rng = seeded(seed ^ 0xb0c5);
    let mut scene = SceneSpec::desk(frames, seed);
    scene.subjects.truncate(rng.random_range(1..3usize));
    scene.cameras = CameraSpec::ring(
        rng.random_range(2..5usize),
        rng.random_range(3.0..6.0),
        rng.random_range(0.5..2.5),
        rng.random_range(0.8..1.2),
        rng.random_range(600.0..2500.0),
        [1000, 1000],
    );
    scene.occluders = (0..rng.random_range(2..7usize))
        .map(|_| {
            let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let h = [rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)];
            let z0 = rng.random_range(0.0..1.0);
            let z1 = z0 + rng.random_range(0.1..1.5);
            let occ = Occluder::new([c[0] - h[0], c[1] - h[1], z0], [c[0] + h[0], c[1] + h[1], z1]).unwrap();
            if rng.random_bool(0.3) {
                occ.moving([rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), 0.0])
            } else {
                occ
            }
        })
        .collect();
    scene
}

/// Whether any sample of the segment `eye -> p`, taken every `step` meters
/// (both ends included), lies in a box grown by `margin` on every side.
pub fn march_hits(eye: [f64; 3], p: [f64; 3], boxes: &[([f64; 3], [f64; 3])], step: f64, margin: f64) -> bool {
    let d = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let n = (len / step).ceil() as usize;
    (0..=n).any(|k| {
        let s = (k as f64 / n.max(1) as f64).min(1.0);
        let q = [eye[0] + s * d[0], eye[1] + s * d[1], eye[2] + s * d[2]];
        boxes
            .iter()
            .any(|(lo, hi)| (0..3).all(|a| q[a] >= lo[a] - margin && q[a] <= hi[a] + margin))
    })
}

#[derive(Debug, Default, Clone, Copy)]
pub struct VisibilityAudit {
    pub labels: usize,
    pub out_of_frame: usize,
    /// In-frame joints labeled occluded.
    pub occluded: usize,
    /// Out-of-frame projections labeled visible.
    pub out_of_frame_visible: usize,
    /// Labels that disagree with the 1 mm march.
    pub disagreements: usize,
    /// Disagreements where the 1 mm march itself is decided by a 1 mm
    /// change of the box size (the ray grazes a face or edge).
    pub ambiguous_disagreements: usize,
}

/// Check every label of `seqs` against the out-of-frame rule and a 1 mm
/// ray march through `scene`'s occluders.
pub fn audit_visibility(seqs: &[PoseSequence], scene: &SceneSpec) -> VisibilityAudit {
    let mut a = VisibilityAudit::default();
    for s in seqs {
        let cam = &s.camera;
        let eye = cam.center();
        for f in 0..s.frames {
            let boxes: Vec<_> = scene.occluders.iter().map(|o| o.at_frame(f)).collect();
            for j in 0..s.joints {
                a.labels += 1;
                let i = f * s.joints + j;
                let px = [s.joints_2d[2 * i], s.joints_2d[2 * i + 1]];
                let [w, h] = cam.image_size;
                let inside = px[0].is_finite()
                    && px[1].is_finite()
                    && px[0] >= 0.0
                    && px[1] >= 0.0
                    && px[0] < f64::from(w)
                    && px[1] < f64::from(h);
                let vis = s.visibility[i];
                if !inside {
                    a.out_of_frame += 1;
                    if vis != 0 {
                        a.out_of_frame_visible += 1;
                    }
                    continue;
                }
                if vis == 0 {
                    a.occluded += 1;
                }
                let c = s.joint(f, j);
                let world = cam.to_world([c[0] / 1000.0, c[1] / 1000.0, c[2] / 1000.0]);
                let hit = march_hits(eye, world, &boxes, 1e-3, 0.0);
                if hit != (vis == 0) {
                    a.disagreements += 1;
                    let grazing =
                        march_hits(eye, world, &boxes, 1e-3, -1e-3) != march_hits(eye, world, &boxes, 1e-3, 1e-3);
                    if grazing {
                        a.ambiguous_disagreements += 1;
                    }
                }
            }
        }
    }
    a
}
