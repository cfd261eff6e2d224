//! Space-time graph over `T` frames of a skeleton.
//!
//! Node `(t, j)` has index `t * J + j`. Its one-hop neighborhood is split
//! into six disjoint classes, each with its own binary `P x P` matrix:
//!
//! 1. center (self loop)
//! 2. the parent joint in the same frame (closer to the spine)
//! 3. the children in the same frame (farther from the spine)
//! 4. the mirror joint in the same frame
//! 5. the same joint in the next frame
//! 6. the same joint in the previous frame
//!
//! The classes sum to `A + I` of the undirected graph. Each class matrix is
//! normalized as `D_out^{-1/2} A_k D_in^{-1/2}` where a zero degree maps to
//! zero; for symmetric classes both degrees coincide.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::skeleton::SkeletonTopology;
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborClass {
    Center,
    Closer,
    Farther,
    Mirror,
    Forward,
    Backward,
}

impl NeighborClass {
    pub const ALL: [NeighborClass; NUM_CLASSES] = [
        NeighborClass::Center,
        NeighborClass::Closer,
        NeighborClass::Farther,
        NeighborClass::Mirror,
        NeighborClass::Forward,
        NeighborClass::Backward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NeighborClass::Center => "center",
            NeighborClass::Closer => "closer",
            NeighborClass::Farther => "farther",
            NeighborClass::Mirror => "mirror",
            NeighborClass::Forward => "forward",
            NeighborClass::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `D_row^{-1/2} A D_col^{-1/2}`: keeps every edge of a directed class.
    #[default]
    RowColumn,
    /// `D_row^{-1/2} A D_row^{-1/2}`, the textbook form for symmetric `A`.
    /// On directed classes it drops edges into nodes with zero out-degree.
    RowOnly,
}

#[derive(Debug, Clone)]
pub struct StGraph {
    frames: usize,
    joints: usize,
    adjacency: Vec<Tensor>,
    normalized: Vec<Tensor>,
    /// `[N_1^T | ... | N_6^T]`, shape `(P, 6P)`.
    stacked_t: Tensor,
}

impl StGraph {
    pub fn build(topology: &SkeletonTopology, frames: usize) -> Result<Self> {
        Self::build_with(topology, frames, Normalization::default())
    }

    pub fn build_with(topology: &SkeletonTopology, frames: usize, norm: Normalization) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Config("graph needs at least one frame".into()));
        }
        topology
            .validate()
            .map_err(|v| Error::InvalidTopology(v.iter().map(ToString::to_string).collect()))?;
        let j_count = topology.joint_count();
        let p = frames * j_count;
        let mut mats = vec![vec![0.0; p * p]; NUM_CLASSES];
        let node = |t: usize, j: usize| t * j_count + j;
        for t in 0..frames {
            for j in 0..j_count {
                let i = node(t, j);
                mats[0][i * p + i] = 1.0;
                if let Some(par) = topology.parent(j) {
                    mats[1][i * p + node(t, par)] = 1.0;
                }
                for c in topology.children(j) {
                    mats[2][i * p + node(t, c)] = 1.0;
                }
                if let Some(m) = topology.mirror(j) {
                    mats[3][i * p + node(t, m)] = 1.0;
                }
                if t + 1 < frames {
                    mats[4][i * p + node(t + 1, j)] = 1.0;
                }
                if t >= 1 {
                    mats[5][i * p + node(t - 1, j)] = 1.0;
                }
            }
        }
        let adjacency: Vec<Tensor> = mats
            .into_iter()
            .map(|m| Tensor::new(m, &[p, p]).expect("square"))
            .collect();
        let normalized: Vec<Tensor> = adjacency.iter().map(|a| normalize_with(a, norm)).collect();
        let mut st = vec![0.0; p * NUM_CLASSES * p];
        for (k, nk) in normalized.iter().enumerate() {
            let d = nk.data();
            for r in 0..p {
                for c in 0..p {
                    st[c * NUM_CLASSES * p + k * p + r] = d[r * p + c];
                }
            }
        }
        Ok(StGraph {
            frames,
            joints: j_count,
            adjacency,
            normalized,
            stacked_t: Tensor::new(st, &[p, NUM_CLASSES * p]).expect("shape"),
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn node_count(&self) -> usize {
        self.frames * self.joints
    }

    pub fn node_index(&self, t: usize, j: usize) -> usize {
        t * self.joints + j
    }

    /// Binary matrix of class `k` (0-based, in [`NeighborClass::ALL`] order).
    pub fn class_matrix(&self, k: usize) -> &Tensor {
        &self.adjacency[k]
    }

    pub fn normalized(&self, k: usize) -> &Tensor {
        &self.normalized[k]
    }

    pub fn normalized_all(&self) -> &[Tensor] {
        &self.normalized
    }

    /// `A + I` as the sum of the six class matrices.
    pub fn augmented(&self) -> Tensor {
        let p = self.node_count();
        let mut sum = vec![0.0; p * p];
        for a in &self.adjacency {
            sum.iter_mut().zip(a.data()).for_each(|(s, v)| *s += v);
        }
        Tensor::new(sum, &[p, p]).expect("square")
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` of the whole undirected graph.
    pub fn kipf_matrix(&self) -> Tensor {
        normalize_class(&self.augmented())
    }

    /// `ReLU(D^{-1/2} (A + I) D^{-1/2} H W)` for `H: (P, C)`, `W: (C, C')`.
    pub fn kipf_propagate(&self, h: &Tensor, w: &Tensor) -> Result<Tensor> {
        self.check_nodes(h, "kipf_propagate")?;
        self.kipf_matrix().matmul(&h.matmul(w)?)?.relu()
    }

    /// `sum_k N_k X W_k` for `X: (P, C)` and kernels `(6, C, C')`.
    pub fn class_conv(&self, x: &Tensor, kernels: &Tensor) -> Result<Tensor> {
        self.check_nodes(x, "class_conv")?;
        conv_decomposed(&self.normalized, x, kernels)
    }

    /// Batched class convolution on `(N, C, P)` features with kernels
    /// `(6, C, C')`, returning `(N, C', P)`.
    pub fn class_conv_batched(&self, x: &Tensor, kernels: &Tensor) -> Result<Tensor> {
        let xs = x.shape();
        let ks = kernels.shape();
        let p = self.node_count();
        if xs.len() != 3 || xs[2] != p || ks.len() != 3 || ks[0] != NUM_CLASSES || ks[1] != xs[1] {
            return Err(Error::shape("class_conv_batched", format!("x {xs:?}, kernels {ks:?}, P={p}")));
        }
        let (n, c, co) = (xs[0], xs[1], ks[2]);
        // node mixing for all classes at once: (N*C, P) x (P, 6P)
        let mixed = x.reshape(&[n * c, p])?.matmul(&self.stacked_t)?;
        let mixed = mixed
            .reshape(&[n, c, NUM_CLASSES, p])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[n, NUM_CLASSES * c, p])?;
        // channel mixing with the stacked kernels: (C', 6C) x (N, 6C, P)
        let w = kernels.reshape(&[NUM_CLASSES * c, co])?.t()?;
        w.matmul(&mixed)
    }

    fn check_nodes(&self, x: &Tensor, op: &'static str) -> Result<()> {
        if x.ndim() != 2 || x.shape()[0] != self.node_count() {
            return Err(Error::shape(op, format!("features {:?} for P={}", x.shape(), self.node_count())));
        }
        Ok(())
    }

    /// Human-readable dump: node count, per-class summaries and, when
    /// `full`, every class matrix plus its normalized form.
    pub fn dump(&self, full: bool) -> String {
        let p = self.node_count();
        let mut s = String::new();
        let _ = writeln!(s, "T={} J={} P={}", self.frames, self.joints, p);
        for (k, class) in NeighborClass::ALL.iter().enumerate() {
            let a = self.adjacency[k].data();
            let edges = a.iter().filter(|&&v| v != 0.0).count();
            let max_deg = (0..p)
                .map(|r| a[r * p..(r + 1) * p].iter().filter(|&&v| v != 0.0).count())
                .max()
                .unwrap_or(0);
            let sym = is_symmetric(a, p);
            let _ = writeln!(
                s,
                "A{} {:<8} edges={} max_row_degree={} symmetric={}",
                k + 1,
                class.name(),
                edges,
                max_deg,
                sym
            );
        }
        let aug = self.augmented();
        let _ = writeln!(
            s,
            "A~ edges={} symmetric={} spectral_radius={:.6}",
            aug.data().iter().filter(|&&v| v != 0.0).count(),
            is_symmetric(aug.data(), p),
            spectral_radius(&self.kipf_matrix(), 500)
        );
        if full {
            write_matrix(&mut s, "A~", aug.data(), p, true);
            for k in 0..NUM_CLASSES {
                write_matrix(&mut s, &format!("A{}", k + 1), self.adjacency[k].data(), p, true);
                write_matrix(&mut s, &format!("N{}", k + 1), self.normalized[k].data(), p, false);
            }
        }
        s
    }
}

fn is_symmetric(a: &[f64], p: usize) -> bool {
    (0..p).all(|r| (0..r).all(|c| a[r * p + c] == a[c * p + r]))
}

fn write_matrix(s: &mut String, name: &str, a: &[f64], p: usize, binary: bool) {
    let _ = writeln!(s, "{name}");
    for r in 0..p {
        let row: Vec<String> = a[r * p..(r + 1) * p]
            .iter()
            .map(|v| if binary { format!("{}", *v as u8) } else { format!("{v:.4}") })
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
}

/// `D^{-1/2} A D^{-1/2}` with `D` the row degrees; degree 0 maps to 0.
/// Equals [`Normalization::RowColumn`] whenever `A` is symmetric.
pub fn normalize_class(a: &Tensor) -> Tensor {
    normalize_with(a, Normalization::RowOnly)
}

pub fn normalize_with(a: &Tensor, norm: Normalization) -> Tensor {
    let p = a.shape()[0];
    let d = a.data();
    let inv_sqrt = |deg: f64| if deg > 0.0 { 1.0 / deg.sqrt() } else { 0.0 };
    let row: Vec<f64> = (0..p).map(|r| inv_sqrt(d[r * p..(r + 1) * p].iter().sum())).collect();
    let col: Vec<f64> = match norm {
        Normalization::RowOnly => row.clone(),
        Normalization::RowColumn => (0..p).map(|c| inv_sqrt((0..p).map(|r| d[r * p + c]).sum())).collect(),
    };
    let out = (0..p * p).map(|i| row[i / p] * d[i] * col[i % p]).collect();
    Tensor::new(out, &[p, p]).expect("square")
}

/// `sum_k M_k X W_k` over an arbitrary decomposition `mats` with kernels
/// `(K, C, C')`.
pub fn conv_decomposed(mats: &[Tensor], x: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    let ks = kernels.shape();
    if ks.len() != 3 || ks[0] != mats.len() {
        return Err(Error::shape(
            "class_conv",
            format!("{} class matrices, kernels {:?}", mats.len(), ks),
        ));
    }
    let mut acc: Option<Tensor> = None;
    for (k, m) in mats.iter().enumerate() {
        let wk = kernels.narrow(0, k, 1)?.reshape(&ks[1..])?;
        let term = m.matmul(&x.matmul(&wk)?)?;
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    acc.ok_or_else(|| Error::shape("class_conv", "empty decomposition"))
}

/// Largest absolute eigenvalue of a symmetric matrix by power iteration.
pub fn spectral_radius(m: &Tensor, iters: usize) -> f64 {
    let p = m.shape()[0];
    let d = m.data();
    // fixed non-degenerate start vector
    let mut v: Vec<f64> = (0..p).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        // iterate with M^2 so the sign of the dominant eigenvalue cannot stall
        let mv: Vec<f64> = (0..p).map(|r| (0..p).map(|c| d[r * p + c] * v[c]).sum()).collect();
        let mmv: Vec<f64> = (0..p).map(|r| (0..p).map(|c| d[r * p + c] * mv[c]).sum()).collect();
        let norm = mmv.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = (norm / vnorm).sqrt();
        v = mmv.iter().map(|x| x / norm).collect();
    }
    lambda
}
