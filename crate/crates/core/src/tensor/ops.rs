use super::gemm::{gemm, MatView};
use super::{numel, strides, BackwardCtx, Tensor};
use crate::error::{Error, Result};

/// Numpy-style broadcast of two shapes aligned at the trailing dimension.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every linear index of `out_shape`, the linear index of the element of
/// `in_shape` it reads under broadcasting. `None` when the shapes agree.
fn broadcast_map(in_shape: &[usize], out_shape: &[usize]) -> Option<Vec<usize>> {
    if in_shape == out_shape {
        return None;
    }
    let n = out_shape.len();
    let in_strides = strides(in_shape);
    let mut bstr = vec![0usize; n];
    for (i, s) in bstr.iter_mut().enumerate() {
        if i + in_shape.len() >= n {
            let d = i + in_shape.len() - n;
            if in_shape[d] != 1 {
                *s = in_strides[d];
            }
        }
    }
    let total = numel(out_shape);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    let mut lin = 0usize;
    for _ in 0..total {
        map.push(lin);
        for d in (0..n).rev() {
            idx[d] += 1;
            lin += bstr[d];
            if idx[d] < out_shape[d] {
                break;
            }
            lin -= bstr[d] * idx[d];
            idx[d] = 0;
        }
    }
    Some(map)
}

fn reduce_to(grad: &[f64], map: &Option<Vec<usize>>, len: usize) -> Vec<f64> {
    match map {
        None => grad.to_vec(),
        Some(m) => {
            let mut out = vec![0.0; len];
            for (g, &j) in grad.iter().zip(m) {
                out[j] += g;
            }
            out
        }
    }
}

fn gather(data: &[f64], map: &Option<Vec<usize>>) -> Vec<f64> {
    match map {
        None => data.to_vec(),
        Some(m) => m.iter().map(|&j| data[j]).collect(),
    }
}

fn normalize_axis(axis: isize, ndim: usize, op: &'static str) -> Result<usize> {
    let a = if axis < 0 { axis + ndim as isize } else { axis };
    if a < 0 || a as usize >= ndim {
        return Err(Error::shape(op, format!("axis {axis} out of range for rank {ndim}")));
    }
    Ok(a as usize)
}

/// Split `shape` around `axis` into (outer, axis_len, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

impl Tensor {
    fn binary(
        &self,
        other: &Tensor,
        op: &'static str,
        f: fn(f64, f64) -> f64,
        kind: BinaryKind,
    ) -> Result<Tensor> {
        let shape = broadcast_shape(self.shape(), other.shape()).ok_or_else(|| {
            Error::shape(op, format!("cannot broadcast {:?} with {:?}", self.shape(), other.shape()))
        })?;
        let ma = broadcast_map(self.shape(), &shape);
        let mb = broadcast_map(other.shape(), &shape);
        let av = gather(self.data(), &ma);
        let bv = gather(other.data(), &mb);
        let data: Vec<f64> = av.iter().zip(&bv).map(|(&x, &y)| f(x, y)).collect();
        let (la, lb) = (self.len(), other.len());
        Tensor::from_op(op, shape, data, &[self, other], move |ctx: &BackwardCtx<'_>| {
            let g = ctx.grad;
            let (ga, gb) = match kind {
                BinaryKind::Add => (g.to_vec(), g.to_vec()),
                BinaryKind::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
                BinaryKind::Mul => {
                    let ad = gather(ctx.inputs[0].data(), &ma);
                    let bd = gather(ctx.inputs[1].data(), &mb);
                    (
                        g.iter().zip(&bd).map(|(g, b)| g * b).collect(),
                        g.iter().zip(&ad).map(|(g, a)| g * a).collect(),
                    )
                }
            };
            vec![
                ctx.inputs[0].is_tracked().then(|| reduce_to(&ga, &ma, la)),
                ctx.inputs[1].is_tracked().then(|| reduce_to(&gb, &mb, lb)),
            ]
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "add", |a, b| a + b, BinaryKind::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "sub", |a, b| a - b, BinaryKind::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "mul", |a, b| a * b, BinaryKind::Mul)
    }

    fn unary<F, D>(&self, op: &'static str, f: F, df: D) -> Result<Tensor>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let data = self.data().iter().map(|&x| f(x)).collect();
        Tensor::from_op(op, self.shape().to_vec(), data, &[self], move |ctx| {
            let x = ctx.inputs[0].data();
            let y = ctx.output.data();
            let g = ctx
                .grad
                .iter()
                .zip(x.iter().zip(y))
                .map(|(g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(g)]
        })
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.unary("scale", |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        self.unary("add_scalar", |x| x + c, |_, _| 1.0)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.scale(-1.0)
    }

    /// Rectifier with subgradient 0 at the origin.
    pub fn relu(&self) -> Result<Tensor> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Absolute value with subgradient 0 at the origin.
    pub fn abs(&self) -> Result<Tensor> {
        self.unary("abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.unary("sqrt", f64::sqrt, |_, y| if y > 0.0 { 0.5 / y } else { 0.0 })
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn square(&self) -> Result<Tensor> {
        self.unary("square", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sum_all(&self) -> Result<Tensor> {
        let s = self.data().iter().sum();
        let n = self.len();
        Tensor::from_op("sum", Vec::new(), vec![s], &[self], move |ctx| {
            vec![Some(vec![ctx.grad[0]; n])]
        })
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::shape("mean", "mean of empty tensor"));
        }
        self.sum_all()?.scale(1.0 / self.len() as f64)
    }

    /// Sum over `axes`; reduced axes are kept with extent 1 when `keepdim`.
    pub fn sum_axes(&self, axes: &[isize], keepdim: bool) -> Result<Tensor> {
        let nd = self.ndim();
        let mut reduce = vec![false; nd];
        for &a in axes {
            reduce[normalize_axis(a, nd, "sum_axes")?] = true;
        }
        let kept: Vec<usize> = self
            .shape()
            .iter()
            .zip(&reduce)
            .map(|(&d, &r)| if r { 1 } else { d })
            .collect();
        let map = broadcast_map(&kept, self.shape());
        let out_len = numel(&kept);
        let data = reduce_to(self.data(), &map, out_len);
        let shape = if keepdim {
            kept.clone()
        } else {
            self.shape()
                .iter()
                .zip(&reduce)
                .filter(|(_, &r)| !r)
                .map(|(&d, _)| d)
                .collect()
        };
        Tensor::from_op("sum_axes", shape, data, &[self], move |ctx| {
            vec![Some(gather(ctx.grad, &map))]
        })
    }

    pub fn mean_axes(&self, axes: &[isize], keepdim: bool) -> Result<Tensor> {
        let nd = self.ndim();
        let mut count = 1usize;
        for &a in axes {
            count *= self.shape()[normalize_axis(a, nd, "mean_axes")?];
        }
        if count == 0 {
            return Err(Error::shape("mean_axes", "mean over empty axis"));
        }
        self.sum_axes(axes, keepdim)?.scale(1.0 / count as f64)
    }

    /// Euclidean norm along `axis` (removed from the shape). The gradient at
    /// a zero vector is taken as zero.
    pub fn norm(&self, axis: isize) -> Result<Tensor> {
        let axis = normalize_axis(axis, self.ndim(), "norm")?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut s = 0.0;
                for a in 0..len {
                    let v = x[(o * len + a) * inner + i];
                    s += v * v;
                }
                data[o * inner + i] = s.sqrt();
            }
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Tensor::from_op("norm", shape, data, &[self], move |ctx| {
            let x = ctx.inputs[0].data();
            let n = ctx.output.data();
            let mut g = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let nv = n[o * inner + i];
                    if nv > 0.0 {
                        let go = ctx.grad[o * inner + i] / nv;
                        for a in 0..len {
                            let k = (o * len + a) * inner + i;
                            g[k] = go * x[k];
                        }
                    }
                }
            }
            vec![Some(g)]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape(), shape),
            ));
        }
        Tensor::from_op("reshape", shape.to_vec(), self.data().to_vec(), &[self], |ctx| {
            vec![Some(ctx.grad.to_vec())]
        })
    }

    /// Reorder axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape("permute", format!("bad permutation {perm:?} for rank {nd}")));
        }
        let in_str = strides(self.shape());
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape()[p]).collect();
        let pstr: Vec<usize> = perm.iter().map(|&p| in_str[p]).collect();
        let total = self.len();
        let mut map = Vec::with_capacity(total);
        let mut idx = vec![0usize; nd];
        let mut lin = 0usize;
        for _ in 0..total {
            map.push(lin);
            for d in (0..nd).rev() {
                idx[d] += 1;
                lin += pstr[d];
                if idx[d] < shape[d] {
                    break;
                }
                lin -= pstr[d] * idx[d];
                idx[d] = 0;
            }
        }
        let x = self.data();
        let data = map.iter().map(|&j| x[j]).collect();
        Tensor::from_op("permute", shape, data, &[self], move |ctx| {
            let mut g = vec![0.0; total];
            for (go, &j) in ctx.grad.iter().zip(&map) {
                g[j] = *go;
            }
            vec![Some(g)]
        })
    }

    /// Swap the last two axes.
    pub fn t(&self) -> Result<Tensor> {
        let nd = self.ndim();
        if nd < 2 {
            return Err(Error::shape("t", "rank < 2"));
        }
        let mut perm: Vec<usize> = (0..nd).collect();
        perm.swap(nd - 2, nd - 1);
        self.permute(&perm)
    }

    /// Gather slices along `axis`; indices may repeat.
    pub fn index_select(&self, axis: isize, indices: &[usize]) -> Result<Tensor> {
        let axis = normalize_axis(axis, self.ndim(), "index_select")?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::shape("index_select", format!("index {bad} >= {len}")));
        }
        let idx = indices.to_vec();
        let x = self.data();
        let mut data = Vec::with_capacity(outer * idx.len() * inner);
        for o in 0..outer {
            for &i in &idx {
                let s = (o * len + i) * inner;
                data.extend_from_slice(&x[s..s + inner]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = idx.len();
        let total = self.len();
        Tensor::from_op("index_select", shape, data, &[self], move |ctx| {
            let mut g = vec![0.0; total];
            let mut k = 0;
            for o in 0..outer {
                for &i in &idx {
                    let s = (o * len + i) * inner;
                    for v in &mut g[s..s + inner] {
                        *v += ctx.grad[k];
                        k += 1;
                    }
                }
            }
            vec![Some(g)]
        })
    }

    pub fn narrow(&self, axis: isize, start: usize, len: usize) -> Result<Tensor> {
        let idx: Vec<usize> = (start..start + len).collect();
        self.index_select(axis, &idx)
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: isize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no tensors"))?;
        let axis = normalize_axis(axis, first.ndim(), "concat")?;
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        for p in parts {
            let ok = p.ndim() == first.ndim()
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", format!("{:?} vs {:?}", p.shape(), first.shape())));
            }
            shape[axis] += p.shape()[axis];
        }
        let (outer, _, inner) = split_axis(&shape, axis);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                let s = o * l * inner;
                data.extend_from_slice(&p.data()[s..s + l * inner]);
            }
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::from_op("concat", shape, data, &refs, move |ctx| {
            let mut gs: Vec<Vec<f64>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let mut k = 0;
            for _ in 0..outer {
                for (g, &l) in gs.iter_mut().zip(&lens) {
                    g.extend_from_slice(&ctx.grad[k..k + l * inner]);
                    k += l * inner;
                }
            }
            gs.into_iter().map(Some).collect()
        })
    }

    /// Softmax along `axis`.
    pub fn softmax(&self, axis: isize) -> Result<Tensor> {
        let axis = normalize_axis(axis, self.ndim(), "softmax")?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut data = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let m = (0..len).map(|a| x[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for a in 0..len {
                    let e = (x[at(a)] - m).exp();
                    data[at(a)] = e;
                    s += e;
                }
                for a in 0..len {
                    data[at(a)] /= s;
                }
            }
        }
        Tensor::from_op("softmax", self.shape().to_vec(), data, &[self], move |ctx| {
            let y = ctx.output.data();
            let g = ctx.grad;
            let mut out = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |a: usize| (o * len + a) * inner + i;
                    let dot: f64 = (0..len).map(|a| g[at(a)] * y[at(a)]).sum();
                    for a in 0..len {
                        out[at(a)] = y[at(a)] * (g[at(a)] - dot);
                    }
                }
            }
            vec![Some(out)]
        })
    }

    /// Matrix product over the last two axes.
    ///
    /// Supported forms: `[.., m, k] x [k, n]` (leading axes of the left side
    /// are folded into rows), `[m, k] x [B.., k, n]` (left side shared across
    /// the batch) and `[B.., m, k] x [B.., k, n]` with identical batch axes.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}: rank < 2")));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}: inner dims differ")));
        }
        let mode = if sb.len() == 2 {
            MatmulMode::FoldLeft
        } else if sa.len() == 2 {
            MatmulMode::ShareLeft
        } else if sa[..sa.len() - 2] == sb[..sb.len() - 2] {
            MatmulMode::Batched
        } else {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}: batch dims differ")));
        };
        let (batch, shape) = match mode {
            MatmulMode::FoldLeft => {
                let mut s = sa.to_vec();
                *s.last_mut().unwrap() = n;
                (1, s)
            }
            _ => {
                let mut s = sb.to_vec();
                let l = s.len();
                s[l - 2] = m;
                (numel(&sb[..sb.len() - 2]), s)
            }
        };
        let rows = match mode {
            MatmulMode::FoldLeft => self.len() / k.max(1),
            _ => m,
        };
        if k == 0 {
            // degenerate inner dimension: result is all zeros
            let len = numel(&shape);
            return Tensor::from_op("matmul", shape, vec![0.0; len], &[self, other], |ctx| {
                vec![
                    Some(vec![0.0; ctx.inputs[0].len()]),
                    Some(vec![0.0; ctx.inputs[1].len()]),
                ]
            });
        }
        let mut data = vec![0.0; numel(&shape)];
        let a_stride = if matches!(mode, MatmulMode::Batched) { m * k } else { 0 };
        let (a, b) = (self.data(), other.data());
        for bi in 0..batch {
            gemm(
                MatView::dense(a, bi * a_stride, rows, k),
                MatView::dense(b, bi * k * n, k, n),
                &mut data,
                bi * rows * n,
                n,
                false,
            );
        }
        Tensor::from_op("matmul", shape, data, &[self, other], move |ctx| {
            let (a, b) = (ctx.inputs[0].data(), ctx.inputs[1].data());
            let g = ctx.grad;
            let ga = ctx.inputs[0].is_tracked().then(|| {
                let mut ga = vec![0.0; a.len()];
                for bi in 0..batch {
                    gemm(
                        MatView::dense(g, bi * rows * n, rows, n),
                        MatView::dense(b, bi * k * n, k, n).t(),
                        &mut ga,
                        bi * a_stride,
                        k,
                        !matches!(mode, MatmulMode::Batched) && bi > 0,
                    );
                }
                ga
            });
            let gb = ctx.inputs[1].is_tracked().then(|| {
                let mut gb = vec![0.0; b.len()];
                for bi in 0..batch {
                    gemm(
                        MatView::dense(a, bi * a_stride, rows, k).t(),
                        MatView::dense(g, bi * rows * n, rows, n),
                        &mut gb,
                        bi * k * n,
                        n,
                        false,
                    );
                }
                gb
            });
            vec![ga, gb]
        })
    }
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy)]
enum MatmulMode {
    FoldLeft,
    ShareLeft,
    Batched,
}
