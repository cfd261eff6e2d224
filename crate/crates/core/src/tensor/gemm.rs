//! Strided matrix products backed by `matrixmultiply`.

/// A view of a row-major buffer as an `rows x cols` matrix with arbitrary
/// strides, so transposes cost nothing.
#[derive(Clone, Copy)]
pub(crate) struct MatView<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> MatView<'a> {
    pub fn dense(data: &'a [f64], offset: usize, rows: usize, cols: usize) -> Self {
        MatView {
            data,
            offset,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        MatView {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn last_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return self.offset;
        }
        self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
    }
}

/// `out[off..] (+)= a * b`, with `out` an `a.rows x b.cols` matrix of row
/// stride `out_rs` (column stride 1). Accumulates when `accumulate` is set.
pub(crate) fn gemm(a: MatView<'_>, b: MatView<'_>, out: &mut [f64], out_off: usize, out_rs: usize, accumulate: bool) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            for i in 0..m {
                out[out_off + i * out_rs..out_off + i * out_rs + n].fill(0.0);
            }
        }
        return;
    }
    assert!(a.last_index() < a.data.len(), "gemm lhs out of bounds");
    assert!(b.last_index() < b.data.len(), "gemm rhs out of bounds");
    assert!(out_off + (m - 1) * out_rs + n <= out.len(), "gemm output out of bounds");
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: every index touched by dgemm lies within the bounds asserted
    // above, and `out` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            out.as_mut_ptr().add(out_off),
            out_rs as isize,
            1,
        );
    }
}
