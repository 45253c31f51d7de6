//! Inner loops for the dense kernels. Summation order is fixed so results are
//! bit-reproducible.
//!
//! Layouts: signals are `(length, channels)` row-major, conv weights are
//! `(kernel, in_channels, out_channels)`.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub len_in: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    #[inline]
    fn pad(&self) -> isize {
        ((self.kernel - 1) / 2) as isize
    }

    pub fn conv_len_out(&self) -> usize {
        self.len_in.div_ceil(self.stride)
    }

    pub fn tconv_len_out(&self) -> usize {
        self.len_in * self.stride
    }

    /// Edge-replicated source row for output `t`, tap `j`.
    #[inline]
    fn conv_src(&self, t: usize, j: usize) -> usize {
        let i = (t * self.stride) as isize + j as isize - self.pad();
        i.clamp(0, self.len_in as isize - 1) as usize
    }

    /// Destination row for input `t`, tap `j` of the transposed conv.
    #[inline]
    fn tconv_dst(&self, t: usize, j: usize) -> Option<usize> {
        let o = (t * self.stride) as isize + j as isize - self.pad();
        if o < 0 || o >= self.tconv_len_out() as isize {
            None
        } else {
            Some(o as usize)
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn conv1d_forward(g: ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let len_out = g.conv_len_out();
    let mut out = vec![0.0; len_out * g.c_out];
    for t in 0..len_out {
        let row = &mut out[t * g.c_out..(t + 1) * g.c_out];
        row.copy_from_slice(b);
        for j in 0..g.kernel {
            let src = g.conv_src(t, j);
            let xrow = &x[src * g.c_in..(src + 1) * g.c_in];
            let wblock = &w[j * g.c_in * g.c_out..(j + 1) * g.c_in * g.c_out];
            for (ci, &a) in xrow.iter().enumerate() {
                if a != 0.0 {
                    axpy(a, &wblock[ci * g.c_out..(ci + 1) * g.c_out], row);
                }
            }
        }
    }
    out
}

/// Accumulates adjoints of a conv1d into `dx`, `dw`, `db` (any may be skipped).
pub(crate) fn conv1d_backward(
    g: ConvGeom,
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let len_out = g.conv_len_out();
    if let Some(db) = db {
        for t in 0..len_out {
            for (d, &v) in db.iter_mut().zip(&dout[t * g.c_out..(t + 1) * g.c_out]) {
                *d += v;
            }
        }
    }
    for t in 0..len_out {
        let drow = &dout[t * g.c_out..(t + 1) * g.c_out];
        for j in 0..g.kernel {
            let src = g.conv_src(t, j);
            let base = j * g.c_in * g.c_out;
            if let Some(dw) = dw.as_deref_mut() {
                let xrow = &x[src * g.c_in..(src + 1) * g.c_in];
                for (ci, &a) in xrow.iter().enumerate() {
                    if a != 0.0 {
                        let off = base + ci * g.c_out;
                        axpy(a, drow, &mut dw[off..off + g.c_out]);
                    }
                }
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dxrow = &mut dx[src * g.c_in..(src + 1) * g.c_in];
                for (ci, d) in dxrow.iter_mut().enumerate() {
                    let off = base + ci * g.c_out;
                    *d += dot(&w[off..off + g.c_out], drow);
                }
            }
        }
    }
}

pub(crate) fn tconv1d_forward(g: ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let len_out = g.tconv_len_out();
    let mut out = vec![0.0; len_out * g.c_out];
    for row in out.chunks_exact_mut(g.c_out) {
        row.copy_from_slice(b);
    }
    for t in 0..g.len_in {
        let xrow = &x[t * g.c_in..(t + 1) * g.c_in];
        for j in 0..g.kernel {
            let Some(dst) = g.tconv_dst(t, j) else { continue };
            let row = &mut out[dst * g.c_out..(dst + 1) * g.c_out];
            let wblock = &w[j * g.c_in * g.c_out..(j + 1) * g.c_in * g.c_out];
            for (ci, &a) in xrow.iter().enumerate() {
                if a != 0.0 {
                    axpy(a, &wblock[ci * g.c_out..(ci + 1) * g.c_out], row);
                }
            }
        }
    }
    out
}

pub(crate) fn tconv1d_backward(
    g: ConvGeom,
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    if let Some(db) = db {
        for drow in dout.chunks_exact(g.c_out) {
            for (d, &v) in db.iter_mut().zip(drow) {
                *d += v;
            }
        }
    }
    for t in 0..g.len_in {
        for j in 0..g.kernel {
            let Some(dst) = g.tconv_dst(t, j) else { continue };
            let drow = &dout[dst * g.c_out..(dst + 1) * g.c_out];
            let base = j * g.c_in * g.c_out;
            if let Some(dw) = dw.as_deref_mut() {
                let xrow = &x[t * g.c_in..(t + 1) * g.c_in];
                for (ci, &a) in xrow.iter().enumerate() {
                    if a != 0.0 {
                        let off = base + ci * g.c_out;
                        axpy(a, drow, &mut dw[off..off + g.c_out]);
                    }
                }
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dxrow = &mut dx[t * g.c_in..(t + 1) * g.c_in];
                for (ci, d) in dxrow.iter_mut().enumerate() {
                    let off = base + ci * g.c_out;
                    *d += dot(&w[off..off + g.c_out], drow);
                }
            }
        }
    }
}

/// `(m, n) x (n, p)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            axpy(a[i * n + k], &b[k * p..(k + 1) * p], row);
        }
    }
    out
}

/// `a^T` for an `(m, n)` matrix.
pub(crate) fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}
