use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::{gaussian_cdf, gaussian_pdf, round_half_away, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    MatMul(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    ConvTranspose1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    Relu(Var),
    Exp(Var),
    Log(Var),
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    Sum(Var),
    Mean(Var),
    Square(Var),
    GaussianCdf(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    SteRound(Var),
    BroadcastRows(Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Records primitive operations in topological order so the adjoint pass
/// can replay them backwards.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: one gradient buffer per node that requires grad.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Result<&Tensor> {
        self.grads
            .get(v.0)
            .and_then(Option::as_ref)
            .ok_or(TensorError::Detached(v.0))
    }

    pub fn take(&mut self, v: Var) -> Result<Tensor> {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .ok_or(TensorError::Detached(v.0))
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copy of `v` cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, node, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, node: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(value, node, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::MulScalar(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, libm::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, libm::log, Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp { x: a, lo, hi })
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn gaussian_cdf(&mut self, a: Var) -> Var {
        self.unary(a, gaussian_cdf, Op::GaussianCdf(a))
    }

    /// Round half away from zero forward, identity Jacobian backward.
    pub fn ste_round(&mut self, a: Var) -> Var {
        self.unary(a, round_half_away, Op::SteRound(a))
    }

    /// Adds i.i.d. `U(-0.5, 0.5)` noise; the noise itself is a constant.
    pub fn add_uniform_noise<R: Rng + ?Sized>(&mut self, a: Var, rng: &mut R) -> Var {
        let shape = self.shape(a).to_vec();
        let n = self.value(a).len();
        let noise: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let noise = self.constant(Tensor { shape, data: noise });
        self.add(a, noise).expect("noise shape matches input")
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, n, p) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, n, p);
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor {
                shape: vec![m, p],
                data,
            },
            Op::MatMul(a, b),
            rg,
        ))
    }

    fn conv_geom(&self, op: &'static str, x: Var, w: Var, b: Var, stride: usize) -> Result<ConvGeom> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[1] {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        if sb != [sw[2]] {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sw.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        if stride == 0 {
            return Err(TensorError::InvalidArgument {
                op,
                reason: "stride must be positive".into(),
            });
        }
        Ok(ConvGeom {
            len_in: sx[0],
            c_in: sx[1],
            c_out: sw[2],
            kernel: sw[0],
            stride,
        })
    }

    /// Strided 1-D convolution over an `(L, C_in)` signal with weights
    /// `(k, C_in, C_out)`; "same" padding by edge replication, output length
    /// `ceil(L / stride)`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let geom = self.conv_geom("conv1d", x, w, b, stride)?;
        let data = kernels::conv1d_forward(geom, self.value(x).data(), self.value(w).data(), self.value(b).data());
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(
            Tensor {
                shape: vec![geom.conv_len_out(), geom.c_out],
                data,
            },
            Op::Conv1d { x, w, b, geom },
            rg,
        ))
    }

    /// Transposed 1-D convolution; output length `L * stride`, taps falling
    /// outside the output are dropped.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let geom = self.conv_geom("conv_transpose1d", x, w, b, stride)?;
        let data = kernels::tconv1d_forward(geom, self.value(x).data(), self.value(w).data(), self.value(b).data());
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(
            Tensor {
                shape: vec![geom.tconv_len_out(), geom.c_out],
                data,
            },
            Op::ConvTranspose1d { x, w, b, geom },
            rg,
        ))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidArgument {
                op: "concat",
                reason: format!("axis {axis} out of range for {base:?}"),
            });
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let d = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                reason: format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
            });
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * dim + start) * inner;
            data.extend_from_slice(&src[off..off + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor {
                shape: out_shape,
                data,
            },
            Op::Slice { x, axis, start },
            rg,
        ))
    }

    /// Repeats a `(C,)` vector into `rows` rows of an `(rows, C)` matrix.
    pub fn broadcast_rows(&mut self, v: Var, rows: usize) -> Result<Var> {
        let t = self.value(v);
        if t.shape().len() != 1 || rows == 0 {
            return Err(TensorError::InvalidArgument {
                op: "broadcast_rows",
                reason: format!("expected a vector and rows > 0, got {:?} x {rows}", t.shape()),
            });
        }
        let c = t.len();
        let mut data = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            data.extend_from_slice(t.data());
        }
        let rg = self.rg(&[v]);
        Ok(self.push(
            Tensor {
                shape: vec![rows, c],
                data,
            },
            Op::BroadcastRows(v),
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].requires_grad).map(|data| Tensor {
                    shape: self.nodes[i].value.shape().to_vec(),
                    data,
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]).as_mut_slice())
    }

    fn each(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], f: impl Fn(usize, f64) -> f64) {
        if let Some(dst) = self.slot(grads, v) {
            for (i, (d, &gi)) in dst.iter_mut().zip(g).enumerate() {
                *d += f(i, gi);
            }
        }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.each(grads, a, g, |_, gi| gi);
                self.each(grads, b, g, |_, gi| gi);
            }
            Op::Sub(a, b) => {
                self.each(grads, a, g, |_, gi| gi);
                self.each(grads, b, g, |_, gi| -gi);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(a), val(b));
                self.each(grads, a, g, |i, gi| gi * vb[i]);
                self.each(grads, b, g, |i, gi| gi * va[i]);
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(a), val(b));
                self.each(grads, a, g, |i, gi| gi / vb[i]);
                self.each(grads, b, g, |i, gi| -gi * va[i] / (vb[i] * vb[i]));
            }
            Op::AddScalar(a) | Op::SteRound(a) => self.each(grads, a, g, |_, gi| gi),
            Op::MulScalar(a, s) => self.each(grads, a, g, |_, gi| gi * s),
            Op::Relu(a) => {
                let va = val(a);
                self.each(grads, a, g, |i, gi| if va[i] > 0.0 { gi } else { 0.0 });
            }
            Op::Exp(a) => {
                let y = out.data();
                self.each(grads, a, g, |i, gi| gi * y[i]);
            }
            Op::Log(a) => {
                let va = val(a);
                self.each(grads, a, g, |i, gi| gi / va[i]);
            }
            Op::Clamp { x, lo, hi } => {
                let vx = val(x);
                self.each(grads, x, g, |i, gi| if vx[i] >= lo && vx[i] <= hi { gi } else { 0.0 });
            }
            Op::Square(a) => {
                let va = val(a);
                self.each(grads, a, g, |i, gi| 2.0 * va[i] * gi);
            }
            Op::GaussianCdf(a) => {
                let va = val(a);
                self.each(grads, a, g, |i, gi| gi * gaussian_pdf(va[i]));
            }
            Op::Sum(a) => self.each(grads, a, &vec![g[0]; self.nodes[a.0].value.len()], |_, gi| gi),
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len();
                let gi = g[0] / n as f64;
                self.each(grads, a, &vec![gi; n], |_, gi| gi);
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (m, n, p) = (sa[0], sa[1], sb[1]);
                if self.requires_grad(a) {
                    let bt = kernels::transpose(val(b), n, p);
                    let da = kernels::matmul(g, &bt, m, p, n);
                    self.each(grads, a, &da, |_, gi| gi);
                }
                if self.requires_grad(b) {
                    let at = kernels::transpose(val(a), m, n);
                    let db = kernels::matmul(&at, g, n, m, p);
                    self.each(grads, b, &db, |_, gi| gi);
                }
            }
            Op::Conv1d { x, w, b, geom } | Op::ConvTranspose1d { x, w, b, geom } => {
                let transposed = matches!(op, Op::ConvTranspose1d { .. });
                let mut dx = self.requires_grad(x).then(|| vec![0.0; self.nodes[x.0].value.len()]);
                let mut dw = self.requires_grad(w).then(|| vec![0.0; self.nodes[w.0].value.len()]);
                let mut db = self.requires_grad(b).then(|| vec![0.0; geom.c_out]);
                let backward = if transposed {
                    kernels::tconv1d_backward
                } else {
                    kernels::conv1d_backward
                };
                backward(geom, val(x), val(w), g, dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                if let Some(dx) = dx {
                    self.each(grads, x, &dx, |_, gi| gi);
                }
                if let Some(dw) = dw {
                    self.each(grads, w, &dw, |_, gi| gi);
                }
                if let Some(db) = db {
                    self.each(grads, b, &db, |_, gi| gi);
                }
            }
            Op::Concat { ref parts, axis } => {
                let (outer, total, inner) = split_axis(out.shape(), axis);
                let mut offset = 0;
                for &p in parts {
                    let d = self.nodes[p.0].value.shape()[axis];
                    if let Some(dst) = self.slot(grads, p) {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + d) * inner];
                            for (a, &s) in dst[o * d * inner..(o + 1) * d * inner].iter_mut().zip(src) {
                                *a += s;
                            }
                        }
                    }
                    offset += d;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, dim, inner) = split_axis(self.nodes[x.0].value.shape(), axis);
                let len = out.shape()[axis];
                if let Some(dst) = self.slot(grads, x) {
                    for o in 0..outer {
                        let off = (o * dim + start) * inner;
                        for (a, &s) in dst[off..off + len * inner].iter_mut().zip(&g[o * len * inner..(o + 1) * len * inner]) {
                            *a += s;
                        }
                    }
                }
            }
            Op::BroadcastRows(v) => {
                let c = self.nodes[v.0].value.len();
                if let Some(dst) = self.slot(grads, v) {
                    for row in g.chunks_exact(c) {
                        for (a, &s) in dst.iter_mut().zip(row) {
                            *a += s;
                        }
                    }
                }
            }
        }
    }
}
