use std::rc::Rc;

use crate::graph::{Graph, Node, Op, Unary, Var};
use crate::tensor::{
    broadcast_binary, gemm, inverse_perm, permute, reduce_to, split_shape, ConvGeom, Tensor,
};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Silu => x * sigmoid(x),
            Unary::Gelu => 0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh()),
            Unary::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Unary::Relu => x.max(0.0),
            Unary::Tanh => x.tanh(),
            Unary::Square => x * x,
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Sqrt => 0.5 / y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Silu => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Unary::Gelu => {
                let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
                let th = u.tanh();
                let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
                0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
            }
            Unary::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Tanh => 1.0 - y * y,
            Unary::Square => 2.0 * x,
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let n = *x.shape().last().expect("softmax on a scalar");
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(n) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    Tensor::from_vec(out, x.shape())
}

fn log_softmax_rows(x: &Tensor) -> Tensor {
    let n = *x.shape().last().expect("log_softmax on a scalar");
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(n) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Tensor::from_vec(out, x.shape())
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Tensor {
    let k = *a.shape().last().expect("matmul lhs must have rank >= 1");
    assert_eq!(b.rank(), 2, "matmul rhs must be a matrix");
    assert_eq!(b.shape()[0], k, "matmul inner dims {:?} x {:?}", a.shape(), b.shape());
    let n = b.shape()[1];
    let rows = a.numel() / k.max(1);
    let mut out = vec![0.0; rows * n];
    gemm(rows, k, n, a.data(), k as isize, 1, b.data(), n as isize, 1, &mut out, 0.0);
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::from_vec(out, &shape)
}

fn bmm_dims(a: &Tensor, b: &Tensor) -> (usize, usize, usize, usize) {
    assert!(a.rank() == 3 && b.rank() == 3, "bmm needs rank-3 operands");
    let (g, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    assert_eq!(b.shape()[0], g, "bmm batch mismatch");
    assert_eq!(b.shape()[1], k, "bmm inner mismatch");
    (g, m, k, b.shape()[2])
}

// Method-style arithmetic reads better in long chains than operators on a borrowing handle.
#[allow(clippy::should_implement_trait)]
impl<'g> Var<'g> {
    fn unary(self, kind: Unary) -> Var<'g> {
        let x = self.graph.value_rc(self.id);
        let y = x.map(|v| kind.apply(v));
        self.derived(y, Op::Unary(self.id, kind), &[self.id])
    }

    fn derived(self, value: Tensor, op: Op, parents: &[usize]) -> Var<'g> {
        let rg = parents.iter().any(|&p| self.graph.requires_grad(p));
        self.graph.push(value, op, rg)
    }

    fn binary(self, other: Var<'g>, f: impl Fn(f64, f64) -> f64, op: Op) -> Var<'g> {
        assert!(std::ptr::eq(self.graph, other.graph), "variables from different graphs");
        let a = self.graph.value_rc(self.id);
        let b = self.graph.value_rc(other.id);
        let y = broadcast_binary(&a, &b, f);
        self.derived(y, op, &[self.id, other.id])
    }

    pub fn add(self, other: Var<'g>) -> Var<'g> {
        self.binary(other, |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'g>) -> Var<'g> {
        self.binary(other, |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'g>) -> Var<'g> {
        self.binary(other, |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn div(self, other: Var<'g>) -> Var<'g> {
        self.binary(other, |a, b| a / b, Op::Div(self.id, other.id))
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        let y = self.value().map(|v| v * c);
        self.derived(y, Op::Scale(self.id, c), &[self.id])
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        let y = self.value().map(|v| v + c);
        self.derived(y, Op::AddScalar(self.id), &[self.id])
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(Unary::Exp)
    }
    pub fn log(self) -> Var<'g> {
        self.unary(Unary::Log)
    }
    pub fn sqrt(self) -> Var<'g> {
        self.unary(Unary::Sqrt)
    }
    pub fn sigmoid(self) -> Var<'g> {
        self.unary(Unary::Sigmoid)
    }
    pub fn silu(self) -> Var<'g> {
        self.unary(Unary::Silu)
    }
    /// Tanh approximation.
    pub fn gelu(self) -> Var<'g> {
        self.unary(Unary::Gelu)
    }
    pub fn elu(self) -> Var<'g> {
        self.unary(Unary::Elu)
    }
    pub fn relu(self) -> Var<'g> {
        self.unary(Unary::Relu)
    }
    pub fn tanh(self) -> Var<'g> {
        self.unary(Unary::Tanh)
    }
    pub fn square(self) -> Var<'g> {
        self.unary(Unary::Square)
    }

    /// Sum over `axis`, keeping it with length 1.
    pub fn sum(self, axis: usize) -> Var<'g> {
        let x = self.graph.value_rc(self.id);
        let (outer, dim, inner) = x.split_at_axis(axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let src = &x.data()[(o * dim + d) * inner..][..inner];
                for (dst, s) in out[o * inner..][..inner].iter_mut().zip(src) {
                    *dst += s;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = 1;
        self.derived(
            Tensor::from_vec(out, &shape),
            Op::Sum { src: self.id, axis },
            &[self.id],
        )
    }

    pub fn mean(self, axis: usize) -> Var<'g> {
        let n = self.shape()[axis];
        self.sum(axis).scale(1.0 / n as f64)
    }

    /// Maximum over `axis` (kept with length 1); ties route the gradient to the first index.
    pub fn max(self, axis: usize) -> Var<'g> {
        let x = self.graph.value_rc(self.id);
        let (outer, dim, inner) = x.split_at_axis(axis);
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                for i in 0..inner {
                    let v = x.data()[(o * dim + d) * inner + i];
                    if v > out[o * inner + i] {
                        out[o * inner + i] = v;
                        arg[o * inner + i] = d;
                    }
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = 1;
        self.derived(
            Tensor::from_vec(out, &shape),
            Op::Max {
                src: self.id,
                axis,
                argmax: Rc::new(arg),
            },
            &[self.id],
        )
    }

    pub fn sum_all(self) -> Var<'g> {
        let s: f64 = self.value().data().iter().sum();
        self.derived(Tensor::scalar(s), Op::SumAll(self.id), &[self.id])
    }

    pub fn mean_all(self) -> Var<'g> {
        let n = self.value().numel();
        self.sum_all().scale(1.0 / n as f64)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        let y = self.to_tensor().reshape(shape);
        self.derived(y, Op::Reshape(self.id), &[self.id])
    }

    pub fn permute(self, perm: &[usize]) -> Var<'g> {
        let y = permute(&self.value(), perm);
        self.derived(
            y,
            Op::Permute {
                src: self.id,
                perm: perm.to_vec(),
            },
            &[self.id],
        )
    }

    /// Swaps two axes.
    pub fn transpose(self, a: usize, b: usize) -> Var<'g> {
        let mut perm: Vec<usize> = (0..self.shape().len()).collect();
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Var<'g>], axis: usize) -> Var<'g> {
        let first = parts.first().expect("concat of nothing");
        let graph = first.graph;
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| graph.value_rc(p.id)).collect();
        let mut shape = values[0].shape().to_vec();
        let mut total = 0;
        for v in &values {
            let mut s = v.shape().to_vec();
            total += s[axis];
            s[axis] = shape[axis];
            assert_eq!(s, shape, "concat shape mismatch");
        }
        shape[axis] = total;
        let (outer, _, inner) = split_shape(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in &values {
                let d = v.shape()[axis];
                out.extend_from_slice(&v.data()[o * d * inner..][..d * inner]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        first.derived(
            Tensor::from_vec(out, &shape),
            Op::Concat {
                srcs: ids.clone(),
                axis,
            },
            &ids,
        )
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g> {
        let x = self.graph.value_rc(self.id);
        let (outer, dim, inner) = x.split_at_axis(axis);
        assert!(start + len <= dim, "narrow out of range");
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&x.data()[(o * dim + start) * inner..][..len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        self.derived(
            Tensor::from_vec(out, &shape),
            Op::Narrow {
                src: self.id,
                axis,
                start,
            },
            &[self.id],
        )
    }

    /// `[..., M, K] × [K, N] → [..., M, N]`.
    pub fn matmul(self, rhs: Var<'g>) -> Var<'g> {
        let y = matmul_forward(&self.value(), &rhs.value());
        self.derived(y, Op::MatMul(self.id, rhs.id), &[self.id, rhs.id])
    }

    /// `[G, M, K] × [G, K, N] → [G, M, N]`.
    pub fn bmm(self, rhs: Var<'g>) -> Var<'g> {
        let a = self.graph.value_rc(self.id);
        let b = self.graph.value_rc(rhs.id);
        let (g, m, k, n) = bmm_dims(&a, &b);
        let mut out = vec![0.0; g * m * n];
        for i in 0..g {
            gemm(
                m,
                k,
                n,
                &a.data()[i * m * k..],
                k as isize,
                1,
                &b.data()[i * k * n..],
                n as isize,
                1,
                &mut out[i * m * n..][..m * n],
                0.0,
            );
        }
        self.derived(
            Tensor::from_vec(out, &[g, m, n]),
            Op::Bmm(self.id, rhs.id),
            &[self.id, rhs.id],
        )
    }

    /// Grouped 1-D convolution of `[B, C_in, L]` with weights `[C_out, C_in/groups, K]`.
    pub fn conv1d(
        self,
        weight: Var<'g>,
        stride: usize,
        pad_left: usize,
        pad_right: usize,
        groups: usize,
    ) -> Var<'g> {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 3, "conv1d input must be [B, C, L]");
        assert_eq!(ws.len(), 3, "conv1d weight must be [C_out, C_in/groups, K]");
        assert!(groups >= 1 && xs[1].is_multiple_of(groups) && ws[0].is_multiple_of(groups));
        assert_eq!(ws[1], xs[1] / groups, "conv1d channel mismatch");
        assert!(xs[2] + pad_left + pad_right >= ws[2], "kernel longer than padded input");
        let geom = ConvGeom {
            batch: xs[0],
            c_in: xs[1],
            len: xs[2],
            c_out: ws[0],
            kernel: ws[2],
            stride,
            pad_left,
            pad_right,
            groups,
        };
        let y = geom.forward(self.value().data(), weight.value().data());
        let shape = [geom.batch, geom.c_out, geom.out_len()];
        self.derived(
            Tensor::from_vec(y, &shape),
            Op::Conv1d {
                x: self.id,
                w: weight.id,
                geom,
            },
            &[self.id, weight.id],
        )
    }

    /// Softmax over the last axis.
    pub fn softmax(self) -> Var<'g> {
        let y = softmax_rows(&self.value());
        self.derived(y, Op::Softmax(self.id), &[self.id])
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(self) -> Var<'g> {
        let y = log_softmax_rows(&self.value());
        self.derived(y, Op::LogSoftmax(self.id), &[self.id])
    }

    /// Gathers slices along axis 0.
    pub fn index_select(self, index: &[usize]) -> Var<'g> {
        let x = self.graph.value_rc(self.id);
        let row = x.numel() / x.shape()[0];
        let mut out = Vec::with_capacity(index.len() * row);
        for &i in index {
            assert!(i < x.shape()[0], "index {i} out of range");
            out.extend_from_slice(&x.data()[i * row..][..row]);
        }
        let mut shape = x.shape().to_vec();
        shape[0] = index.len();
        self.derived(
            Tensor::from_vec(out, &shape),
            Op::IndexSelect {
                src: self.id,
                index: Rc::new(index.to_vec()),
            },
            &[self.id],
        )
    }
}

fn accum(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

pub(crate) fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |i: usize| nodes[i].value.as_ref();
    let rg = |i: usize| nodes[i].requires_grad;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if rg(*a) {
                accum(nodes, grads, *a, reduce_to(g, val(*a).shape()));
            }
            if rg(*b) {
                accum(nodes, grads, *b, reduce_to(g, val(*b).shape()));
            }
        }
        Op::Sub(a, b) => {
            if rg(*a) {
                accum(nodes, grads, *a, reduce_to(g, val(*a).shape()));
            }
            if rg(*b) {
                accum(nodes, grads, *b, reduce_to(&g.map(|v| -v), val(*b).shape()));
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            if rg(*a) {
                let t = broadcast_binary(g, vb, |x, y| x * y);
                accum(nodes, grads, *a, reduce_to(&t, va.shape()));
            }
            if rg(*b) {
                let t = broadcast_binary(g, va, |x, y| x * y);
                accum(nodes, grads, *b, reduce_to(&t, vb.shape()));
            }
        }
        Op::Div(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            if rg(*a) {
                let t = broadcast_binary(g, vb, |x, y| x / y);
                accum(nodes, grads, *a, reduce_to(&t, va.shape()));
            }
            if rg(*b) {
                // -g * a / b² = -g * y / b
                let y = val(id);
                let gy = broadcast_binary(g, y, |x, y| -x * y);
                let t = broadcast_binary(&gy, vb, |x, y| x / y);
                accum(nodes, grads, *b, reduce_to(&t, vb.shape()));
            }
        }
        Op::Scale(a, c) => accum(nodes, grads, *a, g.map(|v| v * c)),
        Op::AddScalar(a) => accum(nodes, grads, *a, g.clone()),
        Op::Unary(a, kind) => {
            let x = val(*a);
            let y = val(id);
            let data = g
                .data()
                .iter()
                .zip(x.data().iter().zip(y.data()))
                .map(|(gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                .collect();
            accum(nodes, grads, *a, Tensor::from_vec(data, x.shape()));
        }
        Op::Sum { src, axis } => {
            let x = val(*src);
            let (outer, dim, inner) = x.split_at_axis(*axis);
            let mut out = vec![0.0; x.numel()];
            for o in 0..outer {
                for d in 0..dim {
                    out[(o * dim + d) * inner..][..inner]
                        .copy_from_slice(&g.data()[o * inner..][..inner]);
                }
            }
            accum(nodes, grads, *src, Tensor::from_vec(out, x.shape()));
        }
        Op::Max { src, axis, argmax } => {
            let x = val(*src);
            let (outer, dim, inner) = x.split_at_axis(*axis);
            let mut out = vec![0.0; x.numel()];
            for o in 0..outer {
                for i in 0..inner {
                    let d = argmax[o * inner + i];
                    out[(o * dim + d) * inner + i] = g.data()[o * inner + i];
                }
            }
            accum(nodes, grads, *src, Tensor::from_vec(out, x.shape()));
        }
        Op::SumAll(a) => accum(nodes, grads, *a, Tensor::full(val(*a).shape(), g.item())),
        Op::Reshape(a) => accum(nodes, grads, *a, g.clone().reshape(val(*a).shape())),
        Op::Permute { src, perm } => accum(nodes, grads, *src, permute(g, &inverse_perm(perm))),
        Op::Concat { srcs, axis } => {
            let (outer, total, inner) = split_shape(g.shape(), *axis);
            let mut offset = 0;
            for &s in srcs {
                let shape = val(s).shape().to_vec();
                let d = shape[*axis];
                if rg(s) {
                    let mut out = Vec::with_capacity(outer * d * inner);
                    for o in 0..outer {
                        out.extend_from_slice(&g.data()[(o * total + offset) * inner..][..d * inner]);
                    }
                    accum(nodes, grads, s, Tensor::from_vec(out, &shape));
                }
                offset += d;
            }
        }
        Op::Narrow { src, axis, start } => {
            let x = val(*src);
            let (outer, dim, inner) = x.split_at_axis(*axis);
            let len = g.shape()[*axis];
            let mut out = vec![0.0; x.numel()];
            for o in 0..outer {
                out[(o * dim + start) * inner..][..len * inner]
                    .copy_from_slice(&g.data()[o * len * inner..][..len * inner]);
            }
            accum(nodes, grads, *src, Tensor::from_vec(out, x.shape()));
        }
        Op::MatMul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let k = vb.shape()[0];
            let n = vb.shape()[1];
            let rows = va.numel() / k.max(1);
            if rg(*a) {
                let mut da = vec![0.0; va.numel()];
                gemm(rows, n, k, g.data(), n as isize, 1, vb.data(), 1, n as isize, &mut da, 0.0);
                accum(nodes, grads, *a, Tensor::from_vec(da, va.shape()));
            }
            if rg(*b) {
                let mut db = vec![0.0; vb.numel()];
                gemm(k, rows, n, va.data(), 1, k as isize, g.data(), n as isize, 1, &mut db, 0.0);
                accum(nodes, grads, *b, Tensor::from_vec(db, vb.shape()));
            }
        }
        Op::Bmm(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let (gn, m, k, n) = bmm_dims(va, vb);
            if rg(*a) {
                let mut da = vec![0.0; va.numel()];
                for i in 0..gn {
                    gemm(
                        m,
                        n,
                        k,
                        &g.data()[i * m * n..],
                        n as isize,
                        1,
                        &vb.data()[i * k * n..],
                        1,
                        n as isize,
                        &mut da[i * m * k..][..m * k],
                        0.0,
                    );
                }
                accum(nodes, grads, *a, Tensor::from_vec(da, va.shape()));
            }
            if rg(*b) {
                let mut db = vec![0.0; vb.numel()];
                for i in 0..gn {
                    gemm(
                        k,
                        m,
                        n,
                        &va.data()[i * m * k..],
                        1,
                        k as isize,
                        &g.data()[i * m * n..],
                        n as isize,
                        1,
                        &mut db[i * k * n..][..k * n],
                        0.0,
                    );
                }
                accum(nodes, grads, *b, Tensor::from_vec(db, vb.shape()));
            }
        }
        Op::Conv1d { x, w, geom } => {
            let (vx, vw) = (val(*x), val(*w));
            let (dx, dw) = geom.backward(vx.data(), vw.data(), g.data());
            if rg(*x) {
                accum(nodes, grads, *x, Tensor::from_vec(dx, vx.shape()));
            }
            if rg(*w) {
                accum(nodes, grads, *w, Tensor::from_vec(dw, vw.shape()));
            }
        }
        Op::Softmax(a) => {
            let y = val(id);
            let n = *y.shape().last().unwrap();
            let mut out = vec![0.0; y.numel()];
            for ((o, yr), gr) in out
                .chunks_mut(n)
                .zip(y.data().chunks(n))
                .zip(g.data().chunks(n))
            {
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    o[j] = yr[j] * (gr[j] - dot);
                }
            }
            accum(nodes, grads, *a, Tensor::from_vec(out, y.shape()));
        }
        Op::LogSoftmax(a) => {
            let y = val(id);
            let n = *y.shape().last().unwrap();
            let mut out = vec![0.0; y.numel()];
            for ((o, yr), gr) in out
                .chunks_mut(n)
                .zip(y.data().chunks(n))
                .zip(g.data().chunks(n))
            {
                let total: f64 = gr.iter().sum();
                for j in 0..n {
                    o[j] = gr[j] - yr[j].exp() * total;
                }
            }
            accum(nodes, grads, *a, Tensor::from_vec(out, y.shape()));
        }
        Op::IndexSelect { src, index } => {
            let x = val(*src);
            let row = x.numel() / x.shape()[0];
            let mut out = vec![0.0; x.numel()];
            for (k, &i) in index.iter().enumerate() {
                for (d, s) in out[i * row..][..row].iter_mut().zip(&g.data()[k * row..][..row]) {
                    *d += s;
                }
            }
            accum(nodes, grads, *src, Tensor::from_vec(out, x.shape()));
        }
    }
}

impl Graph {
    /// Shorthand for a constant scalar broadcastable against anything.
    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }
}
