use std::fmt;

/// Dense row-major `f64` array.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?} {:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?} [{} elements]", self.shape, self.data.len())
        }
    }
}

impl Tensor {
    /// Panics when `data.len()` disagrees with `shape`.
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Self {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "data length does not match shape {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            self.data.len(),
            shape.iter().product::<usize>(),
            "cannot reshape {:?} into {shape:?}",
            self.shape
        );
        self.shape = shape.to_vec();
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(outer, dim, inner)` sizes around `axis`.
    pub(crate) fn split_at_axis(&self, axis: usize) -> (usize, usize, usize) {
        split_shape(&self.shape, axis)
    }
}

pub(crate) fn split_shape(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Numpy-style broadcast of two shapes, or `None` when incompatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside the broadcast `out` shape (0 on broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let offset = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

pub(crate) fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_vec(data, &a.shape);
    }
    let out_shape = broadcast_shape(&a.shape, &b.shape)
        .unwrap_or_else(|| panic!("shapes {:?} and {:?} do not broadcast", a.shape, b.shape));
    let n: usize = out_shape.iter().product();
    // Fast path: b repeats along the leading axes of a.
    if out_shape == a.shape && b.numel() > 0 && a.shape.ends_with(&b.shape) {
        let nb = b.numel();
        let data = a
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, b.data[i % nb]))
            .collect();
        return Tensor::from_vec(data, &out_shape);
    }
    let sa = broadcast_strides(&a.shape, &out_shape);
    let sb = broadcast_strides(&b.shape, &out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(f(a.data[oa], b.data[ob]));
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            oa -= sa[ax] * idx[ax];
            ob -= sb[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Tensor::from_vec(data, &out_shape)
}

/// Sums `grad` (of a broadcast output shape) back down to `shape`.
pub(crate) fn reduce_to(grad: &Tensor, shape: &[usize]) -> Tensor {
    if grad.shape == shape {
        return grad.clone();
    }
    let out_shape = grad.shape.clone();
    let n_target: usize = shape.iter().product();
    if out_shape.ends_with(shape) {
        let mut data = vec![0.0; n_target];
        for (i, v) in grad.data.iter().enumerate() {
            data[i % n_target] += v;
        }
        return Tensor::from_vec(data, shape);
    }
    let st = broadcast_strides(shape, &out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut o = 0usize;
    let mut data = vec![0.0; n_target];
    for v in &grad.data {
        data[o] += v;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            o += st[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            o -= st[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Tensor::from_vec(data, shape)
}

pub(crate) fn permute(t: &Tensor, perm: &[usize]) -> Tensor {
    let rank = t.rank();
    assert_eq!(perm.len(), rank, "permutation rank mismatch");
    let in_strides = strides(&t.shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| t.shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = t.numel();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        data.push(t.data[off]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= src_strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Tensor::from_vec(data, &out_shape)
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// `c (m×n) += a (m×k) · b (k×n)` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    // SAFETY: callers pass slices that cover the strided extents; c is m×n row-major.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a grouped 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
}

impl ConvGeom {
    pub fn out_len(&self) -> usize {
        (self.len + self.pad_left + self.pad_right - self.kernel) / self.stride + 1
    }

    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    /// Column matrix `[cin_g*kernel, out_len]` for one batch item and group.
    fn im2col(&self, x: &[f64], b: usize, g: usize, cols: &mut [f64]) {
        let lo = self.out_len();
        let cin_g = self.cin_g();
        for ci in 0..cin_g {
            let row_base = &x[(b * self.c_in + g * cin_g + ci) * self.len..][..self.len];
            for k in 0..self.kernel {
                let dst = &mut cols[(ci * self.kernel + k) * lo..][..lo];
                for (o, d) in dst.iter_mut().enumerate() {
                    let pos = (o * self.stride + k) as isize - self.pad_left as isize;
                    *d = if pos >= 0 && (pos as usize) < self.len {
                        row_base[pos as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], b: usize, g: usize, dx: &mut [f64]) {
        let lo = self.out_len();
        let cin_g = self.cin_g();
        for ci in 0..cin_g {
            let row = &mut dx[(b * self.c_in + g * cin_g + ci) * self.len..][..self.len];
            for k in 0..self.kernel {
                let src = &cols[(ci * self.kernel + k) * lo..][..lo];
                for (o, s) in src.iter().enumerate() {
                    let pos = (o * self.stride + k) as isize - self.pad_left as isize;
                    if pos >= 0 && (pos as usize) < self.len {
                        row[pos as usize] += s;
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let lo = self.out_len();
        let (cin_g, cout_g) = (self.cin_g(), self.cout_g());
        let kk = cin_g * self.kernel;
        let mut out = vec![0.0; self.batch * self.c_out * lo];
        let mut cols = vec![0.0; kk * lo];
        for b in 0..self.batch {
            for g in 0..self.groups {
                self.im2col(x, b, g, &mut cols);
                let wg = &w[g * cout_g * kk..][..cout_g * kk];
                let og = &mut out[(b * self.c_out + g * cout_g) * lo..][..cout_g * lo];
                gemm(cout_g, kk, lo, wg, kk as isize, 1, &cols, lo as isize, 1, og, 0.0);
            }
        }
        out
    }

    /// Returns `(dx, dw)` for upstream gradient `dy`.
    pub fn backward(&self, x: &[f64], w: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lo = self.out_len();
        let (cin_g, cout_g) = (self.cin_g(), self.cout_g());
        let kk = cin_g * self.kernel;
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let mut cols = vec![0.0; kk * lo];
        let mut dcols = vec![0.0; kk * lo];
        for b in 0..self.batch {
            for g in 0..self.groups {
                self.im2col(x, b, g, &mut cols);
                let wg = &w[g * cout_g * kk..][..cout_g * kk];
                let dyg = &dy[(b * self.c_out + g * cout_g) * lo..][..cout_g * lo];
                // dW_g += dY_g · colsᵀ
                let dwg = &mut dw[g * cout_g * kk..][..cout_g * kk];
                gemm(cout_g, lo, kk, dyg, lo as isize, 1, &cols, 1, lo as isize, dwg, 1.0);
                // dcols = W_gᵀ · dY_g
                gemm(kk, cout_g, lo, wg, 1, kk as isize, dyg, lo as isize, 1, &mut dcols, 0.0);
                self.col2im(&dcols, b, g, &mut dx);
            }
        }
        (dx, dw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3], &[3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[2, 1, 4], &[3, 1]), Some(vec![2, 3, 4]));
        assert_eq!(broadcast_shape(&[2, 3], &[2]), None);
    }

    #[test]
    fn broadcast_middle_axis_matches_naive() {
        let a = Tensor::from_fn(&[2, 3, 4], |i| i as f64);
        let b = Tensor::from_fn(&[2, 1, 4], |i| 100.0 * i as f64);
        let c = broadcast_binary(&a, &b, |x, y| x + y);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    let want = a.data()[i * 12 + j * 4 + k] + b.data()[i * 4 + k];
                    assert_eq!(c.data()[i * 12 + j * 4 + k], want);
                }
            }
        }
        let r = reduce_to(&c, &[2, 1, 4]);
        assert_eq!(r.shape(), &[2, 1, 4]);
        let expect: f64 = (0..3).map(|j| c.data()[j * 4]).sum();
        assert_eq!(r.data()[0], expect);
    }

    #[test]
    fn permute_transposes() {
        let a = Tensor::from_fn(&[2, 3], |i| i as f64);
        let t = permute(&a, &[1, 0]);
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        assert_eq!(permute(&t, &inverse_perm(&[1, 0])), a);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let geom = ConvGeom {
            batch: 2,
            c_in: 4,
            len: 9,
            c_out: 6,
            kernel: 3,
            stride: 2,
            pad_left: 1,
            pad_right: 1,
            groups: 2,
        };
        let x: Vec<f64> = (0..2 * 4 * 9).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let w: Vec<f64> = (0..6 * 2 * 3).map(|i| ((i * 5) % 7) as f64 - 3.0).collect();
        let y = geom.forward(&x, &w);
        let lo = geom.out_len();
        assert_eq!(lo, 5);
        for b in 0..2 {
            for co in 0..6 {
                let g = co / 3;
                for o in 0..lo {
                    let mut s = 0.0;
                    for ci in 0..2 {
                        for k in 0..3 {
                            let pos = (o * 2 + k) as isize - 1;
                            if (0..9).contains(&pos) {
                                s += w[(co * 2 + ci) * 3 + k]
                                    * x[(b * 4 + g * 2 + ci) * 9 + pos as usize];
                            }
                        }
                    }
                    assert_eq!(y[(b * 6 + co) * lo + o], s);
                }
            }
        }
    }
}
