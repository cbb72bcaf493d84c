//! Layer primitives with explicit forward and backward passes.
//!
//! Activations are `[batch, channels, height, width]` buffers. Several
//! functions take a per-sample stride and channel offset so that dense
//! blocks can read and write slices of one shared concatenation buffer.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{gemm, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// He (fan-in) normal initialization.
pub fn he_normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z * std)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape").param()
}

/// Square-kernel convolution, stride 1, zero padding `kernel / 2`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    cols: Vec<T>,
    cols_hw: (usize, usize),
    dcols: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self::from_parts(
            he_normal(&[out_channels, in_channels, kernel, kernel], fan_in, rng),
            Tensor::zeros(&[out_channels]).param(),
        )
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        assert_eq!(weight.shape.len(), 4, "conv weight is [out, in, k, k]");
        assert_eq!(weight.shape[2], weight.shape[3], "square kernels only");
        assert_eq!(weight.shape[2] % 2, 1, "odd kernels only");
        assert_eq!(bias.shape, vec![weight.shape[0]]);
        Conv2d {
            in_channels: weight.shape[1],
            out_channels: weight.shape[0],
            kernel: weight.shape[2],
            weight,
            bias,
            cols: Vec::new(),
            cols_hw: (0, 0),
            dcols: Vec::new(),
        }
    }

    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }

    /// `[in·k·k, h·w]` patch matrix of one sample.
    fn im2col(&mut self, x: &[T], h: usize, w: usize) {
        let k = self.kernel;
        let pad = self.pad();
        let hw = h * w;
        // Padding cells are never written, so they stay zero as long as the
        // geometry is unchanged.
        let len = self.in_channels * k * k * hw;
        if self.cols.len() != len || self.cols_hw != (h, w) {
            self.cols.clear();
            self.cols.resize(len, T::zero());
            self.cols_hw = (h, w);
        }
        for ci in 0..self.in_channels {
            let plane = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * hw;
                    let dst = &mut self.cols[row..row + hw];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                        let dst_row = &mut dst[y * w..(y + 1) * w];
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                        if x0 < x1 {
                            let s0 = (x0 as isize + dx) as usize;
                            dst_row[x0..x1].copy_from_slice(&src_row[s0..s0 + (x1 - x0)]);
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a patch-matrix gradient back onto a `[in, h, w]` sample.
    fn col2im(&self, h: usize, w: usize, dx: &mut [T]) {
        let k = self.kernel;
        let pad = self.pad();
        let hw = h * w;
        for ci in 0..self.in_channels {
            let plane = &mut dx[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * hw;
                    let src = &self.dcols[row..row + hw];
                    let dy = ky as isize - pad;
                    let dxo = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let x0 = (-dxo).max(0) as usize;
                        let x1 = (w as isize - dxo).min(w as isize).max(0) as usize;
                        if x0 < x1 {
                            let d0 = sy as usize * w + (x0 as isize + dxo) as usize;
                            let dst = &mut plane[d0..d0 + (x1 - x0)];
                            for (d, &v) in dst.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// `x` is contiguous `[n, in, h, w]`. Sample `i` of the output is written
    /// at `out[i·out_stride + out_offset ..][..out·h·w]`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(&mut self, x: &[T], n: usize, h: usize, w: usize, out: &mut [T], out_stride: usize, out_offset: usize) {
        let hw = h * w;
        let kk = self.in_channels * self.kernel * self.kernel;
        let in_len = self.in_channels * hw;
        assert!(x.len() >= n * in_len, "conv input too small");
        for i in 0..n {
            let xs = &x[i * in_len..(i + 1) * in_len];
            let o = &mut out[i * out_stride + out_offset..i * out_stride + out_offset + self.out_channels * hw];
            for (c, chunk) in o.chunks_exact_mut(hw).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.data[c]);
            }
            if self.kernel == 1 {
                gemm(false, false, self.out_channels, hw, kk, T::one(), &self.weight.data, xs, T::one(), o);
            } else {
                self.im2col(xs, h, w);
                gemm(false, false, self.out_channels, hw, kk, T::one(), &self.weight.data, &self.cols, T::one(), o);
            }
        }
    }

    /// Accumulates weight/bias gradients and, when `dx` is given, overwrites
    /// it with the input gradient (contiguous `[n, in, h, w]`).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &mut self,
        x: &[T],
        n: usize,
        h: usize,
        w: usize,
        dy: &[T],
        dy_stride: usize,
        dy_offset: usize,
        mut dx: Option<&mut [T]>,
    ) {
        let hw = h * w;
        let kk = self.in_channels * self.kernel * self.kernel;
        let in_len = self.in_channels * hw;
        let out_len = self.out_channels * hw;
        for i in 0..n {
            let xs = &x[i * in_len..(i + 1) * in_len];
            let g = &dy[i * dy_stride + dy_offset..i * dy_stride + dy_offset + out_len];
            {
                let db = self.bias.grad_mut();
                for (c, chunk) in g.chunks_exact(hw).enumerate() {
                    db[c] += chunk.iter().copied().sum::<T>();
                }
            }
            if self.kernel == 1 {
                gemm(false, true, self.out_channels, kk, hw, T::one(), g, xs, T::one(), self.weight.grad_mut());
                if let Some(dx) = dx.as_deref_mut() {
                    let d = &mut dx[i * in_len..(i + 1) * in_len];
                    gemm(true, false, kk, hw, self.out_channels, T::one(), &self.weight.data, g, T::zero(), d);
                }
            } else {
                self.im2col(xs, h, w);
                let cols = std::mem::take(&mut self.cols);
                gemm(false, true, self.out_channels, kk, hw, T::one(), g, &cols, T::one(), self.weight.grad_mut());
                self.cols = cols;
                if let Some(dx) = dx.as_deref_mut() {
                    // overwritten by the beta = 0 product below
                    self.dcols.resize(kk * hw, T::zero());
                    let mut dcols = std::mem::take(&mut self.dcols);
                    gemm(true, false, kk, hw, self.out_channels, T::one(), &self.weight.data, g, T::zero(), &mut dcols);
                    self.dcols = dcols;
                    let d = &mut dx[i * in_len..(i + 1) * in_len];
                    d.iter_mut().for_each(|v| *v = T::zero());
                    self.col2im(h, w, d);
                }
            }
        }
    }
}

/// Per-channel batch normalization over `N×H×W`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    /// Weight of the previous running value in the update.
    pub momentum: f64,
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::full(&[channels], T::one()).param(),
            beta: Tensor::zeros(&[channels]).param(),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: 1e-5,
            momentum: 0.9,
            xhat: Vec::new(),
            inv_std: Vec::new(),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    /// Normalizes the first `channels` channels of every sample of `x`
    /// (sample stride `x_stride`) into contiguous `y`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(&mut self, x: &[T], n: usize, hw: usize, x_stride: usize, mode: Mode, y: &mut [T]) {
        let c = self.channels();
        assert!(y.len() >= n * c * hw);
        let m = (n * hw) as f64;
        if mode == Mode::Train {
            self.xhat.resize(n * c * hw, T::zero());
            self.inv_std.resize(c, T::zero());
        }
        for ch in 0..c {
            let plane = |i: usize| &x[i * x_stride + ch * hw..i * x_stride + (ch + 1) * hw];
            let (mean, inv_std) = match mode {
                Mode::Train => {
                    let mut sum = 0.0f64;
                    for i in 0..n {
                        sum += plane(i).iter().map(|v| v.to_f64().unwrap()).sum::<f64>();
                    }
                    let mean = sum / m;
                    let mut sq = 0.0f64;
                    for i in 0..n {
                        sq += plane(i)
                            .iter()
                            .map(|v| {
                                let d = v.to_f64().unwrap() - mean;
                                d * d
                            })
                            .sum::<f64>();
                    }
                    let var = sq / m;
                    let unbiased = if m > 1.0 { sq / (m - 1.0) } else { var };
                    let rm = &mut self.running_mean.data[ch];
                    *rm = T::of(self.momentum * rm.to_f64().unwrap() + (1.0 - self.momentum) * mean);
                    let rv = &mut self.running_var.data[ch];
                    *rv = T::of(self.momentum * rv.to_f64().unwrap() + (1.0 - self.momentum) * unbiased);
                    let inv = 1.0 / (var + self.eps).sqrt();
                    self.inv_std[ch] = T::of(inv);
                    (mean, inv)
                }
                Mode::Eval => {
                    let mean = self.running_mean.data[ch].to_f64().unwrap();
                    let var = self.running_var.data[ch].to_f64().unwrap();
                    (mean, 1.0 / (var + self.eps).sqrt())
                }
            };
            let (mean, inv) = (T::of(mean), T::of(inv_std));
            let (g, b) = (self.gamma.data[ch], self.beta.data[ch]);
            for i in 0..n {
                let src = plane(i);
                let off = (i * c + ch) * hw;
                let dst = &mut y[off..off + hw];
                if mode == Mode::Train {
                    let xh = &mut self.xhat[off..off + hw];
                    for ((d, h), &s) in dst.iter_mut().zip(xh.iter_mut()).zip(src) {
                        *h = (s - mean) * inv;
                        *d = g * *h + b;
                    }
                } else {
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = g * ((s - mean) * inv) + b;
                    }
                }
            }
        }
    }

    /// Given contiguous `dy`, accumulates parameter gradients and adds the
    /// input gradient into `dx` (sample stride `dx_stride`). Train mode only.
    pub fn backward(&mut self, dy: &[T], n: usize, hw: usize, dx: &mut [T], dx_stride: usize) {
        let c = self.channels();
        let m = T::of((n * hw) as f64);
        for ch in 0..c {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for i in 0..n {
                let off = (i * c + ch) * hw;
                for (&d, &h) in dy[off..off + hw].iter().zip(&self.xhat[off..off + hw]) {
                    let d = d.to_f64().unwrap();
                    sum_dy += d;
                    sum_dy_xhat += d * h.to_f64().unwrap();
                }
            }
            self.gamma.grad_mut()[ch] += T::of(sum_dy_xhat);
            self.beta.grad_mut()[ch] += T::of(sum_dy);
            let scale = self.gamma.data[ch] * self.inv_std[ch] / m;
            let (sd, sdx) = (T::of(sum_dy), T::of(sum_dy_xhat));
            for i in 0..n {
                let off = (i * c + ch) * hw;
                let dst = &mut dx[i * dx_stride + ch * hw..i * dx_stride + (ch + 1) * hw];
                for ((o, &d), &h) in dst.iter_mut().zip(&dy[off..off + hw]).zip(&self.xhat[off..off + hw]) {
                    *o += scale * (m * d - sd - h * sdx);
                }
            }
        }
    }
}

/// In-place ELU.
pub fn elu_forward<T: Scalar>(x: &mut [T], alpha: T) {
    for v in x.iter_mut() {
        if *v <= T::zero() {
            *v = alpha * (v.exp() - T::one());
        }
    }
}

/// Scales `dy` in place by the ELU derivative, recovered from the ELU output
/// `a`: 1 where `a > 0`, else `a + alpha`.
pub fn elu_backward<T: Scalar>(a: &[T], dy: &mut [T], alpha: T) {
    for (d, &o) in dy.iter_mut().zip(a) {
        if o <= T::zero() {
            *d *= o + alpha;
        }
    }
}

pub fn elu<T: Scalar>(x: T, alpha: T) -> T {
    if x > T::zero() {
        x
    } else {
        alpha * (x.exp() - T::one())
    }
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone, Default)]
pub struct Dropout<T> {
    pub rate: f64,
    mask: Vec<T>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64) -> Self {
        Dropout { rate, mask: Vec::new() }
    }

    /// Applies to `len` values per sample at `buf[i·stride + offset ..]`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        buf: &mut [T],
        n: usize,
        stride: usize,
        offset: usize,
        len: usize,
        mode: Mode,
        rng: &mut R,
    ) {
        if mode == Mode::Eval || self.rate <= 0.0 {
            self.mask.clear();
            return;
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        self.mask.clear();
        self.mask.reserve(n * len);
        for i in 0..n {
            for v in &mut buf[i * stride + offset..i * stride + offset + len] {
                let m = if rng.gen::<f64>() < self.rate { T::zero() } else { keep };
                *v *= m;
                self.mask.push(m);
            }
        }
    }

    pub fn backward(&self, dy: &mut [T], n: usize, stride: usize, offset: usize, len: usize) {
        if self.mask.is_empty() {
            return;
        }
        for i in 0..n {
            let g = &mut dy[i * stride + offset..i * stride + offset + len];
            for (d, &m) in g.iter_mut().zip(&self.mask[i * len..(i + 1) * len]) {
                *d *= m;
            }
        }
    }
}

/// 2x2 average pooling, stride 2; odd trailing rows/columns are dropped.
/// Input contiguous `[n, c, h, w]`; output sample `i` at `out[i·out_stride..]`.
#[allow(clippy::too_many_arguments)]
pub fn avg_pool2_forward<T: Scalar>(x: &[T], n: usize, c: usize, h: usize, w: usize, out: &mut [T], out_stride: usize) {
    let (oh, ow) = (h / 2, w / 2);
    let q = T::of(0.25);
    for i in 0..n {
        for ch in 0..c {
            let src = &x[(i * c + ch) * h * w..];
            let dst = &mut out[i * out_stride + ch * oh * ow..];
            for y in 0..oh {
                for xo in 0..ow {
                    let a = 2 * y * w + 2 * xo;
                    dst[y * ow + xo] = (src[a] + src[a + 1] + src[a + w] + src[a + w + 1]) * q;
                }
            }
        }
    }
}

/// Overwrites contiguous `dx` with the pooling input gradient.
#[allow(clippy::too_many_arguments)]
pub fn avg_pool2_backward<T: Scalar>(dy: &[T], dy_stride: usize, n: usize, c: usize, h: usize, w: usize, dx: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    let q = T::of(0.25);
    dx[..n * c * h * w].iter_mut().for_each(|v| *v = T::zero());
    for i in 0..n {
        for ch in 0..c {
            let g = &dy[i * dy_stride + ch * oh * ow..];
            let d = &mut dx[(i * c + ch) * h * w..];
            for y in 0..oh {
                for xo in 0..ow {
                    let v = g[y * ow + xo] * q;
                    let a = 2 * y * w + 2 * xo;
                    d[a] = v;
                    d[a + 1] = v;
                    d[a + w] = v;
                    d[a + w + 1] = v;
                }
            }
        }
    }
}

/// Fully connected layer `y = x Wᵀ + b`, weight `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[outputs, inputs]).param(),
            bias: Tensor::zeros(&[outputs]).param(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &[T], n: usize) -> Vec<T> {
        let (i, o) = (self.inputs(), self.outputs());
        let mut y: Vec<T> = (0..n).flat_map(|_| self.bias.data.iter().copied()).collect();
        gemm(false, true, n, o, i, T::one(), x, &self.weight.data, T::one(), &mut y);
        y
    }

    pub fn backward(&mut self, x: &[T], dy: &[T], n: usize) -> Vec<T> {
        let (i, o) = (self.inputs(), self.outputs());
        gemm(true, false, o, i, n, T::one(), dy, x, T::one(), self.weight.grad_mut());
        let db = self.bias.grad_mut();
        for row in dy.chunks_exact(o) {
            for (b, &d) in db.iter_mut().zip(row) {
                *b += d;
            }
        }
        let mut dx = vec![T::zero(); n * i];
        gemm(false, false, n, i, o, T::one(), dy, &self.weight.data, T::zero(), &mut dx);
        dx
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Mean cross-entropy over rows and its gradient `(softmax − onehot) / M`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], labels: &[usize], classes: usize) -> (f64, Vec<T>) {
    let m = labels.len();
    assert_eq!(logits.len(), m * classes, "logits are [batch, classes]");
    let mut grad = softmax(logits, classes);
    let mut loss = 0.0f64;
    let inv_m = T::of(1.0 / m as f64);
    for ((row, logit_row), &y) in grad.chunks_exact_mut(classes).zip(logits.chunks_exact(classes)).zip(labels) {
        // log-sum-exp form stays finite for saturated rows
        let max = logit_row.iter().map(|v| v.to_f64().unwrap()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logit_row.iter().map(|v| (v.to_f64().unwrap() - max).exp()).sum::<f64>().ln();
        loss += lse - logit_row[y].to_f64().unwrap();
        row[y] -= T::one();
        for v in row.iter_mut() {
            *v *= inv_m;
        }
    }
    (loss / m as f64, grad)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Direct six-loop convolution.
    fn conv_oracle(x: &[f64], w: &[f64], b: &[f64], n: usize, ci: usize, co: usize, h: usize, wd: usize, k: usize) -> Vec<f64> {
        let p = (k / 2) as isize;
        let mut y = vec![0.0; n * co * h * wd];
        for i in 0..n {
            for o in 0..co {
                for yy in 0..h {
                    for xx in 0..wd {
                        let mut acc = b[o];
                        for c in 0..ci {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = yy as isize + ky as isize - p;
                                    let sx = xx as isize + kx as isize - p;
                                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < wd as isize {
                                        acc += w[((o * ci + c) * k + ky) * k + kx]
                                            * x[((i * ci + c) * h + sy as usize) * wd + sx as usize];
                                    }
                                }
                            }
                        }
                        y[((i * co + o) * h + yy) * wd + xx] = acc;
                    }
                }
            }
        }
        y
    }

    fn conv(ci: usize, co: usize, k: usize, rng: &mut ChaCha8Rng) -> Conv2d<f64> {
        let w = Tensor::from_vec(&[co, ci, k, k], rand_vec(rng, co * ci * k * k)).unwrap().param();
        let b = Tensor::from_vec(&[co], rand_vec(rng, co)).unwrap().param();
        Conv2d::from_parts(w, b)
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let mut c = Conv2d::from_parts(
            Tensor::from_vec(&[1, 1, 3, 3], w).unwrap().param(),
            Tensor::zeros(&[1]).param(),
        );
        let x: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let mut y = vec![0.0; 20];
        c.forward(&x, 1, 4, 5, &mut y, 20, 0);
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = conv(2, 3, 3, &mut rng);
        let x = vec![0.0; 2 * 2 * 16];
        let mut y = vec![0.0; 2 * 3 * 16];
        c.forward(&x, 2, 4, 4, &mut y, 48, 0);
        for i in 0..2 {
            for o in 0..3 {
                assert!(y[(i * 3 + o) * 16..(i * 3 + o + 1) * 16].iter().all(|&v| v == c.bias.data[o]));
            }
        }
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(k, h, w) in &[(3usize, 5usize, 4usize), (1, 3, 3), (3, 1, 1), (3, 2, 7)] {
            let (n, ci, co) = (2, 3, 4);
            let mut c = conv(ci, co, k, &mut rng);
            let x = rand_vec(&mut rng, n * ci * h * w);
            let mut y = vec![0.0; n * co * h * w];
            c.forward(&x, n, h, w, &mut y, co * h * w, 0);
            let want = conv_oracle(&x, &c.weight.data, &c.bias.data, n, ci, co, h, w, k);
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    /// Loss = Σ r ⊙ conv(x); compares analytic and central-difference grads.
    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in [1usize, 3] {
            let (n, ci, co, h, w) = (2, 2, 3, 4, 3);
            let mut c = conv(ci, co, k, &mut rng);
            let x = rand_vec(&mut rng, n * ci * h * w);
            let r = rand_vec(&mut rng, n * co * h * w);
            let loss = |c: &mut Conv2d<f64>, x: &[f64]| {
                let mut y = vec![0.0; n * co * h * w];
                c.forward(x, n, h, w, &mut y, co * h * w, 0);
                y.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
            };
            let mut dx = vec![0.0; x.len()];
            c.backward(&x, n, h, w, &r, co * h * w, 0, Some(&mut dx));
            let eps = 1e-6;
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp[i] += eps;
                let mut xm = x.clone();
                xm[i] -= eps;
                let fd = (loss(&mut c, &xp) - loss(&mut c, &xm)) / (2.0 * eps);
                assert!((fd - dx[i]).abs() <= 1e-4 * fd.abs().max(1.0), "dx[{i}] {fd} vs {}", dx[i]);
            }
            let gw = c.weight.grad().to_vec();
            for i in 0..gw.len() {
                let orig = c.weight.data[i];
                c.weight.data[i] = orig + eps;
                let lp = loss(&mut c, &x);
                c.weight.data[i] = orig - eps;
                let lm = loss(&mut c, &x);
                c.weight.data[i] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                assert!((fd - gw[i]).abs() <= 1e-4 * fd.abs().max(1.0));
            }
            let gb = c.bias.grad().to_vec();
            for (o, g) in gb.iter().enumerate() {
                let want: f64 = (0..n).map(|i| r[(i * co + o) * h * w..(i * co + o + 1) * h * w].iter().sum::<f64>()).sum();
                assert!((g - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn batchnorm_train_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.beta.data = vec![0.5, -1.5];
        let (n, hw) = (4, 9);
        let x: Vec<f64> = rand_vec(&mut rng, n * 2 * hw).iter().map(|v| 3.0 * v + 2.0).collect();
        let mut y = vec![0.0; x.len()];
        bn.forward(&x, n, hw, 2 * hw, Mode::Train, &mut y);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..n).flat_map(|i| y[(i * 2 + ch) * hw..(i * 2 + ch + 1) * hw].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((mean - bn.beta.data[ch]).abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn batchnorm_standardized_input_passes_through() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        let x = vec![-1.0, 1.0, -1.0, 1.0];
        let mut y = vec![0.0; 4];
        bn.forward(&x, 2, 2, 2, Mode::Train, &mut y);
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-5);
        }
        // eval mode uses the running statistics: mean 0, var 0.9 + 0.1·(4/3)
        let mut z = vec![0.0; 4];
        bn.forward(&x, 2, 2, 2, Mode::Eval, &mut z);
        let rv: f64 = 0.9 + 0.1 * 4.0 / 3.0;
        assert!((z[1] - 1.0 / (rv + 1e-5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, c, hw) = (3, 2, 4);
        let mut bn = BatchNorm2d::<f64>::new(c);
        bn.gamma.data = vec![1.3, 0.7];
        bn.beta.data = vec![0.1, -0.2];
        let x = rand_vec(&mut rng, n * c * hw);
        let r = rand_vec(&mut rng, n * c * hw);
        let loss = |bn: &mut BatchNorm2d<f64>, x: &[f64]| {
            let mut y = vec![0.0; x.len()];
            bn.forward(x, n, hw, c * hw, Mode::Train, &mut y);
            y.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
        };
        loss(&mut bn, &x);
        let mut dx = vec![0.0; x.len()];
        bn.backward(&r, n, hw, &mut dx, c * hw);
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let fd = (loss(&mut bn, &xp) - loss(&mut bn, &xm)) / (2.0 * eps);
            assert!((fd - dx[i]).abs() <= 1e-4 * fd.abs().max(1e-2), "{fd} vs {}", dx[i]);
        }
        let gg = bn.gamma.grad().to_vec();
        for ch in 0..c {
            let orig = bn.gamma.data[ch];
            bn.gamma.data[ch] = orig + eps;
            let lp = loss(&mut bn, &x);
            bn.gamma.data[ch] = orig - eps;
            let lm = loss(&mut bn, &x);
            bn.gamma.data[ch] = orig;
            assert!(((lp - lm) / (2.0 * eps) - gg[ch]).abs() < 1e-6);
        }
    }

    #[test]
    fn elu_values_and_derivative() {
        assert_eq!(elu(0.0f64, 1.0), 0.0);
        assert_eq!(elu(2.0f64, 1.0), 2.0);
        assert!((elu(-1.0f64, 1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-12);
        let xs = [-2.0f64, -0.3, 0.4, 1.5];
        let mut a = xs.to_vec();
        elu_forward(&mut a, 1.0);
        let mut d = vec![1.0; 4];
        elu_backward(&a, &mut d, 1.0);
        for (x, g) in xs.iter().zip(&d) {
            let fd = (elu(x + 1e-6, 1.0) - elu(x - 1e-6, 1.0)) / 2e-6;
            assert!((fd - g).abs() < 1e-6);
        }
    }

    #[test]
    fn dropout_eval_identity_and_train_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = Dropout::<f64>::new(0.2);
        let mut x = vec![1.0; 10];
        d.forward(&mut x, 1, 10, 0, 10, Mode::Eval, &mut rng);
        assert!(x.iter().all(|&v| v == 1.0));
        let n = 100_000;
        let mut x = vec![1.0; n];
        d.forward(&mut x, 1, n, 0, n, Mode::Train, &mut rng);
        let mean = x.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!(x.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        let mut g = vec![1.0; n];
        d.backward(&mut g, 1, n, 0, n);
        assert_eq!(g, x);
    }

    #[test]
    fn pooling_forward_backward() {
        let x: Vec<f64> = (0..2 * 5 * 4).map(|v| v as f64).collect();
        let mut y = vec![0.0; 2 * 2 * 2];
        avg_pool2_forward(&x, 1, 2, 5, 4, &mut y, 8);
        assert_eq!(y[0], (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        let mut dx = vec![9.0; x.len()];
        avg_pool2_backward(&[1.0; 8], 8, 1, 2, 5, 4, &mut dx);
        assert_eq!(dx.iter().filter(|&&v| v == 0.25).count(), 32);
        assert!(dx[16..20].iter().all(|&v| v == 0.0)); // dropped fifth row
    }

    #[test]
    fn cross_entropy_values() {
        let (loss, grad) = softmax_cross_entropy(&[0.0f64; 3], &[1], 3);
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        assert!((grad[1] + 2.0 / 3.0).abs() < 1e-12);
        let (loss, _) = softmax_cross_entropy(&[50.0f64, 0.0, 0.0], &[0], 3);
        assert!(loss < 1e-8);
        let p = softmax(&[1.0f64, 2.0, 3.0, -1.0, 0.0, 800.0], 3);
        for row in p.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let logits = rand_vec(&mut rng, 4 * 5);
        let labels = [0, 3, 4, 1];
        let (_, g) = softmax_cross_entropy(&logits, &labels, 5);
        for i in 0..logits.len() {
            let mut p = logits.clone();
            p[i] += 1e-6;
            let mut m = logits.clone();
            m[i] -= 1e-6;
            let fd = (softmax_cross_entropy(&p, &labels, 5).0 - softmax_cross_entropy(&m, &labels, 5).0) / 2e-6;
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn linear_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut l = Linear::<f64>::zeros(3, 2);
        l.weight.data = rand_vec(&mut rng, 6);
        l.bias.data = vec![0.5, -0.5];
        let x = rand_vec(&mut rng, 2 * 3);
        let y = l.forward(&x, 2);
        assert!((y[0] - (l.weight.data[0] * x[0] + l.weight.data[1] * x[1] + l.weight.data[2] * x[2] + 0.5)).abs() < 1e-12);
        let dy = vec![1.0, 0.0, 0.0, 1.0];
        let dx = l.backward(&x, &dy, 2);
        assert_eq!(&dx[..3], &l.weight.data[..3]);
        assert_eq!(&l.weight.grad()[..3], &x[..3]);
        assert_eq!(l.bias.grad(), &[1.0, 1.0]);
    }
}

/// Named access to a layer's tensors (parameters and running buffers).
pub trait Module<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>);
    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>);
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), &self.gamma));
        out.push((format!("{prefix}.beta"), &self.beta));
        out.push((format!("{prefix}.running_mean"), &self.running_mean));
        out.push((format!("{prefix}.running_var"), &self.running_var));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
        out.push((format!("{prefix}.running_mean"), &mut self.running_mean));
        out.push((format!("{prefix}.running_var"), &mut self.running_var));
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}
