//! Forward and backward kernels on plain tensors. The tape in `graph` records
//! which of these ran; they are also usable directly for inference-only code.

use super::{Real, Result, Shape, Tensor, TensorError};

/// Geometry of a 2-D convolution. Padding is (rows, cols) so that the 1x3 and
/// 3x1 strip convolutions can pad one axis only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kh: usize,
    pub kw: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub pad: (usize, usize),
}

impl ConvGeom {
    pub fn of(weight: Shape, stride: usize, pad: (usize, usize)) -> Self {
        Self {
            kh: weight.batch,
            kw: weight.height,
            c_in: weight.width,
            c_out: weight.channels,
            stride,
            pad,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.channels != self.c_in {
            return Err(TensorError::Shape(format!(
                "conv2d expects {} input channels, got {} (input {})",
                self.c_in, input.channels, input
            )));
        }
        if self.stride == 0 {
            return Err(TensorError::Shape("conv2d stride must be >= 1".into()));
        }
        let out = |dim: usize, pad: usize, k: usize| -> Result<usize> {
            let padded = dim + 2 * pad;
            if padded < k {
                return Err(TensorError::Shape(format!(
                    "conv2d kernel {k} exceeds padded extent {padded}"
                )));
            }
            Ok((padded - k) / self.stride + 1)
        };
        Ok(Shape::new(
            input.batch,
            out(input.height, self.pad.0, self.kh)?,
            out(input.width, self.pad.1, self.kw)?,
            self.c_out,
        ))
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.c_in
    }

    /// 1x1, stride 1, no padding: the input itself is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == (0, 0)
    }
}

/// Kernel tensors are stored as (kh, kw, c_in, c_out).
pub fn kernel_shape(kh: usize, kw: usize, c_in: usize, c_out: usize) -> Shape {
    Shape::new(kh, kw, c_in, c_out)
}

fn im2col<T: Real>(x: &Tensor<T>, g: &ConvGeom, out: Shape) -> Vec<T> {
    let s = x.shape();
    let k = g.patch_len();
    let mut cols = vec![T::zero(); out.batch * out.height * out.width * k];
    let xd = x.data();
    let mut row = 0;
    for b in 0..out.batch {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let dst = &mut cols[row * k..(row + 1) * k];
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad.0 as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad.1 as isize;
                        if ix < 0 || ix >= s.width as isize {
                            continue;
                        }
                        let src = s.index(b, iy as usize, ix as usize, 0);
                        let off = (ky * g.kw + kx) * g.c_in;
                        dst[off..off + g.c_in].copy_from_slice(&xd[src..src + g.c_in]);
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom, input: Shape, out: Shape) -> Tensor<T> {
    let k = g.patch_len();
    let mut dx = Tensor::zeros(input);
    let dxd = dx.data_mut();
    let mut row = 0;
    for b in 0..out.batch {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let src = &cols[row * k..(row + 1) * k];
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad.0 as isize;
                    if iy < 0 || iy >= input.height as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad.1 as isize;
                        if ix < 0 || ix >= input.width as isize {
                            continue;
                        }
                        let dst = input.index(b, iy as usize, ix as usize, 0);
                        let off = (ky * g.kw + kx) * g.c_in;
                        for (d, &v) in dxd[dst..dst + g.c_in].iter_mut().zip(&src[off..off + g.c_in]) {
                            *d += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    dx
}

fn check_bias<T: Real>(bias: &Tensor<T>, c_out: usize) -> Result<()> {
    if bias.numel() != c_out {
        return Err(TensorError::Shape(format!(
            "bias has {} entries, conv has {} output channels",
            bias.numel(),
            c_out
        )));
    }
    Ok(())
}

/// Cross-correlation (the deep learning "convolution") with zero padding.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: (usize, usize),
) -> Result<Tensor<T>> {
    let g = ConvGeom::of(weight.shape(), stride, pad);
    let out = g.output_shape(x.shape())?;
    check_bias(bias, g.c_out)?;
    let m = out.batch * out.height * out.width;
    let k = g.patch_len();
    let mut y = Vec::with_capacity(m * g.c_out);
    for _ in 0..m {
        y.extend_from_slice(bias.data());
    }
    if g.is_pointwise() {
        T::gemm(m, k, g.c_out, x.data(), k as isize, 1, weight.data(), g.c_out as isize, 1, T::one(), &mut y);
    } else {
        let cols = im2col(x, &g, out);
        T::gemm(m, k, g.c_out, &cols, k as isize, 1, weight.data(), g.c_out as isize, 1, T::one(), &mut y);
    }
    Tensor::from_vec(out, y)
}

/// Gradients of `conv2d` with respect to input, weight and bias.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: (usize, usize),
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let g = ConvGeom::of(weight.shape(), stride, pad);
    let out = dy.shape();
    let m = out.batch * out.height * out.width;
    let k = g.patch_len();
    let n = g.c_out;

    let mut db = vec![T::zero(); n];
    for row in dy.data().chunks_exact(n) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }

    let owned_cols;
    let cols: &[T] = if g.is_pointwise() {
        x.data()
    } else {
        owned_cols = im2col(x, &g, out);
        &owned_cols
    };
    // dW = cols^T . dy
    let mut dw = vec![T::zero(); k * n];
    T::gemm(k, m, n, cols, 1, k as isize, dy.data(), n as isize, 1, T::zero(), &mut dw);
    // dcols = dy . W^T
    let mut dcols = vec![T::zero(); m * k];
    T::gemm(m, n, k, dy.data(), n as isize, 1, weight.data(), 1, n as isize, T::zero(), &mut dcols);
    let dx = if g.is_pointwise() {
        Tensor::from_vec(x.shape(), dcols).expect("pointwise conv keeps the input shape")
    } else {
        col2im(&dcols, &g, x.shape(), out)
    };
    (
        dx,
        Tensor::from_vec(weight.shape(), dw).expect("weight shape"),
        Tensor::from_vec(Shape::new(1, 1, 1, n), db).expect("bias shape"),
    )
}

/// Mean over the channel axis: (B,H,W,C) -> (B,H,W,1).
pub fn channel_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let c = x.shape().channels;
    let inv = T::lit(1.0 / c as f64);
    let data = x
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(x.shape().with_channels(1), data).expect("pooled shape")
}

/// Max over the channel axis plus the winning channel per pixel. Ties go to
/// the lowest channel index.
pub fn channel_max_pool<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let c = x.shape().channels;
    let mut arg = Vec::with_capacity(x.numel() / c);
    let data = x
        .data()
        .chunks_exact(c)
        .map(|px| {
            let mut best = 0;
            for (idx, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = idx;
                }
            }
            arg.push(best);
            px[best]
        })
        .collect();
    (
        Tensor::from_vec(x.shape().with_channels(1), data).expect("pooled shape"),
        arg,
    )
}

/// Column means per channel: (B,H,W,C) -> (B,1,W,C).
pub fn strip_pool_h<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let inv = T::lit(1.0 / s.height as f64);
    let mut out = Tensor::zeros(Shape::new(s.batch, 1, s.width, s.channels));
    let row = s.width * s.channels;
    for b in 0..s.batch {
        let dst = &mut out.data_mut()[b * row..(b + 1) * row];
        for i in 0..s.height {
            let start = s.index(b, i, 0, 0);
            for (d, &v) in dst.iter_mut().zip(&x.data()[start..start + row]) {
                *d += v;
            }
        }
        for d in dst.iter_mut() {
            *d *= inv;
        }
    }
    out
}

/// Row means per channel: (B,H,W,C) -> (B,H,1,C).
pub fn strip_pool_v<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let inv = T::lit(1.0 / s.width as f64);
    let mut out = Tensor::zeros(Shape::new(s.batch, s.height, 1, s.channels));
    for b in 0..s.batch {
        for i in 0..s.height {
            let o = out.shape().index(b, i, 0, 0);
            for j in 0..s.width {
                let start = s.index(b, i, j, 0);
                for c in 0..s.channels {
                    out.data_mut()[o + c] += x.data()[start + c];
                }
            }
            for c in 0..s.channels {
                out.data_mut()[o + c] *= inv;
            }
        }
    }
    out
}

/// Copies a 1xW or Hx1 strip along its singleton spatial axis.
pub fn expand<T: Real>(strip: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let s = strip.shape();
    let ok = (s.height == 1 && s.width == width) || (s.width == 1 && s.height == height);
    if !ok {
        return Err(TensorError::Shape(format!(
            "expand needs a 1x{width} or {height}x1 strip, got {s}"
        )));
    }
    let target = Shape::new(s.batch, height, width, s.channels);
    Ok(Tensor::from_fn(target, |b, i, j, c| {
        strip.at(b, i.min(s.height - 1), j.min(s.width - 1), c)
    }))
}

/// Sum of `dy` along the axis that `expand` copied over.
pub fn expand_backward<T: Real>(strip: Shape, dy: &Tensor<T>) -> Tensor<T> {
    if strip.height == 1 && dy.shape().height != 1 {
        let scale = T::lit(dy.shape().height as f64);
        strip_pool_h(dy).map(|v| v * scale)
    } else if strip.width == 1 && dy.shape().width != 1 {
        let scale = T::lit(dy.shape().width as f64);
        strip_pool_v(dy).map(|v| v * scale)
    } else {
        // 1x1 target: nothing was copied.
        dy.clone()
    }
}

/// Statistics saved by `instance_norm` for its backward pass, one entry per
/// (sample, channel).
#[derive(Debug, Clone)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta`, statistics per sample and
/// channel over the H*W positions, population variance.
pub fn instance_norm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, NormStats<T>)> {
    if !(eps > T::zero()) {
        return Err(TensorError::Param(format!(
            "instance_norm eps must be > 0, got {:?}",
            eps
        )));
    }
    let s = x.shape();
    if gamma.numel() != s.channels || beta.numel() != s.channels {
        return Err(TensorError::Shape(format!(
            "instance_norm affine vectors need {} entries, got {} and {}",
            s.channels,
            gamma.numel(),
            beta.numel()
        )));
    }
    let hw = s.height * s.width;
    let n = T::lit(hw as f64);
    let c = s.channels;
    let mut mean = vec![T::zero(); s.batch * c];
    let mut var = vec![T::zero(); s.batch * c];
    for b in 0..s.batch {
        let plane = &x.data()[b * hw * c..(b + 1) * hw * c];
        let m = &mut mean[b * c..(b + 1) * c];
        for px in plane.chunks_exact(c) {
            for (acc, &v) in m.iter_mut().zip(px) {
                *acc += v;
            }
        }
        for v in m.iter_mut() {
            *v = *v / n;
        }
        let vr = &mut var[b * c..(b + 1) * c];
        for px in plane.chunks_exact(c) {
            for ((acc, &v), &mu) in vr.iter_mut().zip(px).zip(m.iter()) {
                let d = v - mu;
                *acc += d * d;
            }
        }
        for v in vr.iter_mut() {
            *v = *v / n;
        }
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = x.clone();
    for b in 0..s.batch {
        let plane = &mut y.data_mut()[b * hw * c..(b + 1) * hw * c];
        for px in plane.chunks_exact_mut(c) {
            for (ch, v) in px.iter_mut().enumerate() {
                let k = b * c + ch;
                *v = gamma.data()[ch] * (*v - mean[k]) * inv_std[k] + beta.data()[ch];
            }
        }
    }
    Ok((y, NormStats { mean, inv_std }))
}

/// Returns (dx, dgamma, dbeta).
pub fn instance_norm_backward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    stats: &NormStats<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let s = x.shape();
    let hw = s.height * s.width;
    let c = s.channels;
    let n = T::lit(hw as f64);
    let mut dx = Tensor::zeros(s);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..s.batch {
        let base = b * hw * c;
        let mut sum_dxhat = vec![T::zero(); c];
        let mut sum_dxhat_xhat = vec![T::zero(); c];
        for p in 0..hw {
            for ch in 0..c {
                let k = b * c + ch;
                let idx = base + p * c + ch;
                let xhat = (x.data()[idx] - stats.mean[k]) * stats.inv_std[k];
                let g = dy.data()[idx];
                dgamma[ch] += g * xhat;
                dbeta[ch] += g;
                let dxhat = g * gamma.data()[ch];
                sum_dxhat[ch] += dxhat;
                sum_dxhat_xhat[ch] += dxhat * xhat;
            }
        }
        for p in 0..hw {
            for ch in 0..c {
                let k = b * c + ch;
                let idx = base + p * c + ch;
                let xhat = (x.data()[idx] - stats.mean[k]) * stats.inv_std[k];
                let dxhat = dy.data()[idx] * gamma.data()[ch];
                dx.data_mut()[idx] = stats.inv_std[k] / n
                    * (n * dxhat - sum_dxhat[ch] - xhat * sum_dxhat_xhat[ch]);
            }
        }
    }
    (
        dx,
        Tensor::vector(dgamma).expect("gamma shape"),
        Tensor::vector(dbeta).expect("beta shape"),
    )
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        // Split by sign so neither branch overflows.
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// How the right operand of a binary op lines up with the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Broadcast {
    Same,
    /// Right operand is (B,H,W,1) against a (B,H,W,C) left operand.
    Channel,
}

pub fn broadcast_kind(a: Shape, b: Shape) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::Same)
    } else if b.channels == 1 && a.with_channels(1) == b {
        Ok(Broadcast::Channel)
    } else {
        Err(TensorError::Shape(format!(
            "incompatible operands {a} and {b}"
        )))
    }
}

pub fn binary<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
    match broadcast_kind(a.shape(), b.shape())? {
        Broadcast::Same => a.zip_map(b, f),
        Broadcast::Channel => {
            let c = a.shape().channels;
            let mut out = a.clone();
            for (px, &bv) in out.data_mut().chunks_exact_mut(c).zip(b.data()) {
                for v in px.iter_mut() {
                    *v = f(*v, bv);
                }
            }
            Ok(out)
        }
    }
}

/// Reduces a gradient shaped like the left operand back to the right
/// operand's shape.
pub fn reduce_broadcast<T: Real>(kind: Broadcast, g: Tensor<T>) -> Tensor<T> {
    match kind {
        Broadcast::Same => g,
        Broadcast::Channel => {
            let c = g.shape().channels;
            let data = g
                .data()
                .chunks_exact(c)
                .map(|px| px.iter().copied().sum())
                .collect();
            Tensor::from_vec(g.shape().with_channels(1), data).expect("reduced shape")
        }
    }
}

pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| TensorError::Shape("concat of an empty list".into()))?
        .shape();
    let mut total = 0;
    for p in parts {
        if p.shape().with_channels(1) != first.with_channels(1) {
            return Err(TensorError::Shape(format!(
                "concat operands differ spatially: {} vs {}",
                p.shape(),
                first
            )));
        }
        total += p.shape().channels;
    }
    let pixels = first.batch * first.height * first.width;
    let mut data = Vec::with_capacity(pixels * total);
    for px in 0..pixels {
        for p in parts {
            let c = p.shape().channels;
            data.extend_from_slice(&p.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::from_vec(first.with_channels(total), data)
}

/// Splits channels into `[0, c1)` and `[c1, C)`.
pub fn split_channels<T: Real>(x: &Tensor<T>, c1: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let parts = split_channels_many(x, &[c1, x.shape().channels.saturating_sub(c1)])?;
    let mut it = parts.into_iter();
    Ok((it.next().unwrap(), it.next().unwrap()))
}

pub fn split_channels_many<T: Real>(x: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = x.shape();
    if widths.contains(&0) || widths.iter().sum::<usize>() != s.channels {
        return Err(TensorError::Shape(format!(
            "cannot split {} channels into {:?}",
            s.channels, widths
        )));
    }
    let pixels = s.batch * s.height * s.width;
    let mut bufs: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(pixels * w)).collect();
    for px in x.data().chunks_exact(s.channels) {
        let mut off = 0;
        for (buf, &w) in bufs.iter_mut().zip(widths) {
            buf.extend_from_slice(&px[off..off + w]);
            off += w;
        }
    }
    Ok(bufs
        .into_iter()
        .zip(widths)
        .map(|(d, &w)| Tensor::from_vec(s.with_channels(w), d).expect("split shape"))
        .collect())
}

/// Nearest-neighbour x2 upsampling.
pub fn upsample2x<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    Tensor::from_fn(Shape::new(s.batch, s.height * 2, s.width * 2, s.channels), |b, i, j, c| {
        x.at(b, i / 2, j / 2, c)
    })
}

pub fn upsample2x_backward<T: Real>(input: Shape, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input);
    let s = dy.shape();
    for b in 0..s.batch {
        for i in 0..s.height {
            for j in 0..s.width {
                for c in 0..s.channels {
                    *dx.at_mut(b, i / 2, j / 2, c) += dy.at(b, i, j, c);
                }
            }
        }
    }
    dx
}

fn reflect(idx: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = idx.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Pads bottom/right by reflection (edge pixel not repeated).
pub fn reflect_pad<T: Real>(x: &Tensor<T>, pad_bottom: usize, pad_right: usize) -> Tensor<T> {
    let s = x.shape();
    let target = Shape::new(s.batch, s.height + pad_bottom, s.width + pad_right, s.channels);
    Tensor::from_fn(target, |b, i, j, c| {
        x.at(b, reflect(i as isize, s.height), reflect(j as isize, s.width), c)
    })
}

/// Top-left `height x width` window.
pub fn crop<T: Real>(x: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    crop_at(x, 0, 0, height, width)
}

pub fn crop_at<T: Real>(
    x: &Tensor<T>,
    top: usize,
    left: usize,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    let s = x.shape();
    if top + height > s.height || left + width > s.width || height == 0 || width == 0 {
        return Err(TensorError::Shape(format!(
            "crop {height}x{width} at ({top},{left}) does not fit in {s}"
        )));
    }
    Ok(Tensor::from_fn(
        Shape::new(s.batch, height, width, s.channels),
        |b, i, j, c| x.at(b, top + i, left + j, c),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: usize, w: usize, c: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, h, w, c), v.to_vec()).unwrap()
    }

    #[test]
    fn conv_all_ones_center_and_corner() {
        let x = Tensor::<f64>::ones(Shape::new(1, 3, 3, 1));
        let w = Tensor::ones(kernel_shape(3, 3, 1, 1));
        let b = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let y = conv2d(&x, &w, &b, 1, (1, 1)).unwrap();
        assert_eq!(y.at(0, 1, 1, 0), 9.0);
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y.at(0, i, j, 0), 4.0);
        }
        assert_eq!(y.at(0, 0, 1, 0), 6.0);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::<f64>::from_fn(Shape::new(2, 3, 4, 1), |b, i, j, _| (b + i * 4 + j) as f64);
        let w = Tensor::ones(kernel_shape(1, 1, 1, 1));
        let b = Tensor::zeros(Shape::new(1, 1, 1, 1));
        assert_eq!(conv2d(&x, &w, &b, 1, (0, 0)).unwrap(), x);
    }

    #[test]
    fn conv_output_dims_and_errors() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 7, 6, 2));
        let w = Tensor::zeros(kernel_shape(3, 3, 2, 4));
        let b = Tensor::zeros(Shape::new(1, 1, 1, 4));
        let y = conv2d(&x, &w, &b, 2, (1, 1)).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 4, 3, 4));
        let wrong = Tensor::zeros(kernel_shape(3, 3, 3, 4));
        assert!(matches!(conv2d(&x, &wrong, &b, 1, (1, 1)), Err(TensorError::Shape(_))));
        let big = Tensor::zeros(kernel_shape(9, 9, 2, 4));
        assert!(matches!(conv2d(&x, &big, &b, 1, (0, 0)), Err(TensorError::Shape(_))));
    }

    #[test]
    fn channel_pools() {
        let x = t(1, 1, 2, &[1.0, 5.0]);
        assert_eq!(channel_avg_pool(&x).data(), &[3.0]);
        let (m, arg) = channel_max_pool(&x);
        assert_eq!(m.data(), &[5.0]);
        assert_eq!(arg, vec![1]);
        let tie = t(1, 1, 3, &[2.0, 2.0, 1.0]);
        assert_eq!(channel_max_pool(&tie).1, vec![0]);
        let single = t(2, 2, 1, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(channel_avg_pool(&single), single);
        assert_eq!(channel_max_pool(&single).0, single);
    }

    #[test]
    fn strip_pools_match_hand_values() {
        let x = t(2, 2, 1, &[1.0, 3.0, 5.0, 7.0]);
        assert_eq!(strip_pool_h(&x).data(), &[3.0, 5.0]);
        assert_eq!(strip_pool_v(&x).data(), &[2.0, 6.0]);
        let row = t(1, 3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(strip_pool_h(&row), row);
    }

    #[test]
    fn expand_copies_and_backward_sums() {
        let strip = t(1, 2, 1, &[3.0, 5.0]);
        let e = expand(&strip, 2, 2).unwrap();
        assert_eq!(e.data(), &[3.0, 5.0, 3.0, 5.0]);
        let g = expand_backward(strip.shape(), &Tensor::<f64>::ones(Shape::new(1, 3, 2, 1)));
        assert_eq!(g.data(), &[3.0, 3.0]);
        let point = t(1, 1, 2, &[0.25, -1.0]);
        let c = expand(&point, 1, 1).unwrap();
        assert_eq!(c, point);
        assert!(expand(&t(2, 2, 1, &[0.0; 4]), 2, 2).is_err());
    }

    #[test]
    fn instance_norm_hand_values() {
        let x = t(2, 2, 1, &[1.0, 2.0, 3.0, 4.0]);
        let one = Tensor::vector(vec![1.0]).unwrap();
        let zero = Tensor::vector(vec![0.0]).unwrap();
        let (y, _) = instance_norm(&x, &one, &zero, 1e-12).unwrap();
        let expect = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-3);
        }
        let z = Tensor::zeros(Shape::new(1, 2, 2, 1));
        let beta = Tensor::vector(vec![0.7]).unwrap();
        let (y, _) = instance_norm(&z, &one, &beta, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
        assert!(matches!(
            instance_norm(&z, &one, &beta, 0.0),
            Err(TensorError::Param(_))
        ));
    }

    #[test]
    fn sigmoid_and_broadcast() {
        assert_eq!(sigmoid(&t(1, 1, 1, &[0.0])).data(), &[0.5]);
        let s = sigmoid(&t(1, 1, 2, &[-800.0, 800.0]));
        assert!(s.is_finite());
        let x = t(1, 2, 2, &[2.0, 4.0, 6.0, 8.0]);
        let half = Tensor::full(Shape::new(1, 1, 2, 1), 0.5);
        assert_eq!(binary(&x, &half, |a, b| a * b).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(binary(&half, &x, |a, b| a * b).is_err());
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::<f64>::from_fn(Shape::new(1, 2, 2, 2), |_, i, j, c| (i * 10 + j + c) as f64);
        let b = Tensor::<f64>::from_fn(Shape::new(1, 2, 2, 3), |_, i, j, c| -((i + j * 7 + c) as f64));
        let cat = concat_channels(&[&a, &b]).unwrap();
        let (a2, b2) = split_channels(&cat, 2).unwrap();
        assert_eq!((a2, b2), (a, b));
        assert!(split_channels(&cat, 0).is_err());
        assert!(split_channels(&cat, 5).is_err());
    }

    #[test]
    fn reflect_pad_and_crop() {
        let x = t(1, 3, 1, &[1.0, 2.0, 3.0]);
        let p = reflect_pad(&x, 0, 3);
        assert_eq!(p.data(), &[1.0, 2.0, 3.0, 2.0, 1.0, 2.0]);
        assert_eq!(crop(&p, 1, 3).unwrap(), x);
    }

    #[test]
    fn upsample_roundtrip_gradient() {
        let x = t(1, 2, 1, &[1.0, 2.0]);
        let u = upsample2x(&x);
        assert_eq!(u.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        let g = upsample2x_backward(x.shape(), &Tensor::<f64>::ones(u.shape()));
        assert_eq!(g.data(), &[4.0, 4.0]);
    }
}
