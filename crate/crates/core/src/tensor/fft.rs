use std::f64::consts::PI;

use super::{Real, Result, Shape, Tensor, TensorError};

/// Complex spectrum laid out like the tensor it came from (NHWC), split into
/// real and imaginary buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid<T> {
    shape: Shape,
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Real> ComplexGrid<T> {
    pub fn new(shape: Shape, re: Vec<T>, im: Vec<T>) -> Result<Self> {
        if re.len() != shape.numel() || im.len() != shape.numel() {
            return Err(TensorError::Shape(format!(
                "complex grid {} needs {} entries per part, got {} / {}",
                shape,
                shape.numel(),
                re.len(),
                im.len()
            )));
        }
        Ok(Self { shape, re, im })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn re(&self) -> &[T] {
        &self.re
    }

    pub fn im(&self) -> &[T] {
        &self.im
    }

    pub fn at(&self, b: usize, i: usize, j: usize, c: usize) -> (T, T) {
        let k = self.shape.index(b, i, j, c);
        (self.re[k], self.im[k])
    }
}

/// In-place 1-D DFT over `re`/`im` with the given element stride.
/// `sign = -1` is the forward transform, `+1` the unnormalized inverse.
struct Plan {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Plan {
    fn new(n: usize, sign: f64) -> Self {
        let (cos, sin) = (0..n)
            .map(|k| {
                let a = sign * 2.0 * PI * k as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .unzip();
        Self { n, cos, sin }
    }

    fn run<T: Real>(&self, re: &mut [T], im: &mut [T], scratch: &mut Vec<(f64, f64)>) {
        let n = self.n;
        if n == 1 {
            return;
        }
        scratch.clear();
        scratch.extend(re.iter().zip(im.iter()).map(|(&r, &i)| (r.as_f64(), i.as_f64())));
        if n.is_power_of_two() {
            self.radix2(scratch);
        } else {
            let input = scratch.clone();
            for (k, out) in scratch.iter_mut().enumerate() {
                let (mut sr, mut si) = (0.0, 0.0);
                for (t, &(xr, xi)) in input.iter().enumerate() {
                    let w = (k * t) % n;
                    let (c, s) = (self.cos[w], self.sin[w]);
                    sr += xr * c - xi * s;
                    si += xr * s + xi * c;
                }
                *out = (sr, si);
            }
        }
        for ((r, i), &(sr, si)) in re.iter_mut().zip(im.iter_mut()).zip(scratch.iter()) {
            *r = T::lit(sr);
            *i = T::lit(si);
        }
    }

    fn radix2(&self, x: &mut [(f64, f64)]) {
        let n = self.n;
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                x.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let (c, s) = (self.cos[k * step], self.sin[k * step]);
                    let (ur, ui) = x[start + k];
                    let (vr, vi) = x[start + k + len / 2];
                    let (tr, ti) = (vr * c - vi * s, vr * s + vi * c);
                    x[start + k] = (ur + tr, ui + ti);
                    x[start + k + len / 2] = (ur - tr, ui - ti);
                }
            }
            len <<= 1;
        }
    }
}

fn transform_planes<T: Real>(shape: Shape, re: &mut [T], im: &mut [T], sign: f64) {
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let row_plan = Plan::new(w, sign);
    let col_plan = Plan::new(h, sign);
    let mut scratch = Vec::new();
    let mut br = vec![T::zero(); h.max(w)];
    let mut bi = vec![T::zero(); h.max(w)];
    for b in 0..shape.batch {
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let k = shape.index(b, i, j, ch);
                    br[j] = re[k];
                    bi[j] = im[k];
                }
                row_plan.run(&mut br[..w], &mut bi[..w], &mut scratch);
                for j in 0..w {
                    let k = shape.index(b, i, j, ch);
                    re[k] = br[j];
                    im[k] = bi[j];
                }
            }
            for j in 0..w {
                for i in 0..h {
                    let k = shape.index(b, i, j, ch);
                    br[i] = re[k];
                    bi[i] = im[k];
                }
                col_plan.run(&mut br[..h], &mut bi[..h], &mut scratch);
                for i in 0..h {
                    let k = shape.index(b, i, j, ch);
                    re[k] = br[i];
                    im[k] = bi[i];
                }
            }
        }
    }
}

/// Unnormalized forward 2-D DFT of every (sample, channel) plane. Radix-2 for
/// power-of-two extents, direct summation otherwise.
pub fn fft2d<T: Real>(x: &Tensor<T>) -> ComplexGrid<T> {
    let shape = x.shape();
    let mut re = x.data().to_vec();
    let mut im = vec![T::zero(); re.len()];
    transform_planes(shape, &mut re, &mut im, -1.0);
    ComplexGrid { shape, re, im }
}

/// Inverse 2-D DFT without the 1/(H*W) factor, so that
/// `ifft2d_unnormalized(fft2d(x)) = H*W*x`.
pub fn ifft2d_unnormalized<T: Real>(grid: &ComplexGrid<T>) -> ComplexGrid<T> {
    let mut re = grid.re.clone();
    let mut im = grid.im.clone();
    transform_planes(grid.shape, &mut re, &mut im, 1.0);
    ComplexGrid {
        shape: grid.shape,
        re,
        im,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_2x2_spectrum() {
        let x = Tensor::<f64>::ones(Shape::new(1, 2, 2, 1));
        let f = fft2d(&x);
        assert_eq!(f.re(), &[4.0, 0.0, 0.0, 0.0]);
        assert!(f.im().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_zero_spectrum() {
        let f = fft2d(&Tensor::<f64>::zeros(Shape::new(2, 3, 5, 2)));
        assert!(f.re().iter().chain(f.im()).all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_reproduces_input() {
        for (h, w) in [(4, 8), (3, 5), (6, 4), (1, 7)] {
            let shape = Shape::new(2, h, w, 3);
            let x = Tensor::<f64>::from_fn(shape, |b, i, j, c| {
                ((b * 31 + i * 7 + j * 3 + c) as f64).sin()
            });
            let back = ifft2d_unnormalized(&fft2d(&x));
            let n = (h * w) as f64;
            for (a, &r) in back.re().iter().zip(x.data()) {
                assert!((a / n - r).abs() <= 1e-10 * r.abs().max(1.0));
            }
            assert!(back.im().iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn dc_bin_is_spatial_sum() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 3, 6, 2), |_, i, j, c| (i * 6 + j) as f64 - c as f64);
        let f = fft2d(&x);
        for c in 0..2 {
            let sum: f64 = (0..3).flat_map(|i| (0..6).map(move |j| (i, j))).map(|(i, j)| x.at(0, i, j, c)).sum();
            assert!((f.at(0, 0, 0, c).0 - sum).abs() < 1e-10);
        }
    }
}
