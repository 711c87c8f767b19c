//! Dense NHWC tensors, the primitive kernels the network is built from, and a
//! small reverse-mode tape on top of them.

mod fft;
mod graph;
pub mod kernels;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use thiserror::Error;

pub use fft::{fft2d, ifft2d_unnormalized, ComplexGrid};
pub use graph::{Gradients, Graph, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Floating point element type. Double precision is what the gradient checks
/// run in; single precision is the fast training mode.
pub trait Real:
    Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` over strided row/column layouts.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let reach = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows as isize - 1) * rs + (cols as isize - 1) * cs + 1
                    }
                };
                assert!(a.len() as isize >= reach(m, k, rsa, csa));
                assert!(b.len() as isize >= reach(k, n, rsb, csb));
                assert!(c.len() >= m * n);
                // SAFETY: the asserts above bound every strided access of the
                // three operands, and `c` is exclusively borrowed.
                unsafe {
                    $gemm(
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
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// (batch, height, width, channels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(batch: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            batch,
            height,
            width,
            channels,
        }
    }

    pub fn numel(&self) -> usize {
        self.batch * self.height * self.width * self.channels
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.height, self.width, self.channels]
    }

    pub fn with_channels(self, channels: usize) -> Self {
        Self { channels, ..self }
    }

    #[inline]
    pub fn index(&self, b: usize, i: usize, j: usize, c: usize) -> usize {
        ((b * self.height + i) * self.width + j) * self.channels + c
    }

    fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(TensorError::Shape(format!(
                "all dimensions must be >= 1, got {:?}",
                self.dims()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.height, self.width, self.channels
        )
    }
}

/// Rank-4 dense array in row-major NHWC order.
///
/// Convolution weights reuse the same container with the axes read as
/// (kh, kw, c_in, c_out), and bias / affine vectors as (1, 1, 1, n).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.numel() {
            return Err(TensorError::Shape(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.numel()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: Shape, value: T) -> Self {
        assert!(shape.numel() > 0, "tensor dimensions must be >= 1");
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, T::one())
    }

    /// Vector of length `n` stored as shape (1, 1, 1, n).
    pub fn vector(values: Vec<T>) -> Result<Self> {
        Self::from_vec(Shape::new(1, 1, 1, values.len()), values)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for b in 0..shape.batch {
            for i in 0..shape.height {
                for j in 0..shape.width {
                    for c in 0..shape.channels {
                        data.push(f(b, i, j, c));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn at(&self, b: usize, i: usize, j: usize, c: usize) -> T {
        self.data[self.shape.index(b, i, j, c)]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, i: usize, j: usize, c: usize) -> &mut T {
        let idx = self.shape.index(b, i, j, c);
        &mut self.data[idx]
    }

    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::Shape(format!(
                "elementwise operands differ: {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::lit(self.numel() as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().as_f64())
            .fold(0.0, f64::max)
    }

    /// Converts element type, e.g. to run a single-precision model in doubles.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }

    /// Single sample `b` as a batch-1 tensor.
    pub fn sample(&self, b: usize) -> Self {
        let per = self.shape.height * self.shape.width * self.shape.channels;
        Self {
            shape: Shape { batch: 1, ..self.shape },
            data: self.data[b * per..(b + 1) * per].to_vec(),
        }
    }

    /// Stacks batch-1 (or larger) tensors of equal spatial shape along batch.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| TensorError::Shape("cannot stack an empty list".into()))?;
        let mut batch = 0;
        let mut data = Vec::new();
        for t in items {
            let s = t.shape;
            if (s.height, s.width, s.channels)
                != (first.shape.height, first.shape.width, first.shape.channels)
            {
                return Err(TensorError::Shape(format!(
                    "stack operands differ: {} vs {}",
                    s, first.shape
                )));
            }
            batch += s.batch;
            data.extend_from_slice(&t.data);
        }
        Self::from_vec(Shape { batch, ..first.shape }, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dims_and_bad_length() {
        assert!(Tensor::<f64>::from_vec(Shape::new(1, 0, 2, 1), vec![]).is_err());
        assert!(Tensor::<f64>::from_vec(Shape::new(1, 2, 2, 1), vec![0.0; 3]).is_err());
    }

    #[test]
    fn nhwc_indexing() {
        let t = Tensor::<f64>::from_fn(Shape::new(2, 3, 4, 5), |b, i, j, c| {
            (b * 1000 + i * 100 + j * 10 + c) as f64
        });
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[5], 10.0);
        assert_eq!(t.sample(1).at(0, 2, 3, 4), 1234.0);
    }

    #[test]
    fn gemm_handles_transposed_operands() {
        // a is 2x3, b^T given as 2x3 so b is 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let bt = [1.0, 0.0, -1.0, 2.0, 1.0, 0.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, &a, 3, 1, &bt, 1, 3, 0.0, &mut c);
        assert_eq!(c, [-2.0, 4.0, -2.0, 13.0]);
    }
}
