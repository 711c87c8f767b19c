use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::kernels::kernel_shape;
use crate::tensor::{Graph, Real, Result, Shape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a freshly registered parameter is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanInUniform { fan_in: usize },
}

/// Named, ordered parameter tensors of a model.
///
/// A store built with [`ParamStore::shapes_only`] records names and shapes
/// without allocating, which is how parameter counts of large configurations
/// are computed.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    names: Vec<String>,
    shapes: Vec<Shape>,
    tensors: Vec<Tensor<T>>,
    allocate: bool,
    rng: ChaCha8Rng,
}

impl<T: Real> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            shapes: Vec::new(),
            tensors: Vec::new(),
            allocate: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn shapes_only() -> Self {
        Self {
            allocate: false,
            ..Self::new(0)
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Shape, init: Init) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        if self.allocate {
            let t = match init {
                Init::Zeros => Tensor::zeros(shape),
                Init::Ones => Tensor::ones(shape),
                Init::FanInUniform { fan_in } => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    let data = (0..shape.numel())
                        .map(|_| T::lit(self.rng.gen_range(-bound..bound)))
                        .collect();
                    Tensor::from_vec(shape, data).expect("init shape")
                }
            };
            self.tensors.push(t);
        }
        self.names.push(name);
        self.shapes.push(shape);
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: ParamId) -> Shape {
        self.shapes[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.shapes.iter().map(Shape::numel).sum()
    }

    /// Replaces a tensor, keeping its registered shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.shapes[id.0] {
            return Err(TensorError::Shape(format!(
                "parameter {} expects {}, got {}",
                self.names[id.0],
                self.shapes[id.0],
                value.shape()
            )));
        }
        self.tensors[id.0] = value;
        Ok(())
    }

    /// Copies every parameter onto `graph` as a leaf.
    pub fn bind(&self, graph: &mut Graph<T>, requires_grad: bool) -> Bound {
        assert!(self.allocate, "cannot bind a shapes-only store");
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| graph.leaf(t.clone(), requires_grad))
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            allocate: self.allocate,
            rng: self.rng.clone(),
        }
    }
}

/// Parameter leaves of one graph, indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Convolution layer: kernel (kh, kw, c_in, c_out), bias, stride, padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: (usize, usize),
    pub c_in: usize,
    pub c_out: usize,
}

impl ConvParams {
    /// Square `k x k` kernel, stride 1, "same" padding.
    pub fn same<T: Real>(store: &mut ParamStore<T>, name: &str, k: usize, c_in: usize, c_out: usize) -> Self {
        Self::new(store, name, (k, k), c_in, c_out, 1, (k / 2, k / 2), false)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        kernel: (usize, usize),
        c_in: usize,
        c_out: usize,
        stride: usize,
        pad: (usize, usize),
        zero: bool,
    ) -> Self {
        let init = if zero {
            Init::Zeros
        } else {
            Init::FanInUniform {
                fan_in: kernel.0 * kernel.1 * c_in,
            }
        };
        let weight = store.add(format!("{name}.weight"), kernel_shape(kernel.0, kernel.1, c_in, c_out), init);
        let bias = store.add(format!("{name}.bias"), Shape::new(1, 1, 1, c_out), Init::Zeros);
        Self {
            weight,
            bias,
            stride,
            pad,
            c_in,
            c_out,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p.var(self.weight), p.var(self.bias), self.stride, self.pad)
    }
}
