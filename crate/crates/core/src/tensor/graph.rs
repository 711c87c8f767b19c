//! Reverse-mode tape. Every primitive appends a node whose inputs were
//! created earlier, so the node list is already in topological order and the
//! backward sweep is a single reverse pass.

use super::kernels::{self, Broadcast, NormStats};
use super::{Real, Result, Shape, Tensor, TensorError};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: (usize, usize),
    },
    Add(Var, Var, Broadcast),
    Sub(Var, Var),
    Mul(Var, Var, Broadcast),
    Scale(Var, T),
    Sigmoid(Var),
    Relu(Var),
    ChannelAvg(Var),
    ChannelMax(Var, Vec<usize>),
    StripH(Var),
    StripV(Var),
    Expand(Var),
    InstanceNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: NormStats<T>,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        offset: usize,
    },
    Upsample2x(Var),
    Sum(Var),
    /// Scalar function of two tensors whose local gradients were computed
    /// during the forward pass.
    Scalar2 {
        a: Var,
        b: Var,
        da: Tensor<T>,
        db: Tensor<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only record of tensor operations for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// `None` for leaves that do not require gradients or did not influence
    /// the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but materializes zeros for untouched leaves.
    pub fn get_or_zeros(&self, v: Var, shape: Shape) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: (usize, usize)) -> Result<Var> {
        let y = kernels::conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(y, &[x, w, b], Op::Conv2d { x, w, b, stride, pad }))
    }

    /// Elementwise sum; `b` may also be a (B,H,W,1) map broadcast over channels.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = kernels::broadcast_kind(self.shape(a), self.shape(b))?;
        let y = kernels::binary(self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(y, &[a, b], Op::Add(a, b, kind)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(y, &[a, b], Op::Sub(a, b)))
    }

    /// Elementwise product; `b` may be a (B,H,W,1) map broadcast over channels.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = kernels::broadcast_kind(self.shape(a), self.shape(b))?;
        let y = kernels::binary(self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(y, &[a, b], Op::Mul(a, b, kind)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let y = self.value(a).map(|x| x * factor);
        self.push(y, &[a], Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = kernels::sigmoid(self.value(a));
        self.push(y, &[a], Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let y = kernels::relu(self.value(a));
        self.push(y, &[a], Op::Relu(a))
    }

    pub fn channel_avg_pool(&mut self, a: Var) -> Var {
        let y = kernels::channel_avg_pool(self.value(a));
        self.push(y, &[a], Op::ChannelAvg(a))
    }

    pub fn channel_max_pool(&mut self, a: Var) -> Var {
        let (y, arg) = kernels::channel_max_pool(self.value(a));
        self.push(y, &[a], Op::ChannelMax(a, arg))
    }

    pub fn strip_pool_h(&mut self, a: Var) -> Var {
        let y = kernels::strip_pool_h(self.value(a));
        self.push(y, &[a], Op::StripH(a))
    }

    pub fn strip_pool_v(&mut self, a: Var) -> Var {
        let y = kernels::strip_pool_v(self.value(a));
        self.push(y, &[a], Op::StripV(a))
    }

    pub fn expand(&mut self, strip: Var, height: usize, width: usize) -> Result<Var> {
        let y = kernels::expand(self.value(strip), height, width)?;
        Ok(self.push(y, &[strip], Op::Expand(strip)))
    }

    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (y, stats) = kernels::instance_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(y, &[x, gamma, beta], Op::InstanceNorm { x, gamma, beta, stats }))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let y = kernels::concat_channels(&values)?;
        Ok(self.push(y, parts, Op::Concat(parts.to_vec())))
    }

    /// Splits channels into `[0, c1)` and `[c1, C)`.
    pub fn split_channels(&mut self, x: Var, c1: usize) -> Result<(Var, Var)> {
        let (a, b) = kernels::split_channels(self.value(x), c1)?;
        let va = self.push(a, &[x], Op::Slice { x, offset: 0 });
        let vb = self.push(b, &[x], Op::Slice { x, offset: c1 });
        Ok((va, vb))
    }

    pub fn upsample2x(&mut self, x: Var) -> Var {
        let y = kernels::upsample2x(self.value(x));
        self.push(y, &[x], Op::Upsample2x(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let y = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![s]).expect("scalar");
        self.push(y, &[x], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum(x);
        self.scale(s, T::lit(1.0 / n as f64))
    }

    /// Records a scalar `value` computed from `a` and `b` along with its
    /// partial derivatives, which must match the shapes of `a` and `b`.
    pub fn scalar_fn(&mut self, a: Var, b: Var, value: T, da: Tensor<T>, db: Tensor<T>) -> Result<Var> {
        if da.shape() != self.shape(a) || db.shape() != self.shape(b) {
            return Err(TensorError::Shape(
                "scalar_fn partials must match operand shapes".into(),
            ));
        }
        let y = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![value]).expect("scalar");
        Ok(self.push(y, &[a, b], Op::Scalar2 { a, b, da, db }))
    }

    /// Reverse sweep from a scalar. Only leaf gradients are kept.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar loss, got shape {}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::ones(self.shape(loss)));
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, g, &mut grads);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let (dx, dw, db) = kernels::conv2d_backward(self.value(*x), self.value(*w), *stride, *pad, &g);
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *w, dw);
                self.accumulate(grads, *b, db);
            }
            Op::Add(a, b, kind) => {
                self.accumulate(grads, *b, kernels::reduce_broadcast(*kind, g.clone()));
                self.accumulate(grads, *a, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *b, g.map(|v| -v));
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b, kind) => {
                if self.requires_grad(*a) {
                    let da = kernels::binary(&g, self.value(*b), |x, y| x * y).expect("mul grad");
                    self.accumulate(grads, *a, da);
                }
                if self.requires_grad(*b) {
                    let full = g.zip_map(self.value(*a), |x, y| x * y).expect("mul grad");
                    self.accumulate(grads, *b, kernels::reduce_broadcast(*kind, full));
                }
            }
            Op::Scale(a, f) => self.accumulate(grads, *a, g.map(|v| v * *f)),
            Op::Sigmoid(a) => {
                let d = g
                    .zip_map(&node.value, |gv, s| gv * s * (T::one() - s))
                    .expect("sigmoid grad");
                self.accumulate(grads, *a, d);
            }
            Op::Relu(a) => {
                let d = g
                    .zip_map(self.value(*a), |gv, x| if x > T::zero() { gv } else { T::zero() })
                    .expect("relu grad");
                self.accumulate(grads, *a, d);
            }
            Op::ChannelAvg(a) => {
                let s = self.shape(*a);
                let inv = T::lit(1.0 / s.channels as f64);
                let mut d = Tensor::zeros(s);
                for (px, &gv) in d.data_mut().chunks_exact_mut(s.channels).zip(g.data()) {
                    px.iter_mut().for_each(|v| *v = gv * inv);
                }
                self.accumulate(grads, *a, d);
            }
            Op::ChannelMax(a, arg) => {
                let s = self.shape(*a);
                let mut d = Tensor::zeros(s);
                for ((px, &gv), &k) in d.data_mut().chunks_exact_mut(s.channels).zip(g.data()).zip(arg) {
                    px[k] = gv;
                }
                self.accumulate(grads, *a, d);
            }
            Op::StripH(a) => {
                let s = self.shape(*a);
                let inv = T::lit(1.0 / s.height as f64);
                let d = kernels::expand(&g, s.height, s.width).expect("strip grad").map(|v| v * inv);
                self.accumulate(grads, *a, d);
            }
            Op::StripV(a) => {
                let s = self.shape(*a);
                let inv = T::lit(1.0 / s.width as f64);
                let d = kernels::expand(&g, s.height, s.width).expect("strip grad").map(|v| v * inv);
                self.accumulate(grads, *a, d);
            }
            Op::Expand(a) => {
                let d = kernels::expand_backward(self.shape(*a), &g);
                self.accumulate(grads, *a, d);
            }
            Op::InstanceNorm { x, gamma, beta, stats } => {
                let (dx, dg, db) = kernels::instance_norm_backward(self.value(*x), self.value(*gamma), stats, &g);
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gamma, dg.reshape(self.shape(*gamma)).expect("gamma shape"));
                self.accumulate(grads, *beta, db.reshape(self.shape(*beta)).expect("beta shape"));
            }
            Op::Concat(parts) => {
                let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p).channels).collect();
                let pieces = kernels::split_channels_many(&g, &widths).expect("concat grad");
                for (&p, piece) in parts.iter().zip(pieces) {
                    self.accumulate(grads, p, piece);
                }
            }
            Op::Slice { x, offset } => {
                let s = self.shape(*x);
                let w = g.shape().channels;
                let mut d = Tensor::zeros(s);
                for (dst, src) in d.data_mut().chunks_exact_mut(s.channels).zip(g.data().chunks_exact(w)) {
                    dst[*offset..*offset + w].copy_from_slice(src);
                }
                self.accumulate(grads, *x, d);
            }
            Op::Upsample2x(x) => {
                let d = kernels::upsample2x_backward(self.shape(*x), &g);
                self.accumulate(grads, *x, d);
            }
            Op::Sum(x) => {
                let gv = g.data()[0];
                self.accumulate(grads, *x, Tensor::full(self.shape(*x), gv));
            }
            Op::Scalar2 { a, b, da, db } => {
                let gv = g.data()[0];
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, da.map(|v| v * gv));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, db.map(|v| v * gv));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_fn(Shape::new(1, 2, 3, 2), |_, i, j, c| (i + j + c) as f64));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &Tensor::ones(Shape::new(1, 2, 3, 2)));
    }

    #[test]
    fn non_scalar_loss_is_usage_error() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::ones(Shape::new(1, 2, 2, 1)));
        assert!(matches!(g.backward(x), Err(TensorError::Usage(_))));
    }

    #[test]
    fn constant_subgraph_gets_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(Tensor::ones(Shape::new(1, 2, 2, 1)));
        let c2 = g.sigmoid(c);
        let x = g.param(Tensor::ones(Shape::new(1, 2, 2, 1)));
        let y = g.mul(x, c2).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert!(!g.requires_grad(c2));
        assert!(grads.get(x).is_some());
    }

    #[test]
    fn shared_input_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::full(Shape::new(1, 1, 1, 1), 3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn broadcast_mul_reduces_gradient_over_channels() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_fn(Shape::new(1, 1, 2, 3), |_, _, j, c| (j * 3 + c) as f64));
        let m = g.param(Tensor::full(Shape::new(1, 1, 2, 1), 0.5));
        let y = g.mul(x, m).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(m).unwrap().data(), &[3.0, 12.0]);
    }
}
