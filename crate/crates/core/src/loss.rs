//! Training objective (Charbonnier + frequency-domain L1) and PSNR.

use crate::tensor::{fft2d, ifft2d_unnormalized, ComplexGrid, Graph, Real, Result, Tensor, TensorError, Var};

/// PSNR reported when the two images are identical.
pub const PSNR_INFINITE: f64 = f64::INFINITY;
/// Cap used when rendering PSNR in tables.
pub const PSNR_TABLE_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CharbonnierForm {
    /// Mean over elements of `sqrt(d^2 + eps^2)`.
    #[default]
    PerElement,
    /// `sqrt(||O - G||_2 + eps^2)` with a single global L2 norm.
    GlobalNorm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub epsilon: f64,
    pub lambda_fft: f64,
    pub fft_enabled: bool,
    pub charbonnier_form: CharbonnierForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            lambda_fft: 1e-2,
            fft_enabled: true,
            charbonnier_form: CharbonnierForm::PerElement,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(TensorError::Param(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.lambda_fft >= 0.0) || !self.lambda_fft.is_finite() {
            return Err(TensorError::Param(format!(
                "lambda_fft must be >= 0, got {}",
                self.lambda_fft
            )));
        }
        Ok(())
    }
}

fn same_shape<T: Real>(o: &Tensor<T>, g: &Tensor<T>) -> Result<()> {
    if o.shape() != g.shape() {
        return Err(TensorError::Shape(format!(
            "loss operands differ: {} vs {}",
            o.shape(),
            g.shape()
        )));
    }
    Ok(())
}

/// Value and gradient with respect to `o` (the gradient w.r.t. `g` is its
/// negation).
pub fn charbonnier_parts<T: Real>(o: &Tensor<T>, g: &Tensor<T>, epsilon: f64) -> Result<(f64, Tensor<T>)> {
    same_shape(o, g)?;
    let n = o.numel() as f64;
    let e2 = epsilon * epsilon;
    // Summing the excess over epsilon keeps loss(o, o) == epsilon exact.
    let mut excess = 0.0;
    let mut grad = Vec::with_capacity(o.numel());
    for (&a, &b) in o.data().iter().zip(g.data()) {
        let d = (a - b).as_f64();
        let r = (d * d + e2).sqrt();
        excess += r - epsilon;
        grad.push(T::lit(d / (r * n)));
    }
    Ok((epsilon + excess / n, Tensor::from_vec(o.shape(), grad)?))
}

pub fn charbonnier_global_parts<T: Real>(o: &Tensor<T>, g: &Tensor<T>, epsilon: f64) -> Result<(f64, Tensor<T>)> {
    same_shape(o, g)?;
    let diff: Vec<f64> = o.data().iter().zip(g.data()).map(|(&a, &b)| (a - b).as_f64()).collect();
    let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let value = (norm + epsilon * epsilon).sqrt();
    // d/dd sqrt(|d| + e^2) = d / (2 |d| value); subgradient 0 at d = 0.
    let scale = if norm > 0.0 { 1.0 / (2.0 * norm * value) } else { 0.0 };
    let grad = diff.iter().map(|&d| T::lit(d * scale)).collect();
    Ok((value, Tensor::from_vec(o.shape(), grad)?))
}

/// Mean over all bins of `|Re D| + |Im D|` with `D = F(o) - F(g)`, and its
/// gradient with respect to `o`.
pub fn fft_loss_parts<T: Real>(o: &Tensor<T>, g: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape(o, g)?;
    let diff = o.zip_map(g, |a, b| a - b)?;
    let spec = fft2d(&diff);
    let n = o.numel() as f64;
    let mut total = 0.0;
    let sign = |v: T| {
        if v > T::zero() {
            T::one()
        } else if v < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    };
    let mut sre = Vec::with_capacity(o.numel());
    let mut sim = Vec::with_capacity(o.numel());
    for (&r, &i) in spec.re().iter().zip(spec.im()) {
        total += r.abs().as_f64() + i.abs().as_f64();
        sre.push(sign(r));
        sim.push(sign(i));
    }
    // sum_k s_re Re F(x)_k + s_im Im F(x)_k is linear in x with coefficient
    // Re(sum_k (s_re + i s_im) e^{+2 pi i k n / N}).
    let signs = ComplexGrid::new(o.shape(), sre, sim)?;
    let back = ifft2d_unnormalized(&signs);
    let inv_n = T::lit(1.0 / n);
    let grad = back.re().iter().map(|&v| v * inv_n).collect();
    Ok((total / n, Tensor::from_vec(o.shape(), grad)?))
}

pub fn charbonnier<T: Real>(o: &Tensor<T>, g: &Tensor<T>, epsilon: f64) -> Result<f64> {
    charbonnier_parts(o, g, epsilon).map(|(v, _)| v)
}

pub fn fft_loss<T: Real>(o: &Tensor<T>, g: &Tensor<T>) -> Result<f64> {
    fft_loss_parts(o, g).map(|(v, _)| v)
}

pub fn total_loss<T: Real>(o: &Tensor<T>, g: &Tensor<T>, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    let char = match config.charbonnier_form {
        CharbonnierForm::PerElement => charbonnier(o, g, config.epsilon)?,
        CharbonnierForm::GlobalNorm => charbonnier_global_parts(o, g, config.epsilon)?.0,
    };
    if config.fft_enabled {
        Ok(char + config.lambda_fft * fft_loss(o, g)?)
    } else {
        Ok(char)
    }
}

/// Graph versions, differentiable in both operands.
pub fn charbonnier_var<T: Real>(graph: &mut Graph<T>, o: Var, g: Var, epsilon: f64) -> Result<Var> {
    let (v, d) = charbonnier_parts(graph.value(o), graph.value(g), epsilon)?;
    let neg = d.map(|x| -x);
    graph.scalar_fn(o, g, T::lit(v), d, neg)
}

pub fn charbonnier_global_var<T: Real>(graph: &mut Graph<T>, o: Var, g: Var, epsilon: f64) -> Result<Var> {
    let (v, d) = charbonnier_global_parts(graph.value(o), graph.value(g), epsilon)?;
    let neg = d.map(|x| -x);
    graph.scalar_fn(o, g, T::lit(v), d, neg)
}

pub fn fft_loss_var<T: Real>(graph: &mut Graph<T>, o: Var, g: Var) -> Result<Var> {
    let (v, d) = fft_loss_parts(graph.value(o), graph.value(g))?;
    let neg = d.map(|x| -x);
    graph.scalar_fn(o, g, T::lit(v), d, neg)
}

pub fn total_loss_var<T: Real>(graph: &mut Graph<T>, o: Var, g: Var, config: &LossConfig) -> Result<Var> {
    config.validate()?;
    let char = match config.charbonnier_form {
        CharbonnierForm::PerElement => charbonnier_var(graph, o, g, config.epsilon)?,
        CharbonnierForm::GlobalNorm => charbonnier_global_var(graph, o, g, config.epsilon)?,
    };
    if !config.fft_enabled {
        return Ok(char);
    }
    let fft = fft_loss_var(graph, o, g)?;
    let weighted = graph.scale(fft, T::lit(config.lambda_fft));
    graph.add(char, weighted)
}

pub fn mse<T: Real>(o: &Tensor<T>, g: &Tensor<T>) -> Result<f64> {
    same_shape(o, g)?;
    let s: f64 = o
        .data()
        .iter()
        .zip(g.data())
        .map(|(&a, &b)| {
            let d = (a - b).as_f64();
            d * d
        })
        .sum();
    Ok(s / o.numel() as f64)
}

/// `10 log10(peak^2 / MSE)`; identical inputs give [`PSNR_INFINITE`].
pub fn psnr<T: Real>(o: &Tensor<T>, g: &Tensor<T>, peak: f64) -> Result<f64> {
    let m = mse(o, g)?;
    if m == 0.0 {
        return Ok(PSNR_INFINITE);
    }
    Ok(10.0 * (peak * peak / m).log10())
}
