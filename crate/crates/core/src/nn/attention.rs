//! The three attention modules of a triplet attention block.

use super::params::{Bound, ConvParams, Init, ParamId, ParamStore};
use crate::tensor::{Graph, Real, Result, Shape, TensorError, Var};

/// Epsilon inside the instance-norm square root.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Local pixel-wise attention: a sigmoid gate computed from channel-wise
/// average and max pooling, broadcast over all channels of the input.
#[derive(Debug, Clone)]
pub struct LpaModule {
    pub fuse_conv: ConvParams,
}

impl LpaModule {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str) -> Self {
        Self {
            fuse_conv: ConvParams::same(store, &format!("{name}.fuse"), 7, 2, 1),
        }
    }

    /// The (B,H,W,1) gate in (0, 1).
    pub fn attention_map<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f: Var) -> Result<Var> {
        let avg = g.channel_avg_pool(f);
        let max = g.channel_max_pool(f);
        let pooled = g.concat_channels(&[avg, max])?;
        let logits = self.fuse_conv.forward(g, p, pooled)?;
        Ok(g.sigmoid(logits))
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f: Var) -> Result<Var> {
        let map = self.attention_map(g, p, f)?;
        g.mul(f, map)
    }
}

/// Global strip-wise attention: column and row means, fused by 1x3 and 3x1
/// convolutions, copied back to full size, summed and turned into a gate.
#[derive(Debug, Clone)]
pub struct GsaModule {
    pub h_conv: ConvParams,
    pub v_conv: ConvParams,
    pub fuse_conv: ConvParams,
}

impl GsaModule {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            h_conv: ConvParams::new(store, &format!("{name}.h"), (1, 3), channels, channels, 1, (0, 1), false),
            v_conv: ConvParams::new(store, &format!("{name}.v"), (3, 1), channels, channels, 1, (1, 0), false),
            fuse_conv: ConvParams::same(store, &format!("{name}.fuse"), 1, channels, channels),
        }
    }

    /// Pre-sigmoid sum of the two expanded strip features.
    pub fn strip_features<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f: Var) -> Result<Var> {
        let s = g.shape(f);
        let h = g.strip_pool_h(f);
        let h = self.h_conv.forward(g, p, h)?;
        let h = g.expand(h, s.height, s.width)?;
        let v = g.strip_pool_v(f);
        let v = self.v_conv.forward(g, p, v)?;
        let v = g.expand(v, s.height, s.width)?;
        g.add(h, v)
    }

    /// The (B,H,W,C) gate in (0, 1).
    pub fn attention_map<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f: Var) -> Result<Var> {
        let sum = self.strip_features(g, p, f)?;
        let logits = self.fuse_conv.forward(g, p, sum)?;
        Ok(g.sigmoid(logits))
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f: Var) -> Result<Var> {
        let map = self.attention_map(g, p, f)?;
        g.mul(f, map)
    }
}

/// Global distribution attention: half of the channels go through affine
/// instance normalization, the other half through a plain convolution, then
/// both are fused and added back to the input.
#[derive(Debug, Clone)]
pub struct GdaModule {
    pub pre_conv: ConvParams,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub bypass_conv: ConvParams,
    pub post_conv: ConvParams,
    pub channels: usize,
}

impl GdaModule {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        if !channels.is_multiple_of(2) || channels == 0 {
            return Err(TensorError::Param(format!(
                "distribution attention splits channels in half; {channels} is not even"
            )));
        }
        let half = channels / 2;
        Ok(Self {
            pre_conv: ConvParams::same(store, &format!("{name}.pre"), 3, channels, channels),
            gamma: store.add(format!("{name}.gamma"), Shape::new(1, 1, 1, half), Init::Ones),
            beta: store.add(format!("{name}.beta"), Shape::new(1, 1, 1, half), Init::Zeros),
            bypass_conv: ConvParams::same(store, &format!("{name}.bypass"), 3, half, half),
            post_conv: ConvParams::same(store, &format!("{name}.post"), 3, channels, channels),
            channels,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f: Var) -> Result<Var> {
        let y = self.pre_conv.forward(g, p, f)?;
        let (f1, f2) = g.split_channels(y, self.channels / 2)?;
        let normed = g.instance_norm(f1, p.var(self.gamma), p.var(self.beta), T::lit(INSTANCE_NORM_EPS))?;
        let kept = self.bypass_conv.forward(g, p, f2)?;
        let cat = g.concat_channels(&[normed, kept])?;
        let fused = self.post_conv.forward(g, p, cat)?;
        g.add(fused, f)
    }
}
