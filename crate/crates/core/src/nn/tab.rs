//! Triplet attention block and the plain-convolution stand-ins used by the
//! component ablation.

use super::attention::{GdaModule, GsaModule, LpaModule};
use super::params::{Bound, ConvParams, ParamStore};
use crate::tensor::{Graph, Real, Result, TensorError, Var};

/// Which attention components a block carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Components {
    pub lpa: bool,
    pub gsa: bool,
    pub gda: bool,
}

impl Components {
    pub const ALL: Self = Self {
        lpa: true,
        gsa: true,
        gda: true,
    };
}

/// Strip attention or its 1x1 convolution stand-in.
#[derive(Debug, Clone)]
pub enum GlobalBranch {
    Attention(GsaModule),
    Plain(ConvParams),
}

/// Distribution attention or its 3x3 convolution stand-in (residual kept).
#[derive(Debug, Clone)]
pub enum DistributionStage {
    Attention(GdaModule),
    Plain(ConvParams),
}

#[derive(Debug, Clone)]
pub struct TaBlock {
    pub channels: usize,
    pub entry_conv: ConvParams,
    pub local_conv: ConvParams,
    pub lpa: Option<LpaModule>,
    pub global_conv: ConvParams,
    pub global: GlobalBranch,
    pub conv_branch: [ConvParams; 2],
    pub fusion_conv: ConvParams,
    pub residual_conv: ConvParams,
    pub distribution: DistributionStage,
}

impl TaBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, parts: Components) -> Result<Self> {
        if !channels.is_multiple_of(2) || channels == 0 {
            return Err(TensorError::Param(format!(
                "triplet attention block needs an even channel count, got {channels}"
            )));
        }
        let c = channels;
        let conv3 = |store: &mut ParamStore<T>, n: &str| ConvParams::same(store, &format!("{name}.{n}"), 3, c, c);
        let entry_conv = conv3(store, "entry");
        let local_conv = conv3(store, "local.conv");
        let lpa = parts.lpa.then(|| LpaModule::new(store, &format!("{name}.local.lpa")));
        let global_conv = conv3(store, "global.conv");
        let global = if parts.gsa {
            GlobalBranch::Attention(GsaModule::new(store, &format!("{name}.global.gsa"), c))
        } else {
            GlobalBranch::Plain(ConvParams::same(store, &format!("{name}.global.plain"), 1, c, c))
        };
        let conv_branch = [conv3(store, "conv.0"), conv3(store, "conv.1")];
        let fusion_conv = ConvParams::same(store, &format!("{name}.fusion"), 1, 3 * c, c);
        let residual_conv = conv3(store, "residual");
        let distribution = if parts.gda {
            DistributionStage::Attention(GdaModule::new(store, &format!("{name}.gda"), c)?)
        } else {
            DistributionStage::Plain(conv3(store, "gda_plain"))
        };
        Ok(Self {
            channels,
            entry_conv,
            local_conv,
            lpa,
            global_conv,
            global,
            conv_branch,
            fusion_conv,
            residual_conv,
            distribution,
        })
    }

    /// Multi-scale attended features before the distribution stage.
    pub fn fused<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f: Var) -> Result<Var> {
        let e = self.entry_conv.forward(g, p, f)?;
        let e = g.relu(e);

        let local = self.local_conv.forward(g, p, e)?;
        let local = match &self.lpa {
            Some(lpa) => lpa.forward(g, p, local)?,
            None => local,
        };

        let global = self.global_conv.forward(g, p, e)?;
        let global = match &self.global {
            GlobalBranch::Attention(gsa) => gsa.forward(g, p, global)?,
            GlobalBranch::Plain(conv) => conv.forward(g, p, global)?,
        };

        let c = self.conv_branch[0].forward(g, p, e)?;
        let c = g.relu(c);
        let c = self.conv_branch[1].forward(g, p, c)?;

        let cat = g.concat_channels(&[local, global, c])?;
        let fused = self.fusion_conv.forward(g, p, cat)?;
        g.add(fused, f)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f: Var) -> Result<Var> {
        if g.shape(f).channels != self.channels {
            return Err(TensorError::Shape(format!(
                "block expects {} channels, got {}",
                self.channels,
                g.shape(f).channels
            )));
        }
        let m = self.fused(g, p, f)?;
        let d = match &self.distribution {
            DistributionStage::Attention(gda) => gda.forward(g, p, m)?,
            DistributionStage::Plain(conv) => {
                let y = conv.forward(g, p, m)?;
                g.add(y, m)?
            }
        };
        let r = self.residual_conv.forward(g, p, f)?;
        let d = g.add(d, r)?;
        g.add(d, m)
    }
}
