//! The encoder-decoder: two downscaling feature embedding layers, a stack of
//! triplet attention blocks, two upscaling feature embedding layers.

use std::fmt;
use std::str::FromStr;

use super::params::{Bound, ConvParams, ParamStore};
use super::tab::{Components, TaBlock};
use crate::tensor::{kernels, Graph, Real, Result, Shape, Tensor, TensorError, Var};

/// Rows of the component ablation. `Net5` has the `Net4` architecture and
/// only switches the frequency loss on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    Net1,
    Net2,
    Net3,
    Net4,
    #[default]
    Net5,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Net1, Variant::Net2, Variant::Net3, Variant::Net4, Variant::Net5];

    pub fn components(self) -> Components {
        match self {
            Variant::Net1 => Components {
                lpa: false,
                gsa: false,
                gda: false,
            },
            Variant::Net2 => Components {
                lpa: true,
                gsa: false,
                gda: false,
            },
            Variant::Net3 => Components {
                lpa: true,
                gsa: true,
                gda: false,
            },
            Variant::Net4 | Variant::Net5 => Components::ALL,
        }
    }

    pub fn uses_fft_loss(self) -> bool {
        self == Variant::Net5
    }

    pub fn code(self) -> u8 {
        match self {
            Variant::Net1 => 1,
            Variant::Net2 => 2,
            Variant::Net3 => 3,
            Variant::Net4 => 4,
            Variant::Net5 => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Variant::ALL.get((code as usize).wrapping_sub(1)).copied()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Net{}", self.code())
    }
}

impl FromStr for Variant {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        lower
            .strip_prefix("net")
            .and_then(|d| d.parse::<u8>().ok())
            .and_then(Variant::from_code)
            .ok_or_else(|| TensorError::Usage(format!("unknown variant '{s}', expected Net1..Net5")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    pub base_channels: usize,
    pub num_tabs: usize,
    pub downscale_stages: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub use_global_residual: bool,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            num_tabs: 2,
            downscale_stages: 2,
            in_channels: 3,
            out_channels: 3,
            use_global_residual: true,
            seed: 0,
            variant: Variant::Net5,
        }
    }
}

/// Target of the full-scale configuration search, in parameters.
pub const FULL_SCALE_PARAMS: usize = 9_000_000;

impl NetworkConfig {
    pub fn tiny() -> Self {
        Self {
            base_channels: 4,
            num_tabs: 2,
            ..Self::default()
        }
    }

    /// Input side lengths must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.downscale_stages
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || !self.base_channels.is_multiple_of(2) {
            return Err(TensorError::Param(format!(
                "base_channels must be even and positive, got {}",
                self.base_channels
            )));
        }
        if self.num_tabs == 0 {
            return Err(TensorError::Param("num_tabs must be >= 1".into()));
        }
        if self.downscale_stages != 2 {
            return Err(TensorError::Param(format!(
                "downscale_stages is fixed at 2, got {}",
                self.downscale_stages
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(TensorError::Param("image channel counts must be >= 1".into()));
        }
        if self.use_global_residual && self.in_channels != self.out_channels {
            return Err(TensorError::Param(
                "global residual needs equal input and output channels".into(),
            ));
        }
        Ok(())
    }

    /// Width and depth whose parameter count lands closest to
    /// [`FULL_SCALE_PARAMS`].
    pub fn full_scale() -> Self {
        let mut best = (usize::MAX, Self::default());
        for base in (8..=64).step_by(2) {
            for tabs in 1..=16 {
                let cfg = Self {
                    base_channels: base,
                    num_tabs: tabs,
                    ..Self::default()
                };
                let n = param_count_for(&cfg).expect("valid search config");
                let dist = n.abs_diff(FULL_SCALE_PARAMS);
                if dist < best.0 {
                    best = (dist, cfg);
                }
            }
        }
        best.1
    }
}

/// conv - ReLU - conv with an identity skip.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

impl ResBlock {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, c: usize) -> Self {
        Self {
            conv1: ConvParams::same(store, &format!("{name}.conv1"), 3, c, c),
            conv2: ConvParams::same(store, &format!("{name}.conv2"), 3, c, c),
        }
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = self.conv1.forward(g, p, x)?;
        let y = g.relu(y);
        let y = self.conv2.forward(g, p, y)?;
        g.add(y, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Down,
    Up,
}

/// Feature embedding layer: a resampling convolution followed by three
/// residual blocks. Down: stride-2 conv doubling channels. Up: nearest x2
/// upsample then a conv halving channels.
#[derive(Debug, Clone)]
pub struct Fel {
    pub scale: Scale,
    pub conv: ConvParams,
    pub blocks: [ResBlock; 3],
}

impl Fel {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, scale: Scale, c_in: usize) -> Self {
        let (conv, c_out) = match scale {
            Scale::Down => (
                ConvParams::new(store, &format!("{name}.conv"), (3, 3), c_in, 2 * c_in, 2, (1, 1), false),
                2 * c_in,
            ),
            Scale::Up => (ConvParams::same(store, &format!("{name}.conv"), 3, c_in, c_in / 2), c_in / 2),
        };
        let blocks = [0, 1, 2].map(|i| ResBlock::new(store, &format!("{name}.res{i}"), c_out));
        Self { scale, conv, blocks }
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let x = match self.scale {
            Scale::Down => x,
            Scale::Up => g.upsample2x(x),
        };
        let mut y = self.conv.forward(g, p, x)?;
        for block in &self.blocks {
            y = block.forward(g, p, y)?;
        }
        Ok(y)
    }
}

#[derive(Debug, Clone)]
pub struct TaNet<T> {
    config: NetworkConfig,
    store: ParamStore<T>,
    head: ConvParams,
    down: Vec<Fel>,
    tabs: Vec<TaBlock>,
    up: Vec<Fel>,
    tail: ConvParams,
}

fn build<T: Real>(
    config: &NetworkConfig,
    mut store: ParamStore<T>,
    zero_tail: bool,
) -> Result<TaNet<T>> {
    config.validate()?;
    let c = config.base_channels;
    let head = ConvParams::same(&mut store, "head", 3, config.in_channels, c);
    let down = vec![
        Fel::new(&mut store, "down0", Scale::Down, c),
        Fel::new(&mut store, "down1", Scale::Down, 2 * c),
    ];
    let deep = 4 * c;
    let parts = config.variant.components();
    let tabs = (0..config.num_tabs)
        .map(|i| TaBlock::new(&mut store, &format!("tab{i}"), deep, parts))
        .collect::<Result<Vec<_>>>()?;
    let up = vec![
        Fel::new(&mut store, "up0", Scale::Up, deep),
        Fel::new(&mut store, "up1", Scale::Up, 2 * c),
    ];
    let tail = ConvParams::new(&mut store, "tail", (3, 3), c, config.out_channels, 1, (1, 1), zero_tail);
    Ok(TaNet {
        config: *config,
        store,
        head,
        down,
        tabs,
        up,
        tail,
    })
}

/// Parameter count of a configuration without allocating its weights.
pub fn param_count_for(config: &NetworkConfig) -> Result<usize> {
    Ok(build::<f32>(config, ParamStore::shapes_only(), true)?.store.count())
}

impl<T: Real> TaNet<T> {
    /// Seeded fan-in uniform init, zero biases, unit gamma, zero beta and a
    /// zero tail, so that with the global residual the fresh model is the
    /// identity map.
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        build(config, ParamStore::new(config.seed), true)
    }

    /// Same as [`TaNet::new`] but with a randomly initialized tail.
    pub fn with_random_tail(config: &NetworkConfig) -> Result<Self> {
        build(config, ParamStore::new(config.seed), false)
    }

    /// Model for one ablation row.
    pub fn ablation_variant(config: &NetworkConfig, variant: Variant) -> Result<Self> {
        Self::new(&NetworkConfig { variant, ..*config })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    pub fn blocks(&self) -> &[TaBlock] {
        &self.tabs
    }

    pub fn cast<U: Real>(&self) -> TaNet<U> {
        TaNet {
            config: self.config,
            store: self.store.cast(),
            head: self.head,
            down: self.down.clone(),
            tabs: self.tabs.clone(),
            up: self.up.clone(),
            tail: self.tail,
        }
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        let m = self.config.size_multiple();
        if s.channels != self.config.in_channels {
            return Err(TensorError::Shape(format!(
                "model expects {} image channels, got {}",
                self.config.in_channels, s.channels
            )));
        }
        if !s.height.is_multiple_of(m) || !s.width.is_multiple_of(m) {
            return Err(TensorError::Shape(format!(
                "image is {}x{}; height and width must be multiples of {m} (pad the input, e.g. by reflection, and crop the result)",
                s.height, s.width
            )));
        }
        Ok(())
    }

    /// Restored image on the graph. No clamping, so losses see the raw output.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<Var> {
        self.check_input(g.shape(image))?;
        let x = self.head.forward(g, p, image)?;
        let e0 = self.down[0].forward(g, p, x)?;
        let e1 = self.down[1].forward(g, p, e0)?;
        let mut t = e1;
        for block in &self.tabs {
            t = block.forward(g, p, t)?;
        }
        let t = g.add(t, e1)?;
        let u0 = self.up[0].forward(g, p, t)?;
        let u0 = g.add(u0, e0)?;
        let u1 = self.up[1].forward(g, p, u0)?;
        let out = self.tail.forward(g, p, u1)?;
        if self.config.use_global_residual {
            g.add(out, image)
        } else {
            Ok(out)
        }
    }

    /// Forward pass on a plain tensor whose sides are multiples of 4.
    pub fn forward_tensor(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let x = g.constant(image.clone());
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }

    /// Inference on an image of any size: reflection-pads to a multiple of 4,
    /// runs the network, crops back and clamps to [0, 1].
    pub fn restore(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let s = image.shape();
        let m = self.config.size_multiple();
        let pad_h = (m - s.height % m) % m;
        let pad_w = (m - s.width % m) % m;
        let padded = if pad_h + pad_w > 0 {
            kernels::reflect_pad(image, pad_h, pad_w)
        } else {
            image.clone()
        };
        let y = self.forward_tensor(&padded)?;
        let y = if pad_h + pad_w > 0 {
            kernels::crop(&y, s.height, s.width)?
        } else {
            y
        };
        Ok(y.map(|v| v.max(T::zero()).min(T::one())))
    }
}
