//! Network building blocks and the assembled restoration model.

pub mod attention;
pub mod model;
pub mod params;
pub mod tab;

pub use attention::{GdaModule, GsaModule, LpaModule, INSTANCE_NORM_EPS};
pub use model::{param_count_for, Fel, NetworkConfig, ResBlock, TaNet, Variant, FULL_SCALE_PARAMS};
pub use params::{Bound, ConvParams, Init, ParamId, ParamStore};
pub use tab::{Components, DistributionStage, GlobalBranch, TaBlock};
