//! Synthetic adverse weather: haze, rain and snow generators, a procedural
//! clean-scene source, dataset assembly and paired augmentation.

mod augment;
mod dataset;
mod image_io;
pub mod scene;
mod synth;

use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

pub use augment::{augment, Transform};
pub use dataset::{
    build_dataset, list_images, load_pairs, BuiltDataset, DatasetManifest, ManifestEntry, Pair, Split,
    TEST_MANIFEST, TRAIN_MANIFEST,
};
pub use image_io::{load_image, quantize, save_image};
pub use synth::{
    apply, gaussian_blur, rain_layer, snow_layer, synth_haze, synth_rain, synth_snow, Degradation,
    DegradationSpec, DepthMap, HazeParams, RainParams, SnowParams, WeatherKind, MIN_DEPTH,
};

/// RGB image as a (1, H, W, 3) tensor with values in [0, 1].
pub type Image = Tensor<f32>;

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("parameter error: {0}")]
    Param(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {message}")]
    Image { path: String, message: String },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl WeatherError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        WeatherError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
